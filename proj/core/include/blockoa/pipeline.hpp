#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blockoa/chip.hpp"
#include "blockoa/dataset.hpp"
#include "blockoa/discretize.hpp"
#include "blockoa/solvers.hpp"

namespace blockoa {

// Additive perturbation of combined solution fields. Support is interior
// cells only: every cell touching a chip face gets exactly zero so boundary
// data survives the combination untouched.
struct NoiseConfig {
    enum class Kind { none, uniform, gaussian };

    Kind kind = Kind::none;
    double lo = 0.0;  // uniform bounds, degC
    double hi = 0.0;
    double sigma = 0.0;  // gaussian, degC

    void validate() const;  // throws InvalidConfigError
};

struct GenerationConfig {
    std::int64_t n_data = 0;
    int n_basis = 1;
    int n_k = 1;
    SolverConfig solver;
    NoiseConfig noise;
    std::uint64_t master_seed = 0;
    GridSpec grid;
    BoundarySpec bc;
    ChipSpec chip;
    int threads = 1;

    // Basis columns per floorplan group; n_basis must divide evenly.
    [[nodiscard]] int eta() const { return n_basis / n_k; }
    void validate() const;  // throws InvalidConfigError / InvalidSpecError
};

// One floorplan group: its operator and the eta solved columns A X = B.
struct BasisGroup {
    std::uint64_t floorplan_id = 0;
    Floorplan floorplan;
    ScalarField k_field;
    DiscreteOperator op;
    MultiVector x;  // n x eta solutions
    MultiVector b;  // n x eta right-hand sides
    std::vector<ScalarField> q_fields;
    SolveReport report;
};

struct BasisSet {
    std::vector<BasisGroup> groups;

    [[nodiscard]] int n_basis() const;
    [[nodiscard]] bool empty() const { return groups.empty(); }
};

// Builds n_k floorplans and operators, samples eta power fields per group,
// and solves each group with block_cg. Throws NotConvergedError if any
// group fails to reach tolerance (a bad basis would poison every sample).
BasisSet generate_basis(const GenerationConfig& cfg);

struct Combination {
    std::vector<double> x;        // combined solution, length n
    std::vector<double> weights;  // alpha, length n_basis, sums to 1
};

// Normalized Gaussian weights: mu_i ~ N(0,1), alpha_i = mu_i / sum(mu).
// Draws are resampled while |sum(mu)| < 1e-6. Deterministic per seed.
std::vector<double> draw_weights(int n_basis, std::uint64_t sample_seed);

// Noise vector per NoiseConfig: zero on boundary-adjacent cells, i.i.d.
// draws in flat cell order on the interior.
std::vector<double> sample_noise(const GridSpec& grid, const NoiseConfig& noise,
                                 std::uint64_t seed);

// x = sum_i weights[i] * basis column i (+ noise if given). Columns are
// indexed across groups in order; zero weights are skipped outright, so a
// unit weight vector reproduces its basis column bitwise.
std::vector<double> combine_from_weights(const BasisSet& basis,
                                         std::span<const double> weights,
                                         std::span<const double> noise = {});

// Full sampling path: weights from (seed, "mu"), noise from (seed, "eps").
Combination combine_basis(const BasisSet& basis, std::uint64_t sample_seed,
                          const NoiseConfig& noise);

// q = M^-1 (A x - g) on the group's operator: one matvec, no solve. The
// triple (k_group, q, x) then satisfies the discrete equation to rounding.
ScalarField operator_action(const BasisSet& basis, int group,
                            std::span<const double> x_new);

struct GenerationResult {
    Dataset dataset;
    PhaseTimings timings;
    std::int64_t dropped = 0;  // direct baseline: non-converged, not emitted
};

// Basis solves once, then per sample: combine + operator action. Sample l
// uses group (l-1) mod n_k and a seed derived from (master_seed, l), so the
// sample stream is prefix-preserving in n_data.
GenerationResult generate_blockoa(const GenerationConfig& cfg);

// Per-sample CG baseline on the same floorplan/power streams. Non-converged
// samples are dropped and counted, never emitted.
GenerationResult generate_direct(const GenerationConfig& cfg);

// Seed for sample l (1-based), shared by both generators.
std::uint64_t sample_seed_for(std::uint64_t master_seed, std::int64_t l);

}  // namespace blockoa
