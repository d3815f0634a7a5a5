#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blockoa/discretize.hpp"
#include "blockoa/errors.hpp"

namespace blockoa {

struct SolverConfig {
    enum class Precond { none, jacobi };

    double rel_tol = 1e-9;  // converged when ||b - A x||_2 / ||b||_2 <= rel_tol
    int max_iter = 10000;
    Precond preconditioner = Precond::none;

    void validate() const;  // throws InvalidConfigError
};

// Shared by cg (one entry per vector) and block_cg (one per column).
struct SolveReport {
    int iterations = 0;
    std::vector<double> final_rel_residual;
    std::vector<char> converged;  // avoids vector<bool> proxy pitfalls
    double wall_time = 0.0;       // seconds
    std::int64_t matvec_count = 0;

    [[nodiscard]] bool all_converged() const;
};

struct CgResult {
    std::vector<double> x;
    SolveReport report;
};

// Called after each iterate update with (iteration number, current x);
// used by convergence-bound tests to inspect the exact error history.
using IterationCallback =
    std::function<void(int iteration, std::span<const double> x)>;

// Conjugate gradient from x0 = 0 with optional Jacobi preconditioning.
// The recurrence residual drives iteration; convergence is confirmed against
// the true residual before the solver reports success, and the report always
// carries the true relative residual. Never throws on non-convergence: the
// best iterate comes back with converged[0] = false.
CgResult cg(const CsrMatrix& a, std::span<const double> b,
            const SolverConfig& cfg, const IterationCallback& on_iterate = {});
CgResult cg(const DiscreteOperator& op, std::span<const double> b,
            const SolverConfig& cfg, const IterationCallback& on_iterate = {});

// Dense row-major n x s multi-vector.
struct MultiVector {
    std::int64_t n = 0;
    int s = 0;
    std::vector<double> data;  // data[i*s + j]

    MultiVector() = default;
    MultiVector(std::int64_t n_, int s_)
        : n(n_), s(s_), data(static_cast<std::size_t>(n_) * s_, 0.0) {}

    [[nodiscard]] double& at(std::int64_t i, int j) {
        return data[static_cast<std::size_t>(i) * s + j];
    }
    [[nodiscard]] double at(std::int64_t i, int j) const {
        return data[static_cast<std::size_t>(i) * s + j];
    }

    void set_column(int j, std::span<const double> v);
    [[nodiscard]] std::vector<double> column(int j) const;
};

struct BlockCgResult {
    MultiVector x;
    SolveReport report;  // one residual/flag per column
};

// Block conjugate gradient sharing one block Krylov space across all s
// right-hand sides. Columns are deflated (frozen and removed from the active
// block) as they converge; the small s x s systems are solved by pivoted
// Cholesky so rank-deficient blocks (duplicate or converged-out columns)
// never break the iteration. iterations counts block steps.
BlockCgResult block_cg(const CsrMatrix& a, const MultiVector& b,
                       const SolverConfig& cfg);
BlockCgResult block_cg(const DiscreteOperator& op, const MultiVector& b,
                       const SolverConfig& cfg);

// 2 ((sqrt(k)-1)/(sqrt(k)+1))^m e0, the classical CG A-norm error bound.
// Throws InvalidKappaError for kappa < 1.
double cg_error_bound(double kappa, int m, double e0);

}  // namespace blockoa
