#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "blockoa/discretize.hpp"
#include "blockoa/grid.hpp"

namespace blockoa {

// Wall time per pipeline phase plus solver work counters. solve_s covers the
// direct baseline's per-sample solves; basis_solve_s the block solves feeding
// the combination path. total_s includes packaging overhead not attributed
// to a named phase.
struct PhaseTimings {
    double basis_solve_s = 0.0;
    double combine_s = 0.0;
    double operator_action_s = 0.0;
    double solve_s = 0.0;
    double total_s = 0.0;
    std::int64_t iterations_total = 0;
    std::int64_t matvecs_total = 0;
};

enum class Provenance { blockoa, direct };

const char* to_string(Provenance p);

struct Sample {
    std::uint64_t floorplan_id = 0;
    ScalarField k;  // W/(m*K)
    ScalarField q;  // W/m^3
    ScalarField u;  // degC
    Provenance provenance = Provenance::direct;
    double residual = 0.0;  // ||A u - (M q + g)||/||M q + g|| at creation
};

// Everything the manifest carries besides grid/bc (those live on Dataset).
// n_data always equals the number of stored samples; requested_n_data and
// dropped_count reconcile it with what the run asked for.
struct DatasetManifest {
    int format_version = 1;
    std::string method;  // "blockoa" | "direct"
    std::int64_t n_data = 0;
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> floorplan_ids;  // one per sample
    std::vector<std::pair<std::uint64_t, std::uint64_t>> floorplan_digests;
    PhaseTimings timings;
    double residual_tol_claimed = 0.0;
    std::string tool_version;
    std::string config_echo;  // canonical run-config JSON
    std::int64_t requested_n_data = 0;
    std::int64_t dropped_count = 0;
};

struct Dataset {
    GridSpec grid;
    BoundarySpec bc;
    std::vector<Sample> samples;
    DatasetManifest manifest;
};

}  // namespace blockoa
