#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "blockoa/dataset.hpp"

namespace blockoa {

struct WriteOptions {
    bool overwrite = false;
};

struct WriteSummary {
    std::filesystem::path dir;
    std::int64_t n_data = 0;
    std::int64_t payload_bytes_per_file = 0;
};

// Lays out manifest.json + k.bin/q.bin/u.bin, each binary the stacked
// samples as little-endian float64 in flat cell order. The directory is
// staged next to `dir` and renamed into place, so readers never observe a
// half-written dataset. Throws ExistsError when `dir` already holds a
// manifest and overwrite is not set.
WriteSummary write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                           const WriteOptions& opts = {});

// Rebuilds the Dataset; file sizes are checked against the manifest before
// any payload is read. Throws CorruptManifestError / SizeMismatchError.
Dataset read_dataset(const std::filesystem::path& dir);

struct ValidationReport {
    std::int64_t pass_count = 0;
    std::int64_t fail_count = 0;
    double max_residual = 0.0;
    std::vector<double> residuals;  // per sample, stored order
};

// Re-assembles one operator per distinct conductivity field and recomputes
// ||A u - (M q + g)|| / ||M q + g|| for every stored sample. A sample whose
// k digest contradicts the manifest counts as a failure.
ValidationReport validate_dataset(const std::filesystem::path& dir, double tol);

}  // namespace blockoa
