#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "blockoa/errors.hpp"

namespace blockoa {

// Uniform cell-centered grid on a rectangular box. Cell (ix, iy, iz) spans
// [ix*dx, (ix+1)*dx) x [iy*dy, (iy+1)*dy) x [iz*dz, (iz+1)*dz) and is
// addressed as flat = ix + nx*(iy + ny*iz): x fastest, z slowest.
struct GridSpec {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    double lx = 1.0;  // extent in meters
    double ly = 1.0;
    double lz = 1.0;

    [[nodiscard]] std::int64_t cell_count() const {
        return static_cast<std::int64_t>(nx) * ny * nz;
    }
    [[nodiscard]] double dx() const { return lx / nx; }
    [[nodiscard]] double dy() const { return ly / ny; }
    [[nodiscard]] double dz() const { return lz / nz; }
    [[nodiscard]] double cell_volume() const { return dx() * dy() * dz(); }

    [[nodiscard]] std::int64_t flat(int ix, int iy, int iz) const {
        return ix + static_cast<std::int64_t>(nx) *
                        (iy + static_cast<std::int64_t>(ny) * iz);
    }

    [[nodiscard]] std::array<double, 3> center(int ix, int iy, int iz) const {
        return {(ix + 0.5) * dx(), (iy + 0.5) * dy(), (iz + 0.5) * dz()};
    }

    // True when the cell touches any of the six box faces.
    [[nodiscard]] bool boundary_adjacent(int ix, int iy, int iz) const {
        return ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1 || iz == 0 ||
               iz == nz - 1;
    }

    void validate() const {
        if (nx < 1 || ny < 1 || nz < 1)
            throw InvalidSpecError("grid: cell counts must be >= 1");
        if (!(lx > 0.0) || !(ly > 0.0) || !(lz > 0.0))
            throw InvalidSpecError("grid: extents must be positive");
    }

    bool operator==(const GridSpec&) const = default;
};

enum class Unit {
    dimensionless,
    conductivity_w_per_m_k,
    power_density_w_per_m3,
    temperature_c,
};

// One double per cell, stored in flat cell order.
struct ScalarField {
    GridSpec grid;
    Unit unit = Unit::dimensionless;
    std::vector<double> values;

    static ScalarField constant(const GridSpec& g, Unit u, double v) {
        return {g, u, std::vector<double>(static_cast<std::size_t>(g.cell_count()), v)};
    }

    [[nodiscard]] double& at(int ix, int iy, int iz) {
        return values[static_cast<std::size_t>(grid.flat(ix, iy, iz))];
    }
    [[nodiscard]] double at(int ix, int iy, int iz) const {
        return values[static_cast<std::size_t>(grid.flat(ix, iy, iz))];
    }

    void check_shape() const {
        if (values.size() != static_cast<std::size_t>(grid.cell_count()))
            throw DimensionMismatchError("field length does not match grid");
    }
};

}  // namespace blockoa
