#include "blockoa/discretize.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <ostream>

#include "blockoa/errors.hpp"

namespace blockoa {

BoundarySpec BoundarySpec::uniform_dirichlet(double u0) {
    BoundarySpec bc;
    bc.faces.fill(Dirichlet{u0});
    return bc;
}

BoundarySpec BoundarySpec::uniform_robin(double h, double u_inf) {
    BoundarySpec bc;
    bc.faces.fill(Robin{h, u_inf});
    return bc;
}

BoundarySpec BoundarySpec::mixed(double h, double u_inf, double side_u0) {
    BoundarySpec bc;
    bc.faces.fill(Dirichlet{side_u0});
    bc.faces[face_z_lo] = Robin{h, u_inf};
    bc.faces[face_z_hi] = Robin{h, u_inf};
    return bc;
}

void BoundarySpec::validate() const {
    for (const auto& f : faces)
        if (const Robin* r = std::get_if<Robin>(&f); r && !(r->h > 0.0))
            throw NonPositiveHtcError("boundary: Robin h must be > 0");
}

void CsrMatrix::apply(std::span<const double> x, std::span<double> y) const {
    if (static_cast<std::int64_t>(x.size()) != n ||
        static_cast<std::int64_t>(y.size()) != n)
        throw DimensionMismatchError("matvec: vector length != n");
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::int64_t p = row_ptr[static_cast<std::size_t>(i)];
             p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
            acc += val[static_cast<std::size_t>(p)] *
                   x[static_cast<std::size_t>(col[static_cast<std::size_t>(p)])];
        y[static_cast<std::size_t>(i)] = acc;
    }
}

namespace {

// Fixed-width row kernel: the running row of Y stays in registers across
// the (short) nonzero list instead of round-tripping through memory.
template <int S>
void apply_block_fixed(const CsrMatrix& m, const double* x, double* y) {
    for (std::int64_t i = 0; i < m.n; ++i) {
        double acc[S] = {};
        for (std::int64_t p = m.row_ptr[static_cast<std::size_t>(i)];
             p < m.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
            const double a = m.val[static_cast<std::size_t>(p)];
            const double* xr =
                x + static_cast<std::int64_t>(m.col[static_cast<std::size_t>(p)]) * S;
            for (int j = 0; j < S; ++j) acc[j] += a * xr[j];
        }
        double* yi = y + i * S;
        for (int j = 0; j < S; ++j) yi[j] = acc[j];
    }
}

}  // namespace

void CsrMatrix::apply_block(const double* x, int s, double* y) const {
    // One CSR traversal feeds all s columns; the inner loop runs over the
    // contiguous row slice of X, which vectorizes cleanly.
    switch (s) {
        case 4: apply_block_fixed<4>(*this, x, y); return;
        case 8: apply_block_fixed<8>(*this, x, y); return;
        case 10: apply_block_fixed<10>(*this, x, y); return;
        case 16: apply_block_fixed<16>(*this, x, y); return;
        default: break;
    }
    for (std::int64_t i = 0; i < n; ++i) {
        double* yi = y + i * s;
        for (int j = 0; j < s; ++j) yi[j] = 0.0;
        for (std::int64_t p = row_ptr[static_cast<std::size_t>(i)];
             p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
            const double a = val[static_cast<std::size_t>(p)];
            const double* xr = x + static_cast<std::int64_t>(col[static_cast<std::size_t>(p)]) * s;
            for (int j = 0; j < s; ++j) yi[j] += a * xr[j];
        }
    }
}

namespace {

// Conductance of the face between two cells: harmonic mean of the two cell
// conductivities times area over center distance. Commutative in (ki, kj),
// so both owners compute bitwise-identical values.
inline double interior_conductance(double ki, double kj, double area,
                                   double delta) {
    return (2.0 * ki * kj / (ki + kj)) * (area / delta);
}

struct FaceGeometry {
    double area;
    double delta;  // center-to-center (interior) or cell size along normal
};

}  // namespace

DiscreteOperator assemble(const ScalarField& k, const GridSpec& grid,
                          const BoundarySpec& bc) {
    grid.validate();
    bc.validate();
    if (k.grid != grid)
        throw DimensionMismatchError("assemble: conductivity grid mismatch");
    k.check_shape();
    for (double v : k.values)
        if (!(v > 0.0))
            throw NonPositiveConductivityError("assemble: k must be > 0 everywhere");

    const std::int64_t n = grid.cell_count();
    if (n > std::numeric_limits<std::int32_t>::max())
        throw InvalidSpecError("assemble: grid too large for 32-bit column indices");

    const double dx = grid.dx(), dy = grid.dy(), dz = grid.dz();
    const FaceGeometry fx{dy * dz, dx}, fy{dx * dz, dy}, fz{dx * dy, dz};
    const double volume = grid.cell_volume();

    DiscreteOperator op;
    op.grid = grid;
    op.boundary = bc;
    op.k_field_digest = field_digest(k);
    op.g.assign(static_cast<std::size_t>(n), 0.0);
    op.volumes.assign(static_cast<std::size_t>(n), volume);

    CsrMatrix& a = op.A;
    a.n = n;
    a.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    a.col.reserve(static_cast<std::size_t>(n) * 7);
    a.val.reserve(static_cast<std::size_t>(n) * 7);

    const auto& kv = k.values;

    // Boundary face contribution: conductance into the diagonal, scaled
    // datum into g. Dirichlet eliminates the wall value at half-cell
    // distance; Robin chains half-cell conduction with convection.
    auto boundary_face = [&](int face, double k_cell, const FaceGeometry& fg,
                             double& diag, double& lift) {
        const FaceCondition& cond = bc.faces[static_cast<std::size_t>(face)];
        if (const Dirichlet* d = std::get_if<Dirichlet>(&cond)) {
            const double g_face = (2.0 * k_cell / fg.delta) * fg.area;
            diag += g_face;
            lift += g_face * d->u0;
        } else {
            const Robin& r = std::get<Robin>(cond);
            const double h_eff = 1.0 / (fg.delta / (2.0 * k_cell) + 1.0 / r.h);
            const double g_face = h_eff * fg.area;
            diag += g_face;
            lift += g_face * r.u_inf;
        }
    };

    for (int iz = 0; iz < grid.nz; ++iz) {
        for (int iy = 0; iy < grid.ny; ++iy) {
            for (int ix = 0; ix < grid.nx; ++ix) {
                const std::int64_t i = grid.flat(ix, iy, iz);
                const double k_c = kv[static_cast<std::size_t>(i)];
                double diag = 0.0;
                double lift = 0.0;

                // Neighbor order fixed z-, y-, x-, x+, y+, z+: keeps columns
                // sorted and the diagonal sum deterministic.
                double g_zm = 0, g_ym = 0, g_xm = 0, g_xp = 0, g_yp = 0, g_zp = 0;

                if (iz > 0)
                    g_zm = interior_conductance(
                        k_c, kv[static_cast<std::size_t>(grid.flat(ix, iy, iz - 1))],
                        fz.area, fz.delta);
                else
                    boundary_face(face_z_lo, k_c, fz, diag, lift);
                if (iy > 0)
                    g_ym = interior_conductance(
                        k_c, kv[static_cast<std::size_t>(grid.flat(ix, iy - 1, iz))],
                        fy.area, fy.delta);
                else
                    boundary_face(face_y_lo, k_c, fy, diag, lift);
                if (ix > 0)
                    g_xm = interior_conductance(
                        k_c, kv[static_cast<std::size_t>(grid.flat(ix - 1, iy, iz))],
                        fx.area, fx.delta);
                else
                    boundary_face(face_x_lo, k_c, fx, diag, lift);
                if (ix < grid.nx - 1)
                    g_xp = interior_conductance(
                        k_c, kv[static_cast<std::size_t>(grid.flat(ix + 1, iy, iz))],
                        fx.area, fx.delta);
                else
                    boundary_face(face_x_hi, k_c, fx, diag, lift);
                if (iy < grid.ny - 1)
                    g_yp = interior_conductance(
                        k_c, kv[static_cast<std::size_t>(grid.flat(ix, iy + 1, iz))],
                        fy.area, fy.delta);
                else
                    boundary_face(face_y_hi, k_c, fy, diag, lift);
                if (iz < grid.nz - 1)
                    g_zp = interior_conductance(
                        k_c, kv[static_cast<std::size_t>(grid.flat(ix, iy, iz + 1))],
                        fz.area, fz.delta);
                else
                    boundary_face(face_z_hi, k_c, fz, diag, lift);

                diag += g_zm + g_ym + g_xm + g_xp + g_yp + g_zp;

                auto push = [&](std::int64_t j, double v) {
                    a.col.push_back(static_cast<std::int32_t>(j));
                    a.val.push_back(v);
                };
                if (g_zm != 0.0) push(grid.flat(ix, iy, iz - 1), -g_zm);
                if (g_ym != 0.0) push(grid.flat(ix, iy - 1, iz), -g_ym);
                if (g_xm != 0.0) push(grid.flat(ix - 1, iy, iz), -g_xm);
                push(i, diag);
                if (g_xp != 0.0) push(grid.flat(ix + 1, iy, iz), -g_xp);
                if (g_yp != 0.0) push(grid.flat(ix, iy + 1, iz), -g_yp);
                if (g_zp != 0.0) push(grid.flat(ix, iy, iz + 1), -g_zp);

                a.row_ptr[static_cast<std::size_t>(i) + 1] =
                    static_cast<std::int64_t>(a.col.size());
                op.g[static_cast<std::size_t>(i)] = lift;
            }
        }
    }
    return op;
}

std::vector<double> apply(const DiscreteOperator& op,
                          std::span<const double> x) {
    std::vector<double> y(static_cast<std::size_t>(op.A.n), 0.0);
    op.A.apply(x, y);
    return y;
}

std::vector<double> rhs_from_power(const DiscreteOperator& op,
                                   const ScalarField& q) {
    if (q.grid != op.grid)
        throw DimensionMismatchError("rhs_from_power: power grid mismatch");
    q.check_shape();
    const std::size_t n = q.values.size();
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i)
        b[i] = op.volumes[i] * q.values[i] + op.g[i];
    return b;
}

ScalarField power_from_rhs(const DiscreteOperator& op,
                           std::span<const double> b) {
    if (static_cast<std::int64_t>(b.size()) != op.A.n)
        throw DimensionMismatchError("power_from_rhs: vector length != n");
    ScalarField q{op.grid, Unit::power_density_w_per_m3,
                  std::vector<double>(b.size())};
    for (std::size_t i = 0; i < b.size(); ++i)
        q.values[i] = (b[i] - op.g[i]) / op.volumes[i];
    return q;
}

static double norm2(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double relative_residual(const DiscreteOperator& op, std::span<const double> u,
                         const ScalarField& q) {
    const std::vector<double> b = rhs_from_power(op, q);
    std::vector<double> r(b.size());
    op.A.apply(u, r);
    for (std::size_t i = 0; i < b.size(); ++i) r[i] = b[i] - r[i];
    const double nb = norm2(b);
    const double nr = norm2(r);
    if (nb == 0.0)
        return nr == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return nr / nb;
}

void write_coo(const CsrMatrix& a, std::ostream& out) {
    char line[96];
    for (std::int64_t i = 0; i < a.n; ++i) {
        for (std::int64_t p = a.row_ptr[static_cast<std::size_t>(i)];
             p < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
            std::snprintf(line, sizeof line, "%lld %d %.17g\n",
                          static_cast<long long>(i),
                          a.col[static_cast<std::size_t>(p)],
                          a.val[static_cast<std::size_t>(p)]);
            out << line;
        }
    }
}

std::uint64_t field_digest(const ScalarField& f) {
    // FNV-1a over grid shape then raw little-endian value bytes.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_u64 = [&h](std::uint64_t word) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (word >> (8 * byte)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix_u64(static_cast<std::uint64_t>(f.grid.nx));
    mix_u64(static_cast<std::uint64_t>(f.grid.ny));
    mix_u64(static_cast<std::uint64_t>(f.grid.nz));
    for (double v : f.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        mix_u64(bits);
    }
    return h;
}

}  // namespace blockoa
