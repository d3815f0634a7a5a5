#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "blockoa/grid.hpp"

namespace blockoa {

struct Dirichlet {
    double u0 = 0.0;  // degC
};

struct Robin {
    double h = 0.0;      // W/(m^2*K), must be > 0
    double u_inf = 0.0;  // degC
};

using FaceCondition = std::variant<Dirichlet, Robin>;

// Face order everywhere: x-, x+, y-, y+, z-, z+.
enum FaceIndex : int { face_x_lo = 0, face_x_hi, face_y_lo, face_y_hi, face_z_lo, face_z_hi };

struct BoundarySpec {
    std::array<FaceCondition, 6> faces{Dirichlet{}, Dirichlet{}, Dirichlet{},
                                       Dirichlet{}, Dirichlet{}, Dirichlet{}};

    static BoundarySpec uniform_dirichlet(double u0);
    static BoundarySpec uniform_robin(double h, double u_inf);
    // Robin on z faces (package/heatsink paths), Dirichlet on the four sides.
    static BoundarySpec mixed(double h, double u_inf, double side_u0);

    void validate() const;  // throws NonPositiveHtcError
};

// Plain CSR with column indices sorted within each row.
struct CsrMatrix {
    std::int64_t n = 0;
    std::vector<std::int64_t> row_ptr;  // length n+1
    std::vector<std::int32_t> col;
    std::vector<double> val;

    [[nodiscard]] std::int64_t nnz() const {
        return static_cast<std::int64_t>(val.size());
    }

    // y = A x. Per-row sequential accumulation, so results are bitwise
    // reproducible and rows may be processed concurrently.
    void apply(std::span<const double> x, std::span<double> y) const;

    // Y = A X for row-major n x s blocks; one CSR traversal serves all
    // columns. Same accumulation order per column as apply().
    void apply_block(const double* x, int s, double* y) const;
};

// A u = M q + g discretization of -div(k grad u) = q on a cell-centered
// grid. A in W/K, g in W, volumes (the diagonal of M) in m^3.
struct DiscreteOperator {
    CsrMatrix A;
    std::vector<double> g;
    std::vector<double> volumes;
    GridSpec grid;
    BoundarySpec boundary;
    std::uint64_t k_field_digest = 0;
};

// 7-point finite-volume assembly. Interior faces use the harmonic-mean
// conductance 2 k_i k_j / (k_i + k_j) * area / delta; Dirichlet faces the
// half-cell conductance (2 k / delta) * area; Robin faces the series
// coefficient 1 / (delta/(2k) + 1/h) * area. Off-diagonal entries are
// computed once per face, so A is symmetric down to the last bit.
DiscreteOperator assemble(const ScalarField& k, const GridSpec& grid,
                          const BoundarySpec& bc);

std::vector<double> apply(const DiscreteOperator& op, std::span<const double> x);

// b = M q + g.
std::vector<double> rhs_from_power(const DiscreteOperator& op,
                                   const ScalarField& q);

// q = M^-1 (b - g); exact inverse of rhs_from_power up to one rounding per
// element.
ScalarField power_from_rhs(const DiscreteOperator& op,
                           std::span<const double> b);

// ||A u - (M q + g)||_2 / ||M q + g||_2.
double relative_residual(const DiscreteOperator& op, std::span<const double> u,
                         const ScalarField& q);

// Diagnostic export: "row col value" triples, 0-based, row-major, 17
// significant digits.
void write_coo(const CsrMatrix& a, std::ostream& out);

// Order-sensitive content hash of grid shape plus raw value bits.
std::uint64_t field_digest(const ScalarField& f);

}  // namespace blockoa
