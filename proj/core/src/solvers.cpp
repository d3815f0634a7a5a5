#include "blockoa/solvers.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

namespace blockoa {

void SolverConfig::validate() const {
    if (!(rel_tol > 0.0) || !(rel_tol < 1.0))
        throw InvalidConfigError("solver: rel_tol must be in (0, 1)");
    if (max_iter < 1) throw InvalidConfigError("solver: max_iter must be >= 1");
}

bool SolveReport::all_converged() const {
    return std::all_of(converged.begin(), converged.end(),
                       [](char c) { return c != 0; });
}

void MultiVector::set_column(int j, std::span<const double> v) {
    if (static_cast<std::int64_t>(v.size()) != n)
        throw DimensionMismatchError("multivector: column length != n");
    for (std::int64_t i = 0; i < n; ++i) at(i, j) = v[static_cast<std::size_t>(i)];
}

std::vector<double> MultiVector::column(int j) const {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = at(i, j);
    return v;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// All reductions run sequentially in index order: reported residuals and
// iterates must be bitwise reproducible.
double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> jacobi_inverse(const CsrMatrix& a) {
    std::vector<double> dinv(static_cast<std::size_t>(a.n), 1.0);
    for (std::int64_t i = 0; i < a.n; ++i) {
        for (std::int64_t p = a.row_ptr[static_cast<std::size_t>(i)];
             p < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
            if (a.col[static_cast<std::size_t>(p)] == i) {
                const double d = a.val[static_cast<std::size_t>(p)];
                if (d != 0.0) dinv[static_cast<std::size_t>(i)] = 1.0 / d;
                break;
            }
        }
    }
    return dinv;
}

double true_rel_residual(const CsrMatrix& a, std::span<const double> b,
                         std::span<const double> x, double bnorm,
                         std::vector<double>& scratch) {
    a.apply(x, scratch);
    double acc = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double r = b[i] - scratch[i];
        acc += r * r;
    }
    return std::sqrt(acc) / bnorm;
}

}  // namespace

CgResult cg(const CsrMatrix& a, std::span<const double> b,
            const SolverConfig& cfg, const IterationCallback& on_iterate) {
    cfg.validate();
    if (static_cast<std::int64_t>(b.size()) != a.n)
        throw DimensionMismatchError("cg: rhs length != n");

    const auto t0 = clock_type::now();
    const std::size_t n = b.size();

    CgResult res;
    res.x.assign(n, 0.0);
    res.report.final_rel_residual = {0.0};
    res.report.converged = {1};

    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.report.wall_time = seconds_since(t0);
        return res;  // x0 = 0 already solves A x = 0
    }

    const bool jacobi = cfg.preconditioner == SolverConfig::Precond::jacobi;
    std::vector<double> dinv;
    if (jacobi) dinv = jacobi_inverse(a);

    std::vector<double> r(b.begin(), b.end());
    std::vector<double> z(n), p(n), w(n), scratch(n);

    auto apply_precond = [&](const std::vector<double>& src,
                             std::vector<double>& dst) {
        if (jacobi)
            for (std::size_t i = 0; i < n; ++i) dst[i] = dinv[i] * src[i];
        else
            std::copy(src.begin(), src.end(), dst.begin());
    };

    apply_precond(r, z);
    p = z;
    double rho = dot(r, z);

    auto& report = res.report;
    bool converged = false;

    for (int m = 1; m <= cfg.max_iter; ++m) {
        a.apply(p, w);
        ++report.matvec_count;
        const double pw = dot(p, w);
        if (!(pw > 0.0)) {  // exact breakdown: p vanished or A not SPD
            report.iterations = m - 1;
            break;
        }
        const double alpha = rho / pw;
        for (std::size_t i = 0; i < n; ++i) res.x[i] += alpha * p[i];
        for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * w[i];
        report.iterations = m;
        if (on_iterate) on_iterate(m, res.x);

        const double rr = norm2(r) / bnorm;
        if (rr <= cfg.rel_tol) {
            // Confirm against the true residual before declaring victory;
            // the recurrence can drift below it.
            const double rt = true_rel_residual(a, b, res.x, bnorm, scratch);
            ++report.matvec_count;
            if (rt <= cfg.rel_tol) {
                report.final_rel_residual[0] = rt;
                converged = true;
                break;
            }
            // Restart from the true residual and keep going.
            for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - scratch[i];
            apply_precond(r, z);
            p = z;
            rho = dot(r, z);
            continue;
        }
        apply_precond(r, z);
        const double rho_next = dot(r, z);
        const double beta = rho_next / rho;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rho = rho_next;
    }

    if (!converged) {
        report.final_rel_residual[0] =
            true_rel_residual(a, b, res.x, bnorm, scratch);
        ++report.matvec_count;
        report.converged[0] = report.final_rel_residual[0] <= cfg.rel_tol;
    }
    report.wall_time = seconds_since(t0);
    return res;
}

CgResult cg(const DiscreteOperator& op, std::span<const double> b,
            const SolverConfig& cfg, const IterationCallback& on_iterate) {
    return cg(op.A, b, cfg, on_iterate);
}

namespace {

// Row-major dense helpers for the n x s block updates. The t-outer loops
// keep the innermost stride-1 over j, which GCC vectorizes.

// out[a][b] = sum_i lhs[i][a] * rhs[i][b], s x s result.
void gram(const double* lhs, const double* rhs, std::int64_t n, int s,
          double* out) {
    std::fill(out, out + static_cast<std::size_t>(s) * s, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const double* li = lhs + i * s;
        const double* ri = rhs + i * s;
        for (int a = 0; a < s; ++a) {
            const double la = li[a];
            double* oa = out + static_cast<std::size_t>(a) * s;
            for (int bj = 0; bj < s; ++bj) oa[bj] += la * ri[bj];
        }
    }
}

// dst[i][j] += sign * sum_t src[i][t] * m[t][j]
template <int Sign>
void add_product(double* dst, const double* src, const double* m,
                 std::int64_t n, int s) {
    for (std::int64_t i = 0; i < n; ++i) {
        const double* si = src + i * s;
        double* di = dst + i * s;
        for (int t = 0; t < s; ++t) {
            const double f = Sign > 0 ? si[t] : -si[t];
            const double* mt = m + static_cast<std::size_t>(t) * s;
            for (int j = 0; j < s; ++j) di[j] += f * mt[j];
        }
    }
}

// The block iteration streams several n x s panels per step; at desk-scale n
// they live in the outer cache, so wall time tracks the number of passes.
// The three fixed-width kernels below fuse the passes of one step into
// three sweeps and keep each row's partial results in registers. They
// change only rounding (per-element accumulation order within a sweep is
// preserved), never the iteration logic.

// One sweep: W = A P, and the Gram matrix G = P^T W (upper triangle).
template <int S>
void spmm_gram_fixed(const CsrMatrix& a, const double* p, double* w,
                     double* g) {
    const std::int64_t n = a.n;
    for (std::int64_t i = 0; i < n; ++i) {
        double acc[S] = {};
        for (std::int64_t q = a.row_ptr[static_cast<std::size_t>(i)];
             q < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++q) {
            const double av = a.val[static_cast<std::size_t>(q)];
            const double* pr =
                p + static_cast<std::int64_t>(a.col[static_cast<std::size_t>(q)]) * S;
            for (int j = 0; j < S; ++j) acc[j] += av * pr[j];
        }
        double* wi = w + i * S;
        for (int j = 0; j < S; ++j) wi[j] = acc[j];
        const double* pi = p + i * S;
        for (int t = 0; t < S; ++t) {
            const double f = pi[t];
            for (int j = t; j < S; ++j) g[t * S + j] += f * acc[j];
        }
    }
}

// One sweep: X += P Alpha, R -= W Alpha, per-column ||r||^2, Z = M^-1 R,
// and S_new = R^T Z (upper triangle). dinv == nullptr means identity.
template <int S>
void update_fused_fixed(std::int64_t n, const double* p, const double* w,
                        double* x, double* r, double* z, const double* alpha,
                        const double* dinv, double* rr, double* s_new) {
    for (std::int64_t i = 0; i < n; ++i) {
        const double* pi = p + i * S;
        const double* wi = w + i * S;
        double* xi = x + i * S;
        double* ri = r + i * S;
        double* zi = z + i * S;
        double xa[S], ra[S];
        for (int j = 0; j < S; ++j) xa[j] = xi[j];
        for (int j = 0; j < S; ++j) ra[j] = ri[j];
        for (int t = 0; t < S; ++t) {
            const double pf = pi[t];
            const double wf = wi[t];
            const double* at = alpha + t * S;
            for (int j = 0; j < S; ++j) {
                xa[j] += pf * at[j];
                ra[j] -= wf * at[j];
            }
        }
        for (int j = 0; j < S; ++j) xi[j] = xa[j];
        for (int j = 0; j < S; ++j) ri[j] = ra[j];
        for (int j = 0; j < S; ++j) rr[j] += ra[j] * ra[j];
        const double di = dinv ? dinv[i] : 1.0;
        for (int j = 0; j < S; ++j) zi[j] = di * ra[j];
        for (int t = 0; t < S; ++t) {
            const double f = ra[t];
            for (int j = t; j < S; ++j) s_new[t * S + j] += f * zi[j];
        }
    }
}

// One sweep: P = Z + P Beta.
template <int S>
void p_update_fixed(std::int64_t n, double* p, const double* z,
                    const double* beta) {
    for (std::int64_t i = 0; i < n; ++i) {
        double* pi = p + i * S;
        const double* zi = z + i * S;
        double acc[S];
        for (int j = 0; j < S; ++j) acc[j] = zi[j];
        for (int t = 0; t < S; ++t) {
            const double pf = pi[t];
            const double* bt = beta + t * S;
            for (int j = 0; j < S; ++j) acc[j] += pf * bt[j];
        }
        for (int j = 0; j < S; ++j) pi[j] = acc[j];
    }
}

constexpr int kMaxFixedWidth = 16;

template <int S>
struct FusedStepKernels {
    static void spmm_gram(const CsrMatrix& a, const double* p, double* w,
                          double* g) {
        spmm_gram_fixed<S>(a, p, w, g);
    }
    static void update(std::int64_t n, const double* p, const double* w,
                       double* x, double* r, double* z, const double* alpha,
                       const double* dinv, double* rr, double* s_new) {
        update_fused_fixed<S>(n, p, w, x, r, z, alpha, dinv, rr, s_new);
    }
    static void p_update(std::int64_t n, double* p, const double* z,
                         const double* beta) {
        p_update_fixed<S>(n, p, z, beta);
    }
};

struct FusedStepVtable {
    void (*spmm_gram)(const CsrMatrix&, const double*, double*, double*);
    void (*update)(std::int64_t, const double*, const double*, double*,
                   double*, double*, const double*, const double*, double*,
                   double*);
    void (*p_update)(std::int64_t, double*, const double*, const double*);
};

template <int... S>
constexpr std::array<FusedStepVtable, sizeof...(S)> make_fused_table(
    std::integer_sequence<int, S...>) {
    return {FusedStepVtable{&FusedStepKernels<S + 1>::spmm_gram,
                            &FusedStepKernels<S + 1>::update,
                            &FusedStepKernels<S + 1>::p_update}...};
}

constexpr auto kFusedTable =
    make_fused_table(std::make_integer_sequence<int, kMaxFixedWidth>{});

void mirror_upper(double* g, int s) {
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j)
            g[static_cast<std::size_t>(j) * s + i] =
                g[static_cast<std::size_t>(i) * s + j];
}

// Solves G X = RHS for symmetric positive semidefinite G via diagonally
// pivoted Cholesky. Directions beyond the numerical rank get zero
// coefficients, which is exactly what a rank-deficient search block needs
// (duplicate or converged-out columns contribute nothing new).
class PivotedCholesky {
public:
    PivotedCholesky(const double* g, int s) : s_(s), l_(static_cast<std::size_t>(s) * s), perm_(static_cast<std::size_t>(s)) {
        std::vector<double> d(static_cast<std::size_t>(s));
        for (int i = 0; i < s; ++i) {
            perm_[static_cast<std::size_t>(i)] = i;
            d[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i) * s + i];
        }
        double max_diag = 0.0;
        for (int i = 0; i < s; ++i) max_diag = std::max(max_diag, d[static_cast<std::size_t>(i)]);
        const double cutoff =
            std::max(max_diag * s * std::numeric_limits<double>::epsilon(),
                     std::numeric_limits<double>::min());

        rank_ = s;
        for (int k = 0; k < s; ++k) {
            int piv = k;
            for (int i = k + 1; i < s; ++i)
                if (d[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])] >
                    d[static_cast<std::size_t>(perm_[static_cast<std::size_t>(piv)])])
                    piv = i;
            if (!(d[static_cast<std::size_t>(perm_[static_cast<std::size_t>(piv)])] > cutoff)) {
                rank_ = k;
                break;
            }
            std::swap(perm_[static_cast<std::size_t>(k)], perm_[static_cast<std::size_t>(piv)]);
            // Partial rows of L are position-indexed, so they move with
            // their columns when positions k and piv trade places.
            for (int t = 0; t < k; ++t) std::swap(lk(k, t), lk(piv, t));
            const int pk = perm_[static_cast<std::size_t>(k)];
            const double lkk = std::sqrt(d[static_cast<std::size_t>(pk)]);
            lk(k, k) = lkk;
            for (int i = k + 1; i < s; ++i) {
                const int pi = perm_[static_cast<std::size_t>(i)];
                double v = g[static_cast<std::size_t>(pi) * s + pk];
                for (int t = 0; t < k; ++t) v -= lk(i, t) * lk(k, t);
                const double lik = v / lkk;
                lk(i, k) = lik;
                d[static_cast<std::size_t>(pi)] -= lik * lik;
            }
        }
    }

    // X and RHS are s x m row-major; beyond-rank rows of the permuted
    // solution are zero.
    void solve(const double* rhs, int m, double* x) const {
        std::vector<double> y(static_cast<std::size_t>(s_) * m, 0.0);
        // Forward: L y = P rhs (first rank_ pivot rows).
        for (int k = 0; k < rank_; ++k) {
            const int pk = perm_[static_cast<std::size_t>(k)];
            for (int j = 0; j < m; ++j) {
                double v = rhs[static_cast<std::size_t>(pk) * m + j];
                for (int t = 0; t < k; ++t) v -= lk(k, t) * y[static_cast<std::size_t>(t) * m + j];
                y[static_cast<std::size_t>(k) * m + j] = v / lk(k, k);
            }
        }
        // Backward: L^T z = y, scatter through the permutation.
        std::fill(x, x + static_cast<std::size_t>(s_) * m, 0.0);
        for (int k = rank_ - 1; k >= 0; --k) {
            const int pk = perm_[static_cast<std::size_t>(k)];
            for (int j = 0; j < m; ++j) {
                double v = y[static_cast<std::size_t>(k) * m + j];
                for (int t = k + 1; t < rank_; ++t)
                    v -= lk(t, k) * x[static_cast<std::size_t>(perm_[static_cast<std::size_t>(t)]) * m + j];
                x[static_cast<std::size_t>(pk) * m + j] = v / lk(k, k);
            }
        }
    }

private:
    double& lk(int i, int k) { return l_[static_cast<std::size_t>(i) * s_ + k]; }
    [[nodiscard]] double lk(int i, int k) const {
        return l_[static_cast<std::size_t>(i) * s_ + k];
    }

    int s_;
    int rank_ = 0;
    std::vector<double> l_;  // row-major, pivot-order rows
    std::vector<int> perm_;
};

// Drops non-surviving columns of a row-major n x s block in place.
void compact_columns(std::vector<double>& block, std::int64_t n, int s_old,
                     const std::vector<int>& keep) {
    const int s_new = static_cast<int>(keep.size());
    for (std::int64_t i = 0; i < n; ++i)
        for (int j = 0; j < s_new; ++j)
            block[static_cast<std::size_t>(i) * s_new + j] =
                block[static_cast<std::size_t>(i) * s_old + keep[static_cast<std::size_t>(j)]];
    block.resize(static_cast<std::size_t>(n) * s_new);
}

void compact_square(std::vector<double>& m, int s_old,
                    const std::vector<int>& keep) {
    const int s_new = static_cast<int>(keep.size());
    for (int a = 0; a < s_new; ++a)
        for (int b = 0; b < s_new; ++b)
            m[static_cast<std::size_t>(a) * s_new + b] =
                m[static_cast<std::size_t>(keep[static_cast<std::size_t>(a)]) * s_old +
                  keep[static_cast<std::size_t>(b)]];
    m.resize(static_cast<std::size_t>(s_new) * s_new);
}

}  // namespace

BlockCgResult block_cg(const CsrMatrix& a, const MultiVector& b,
                       const SolverConfig& cfg) {
    cfg.validate();
    if (b.n != a.n) throw DimensionMismatchError("block_cg: rhs rows != n");
    if (b.s < 1) throw DimensionMismatchError("block_cg: need at least one column");

    const auto t0 = clock_type::now();
    const std::int64_t n = a.n;
    const int s = b.s;

    BlockCgResult res;
    res.x = MultiVector(n, s);
    auto& report = res.report;
    report.final_rel_residual.assign(static_cast<std::size_t>(s), 0.0);
    report.converged.assign(static_cast<std::size_t>(s), 0);

    std::vector<double> bnorm(static_cast<std::size_t>(s), 0.0);
    for (int j = 0; j < s; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = b.at(i, j);
            acc += v * v;
        }
        bnorm[static_cast<std::size_t>(j)] = std::sqrt(acc);
    }

    // Zero right-hand sides are solved by x = 0 outright.
    std::vector<int> active;
    for (int j = 0; j < s; ++j) {
        if (bnorm[static_cast<std::size_t>(j)] == 0.0)
            report.converged[static_cast<std::size_t>(j)] = 1;
        else
            active.push_back(j);
    }

    const bool jacobi = cfg.preconditioner == SolverConfig::Precond::jacobi;
    std::vector<double> dinv;
    if (jacobi) dinv = jacobi_inverse(a);

    int sa = static_cast<int>(active.size());
    std::vector<double> r(static_cast<std::size_t>(n) * sa);
    for (std::int64_t i = 0; i < n; ++i)
        for (int j = 0; j < sa; ++j)
            r[static_cast<std::size_t>(i) * sa + j] = b.at(i, active[static_cast<std::size_t>(j)]);

    auto precond_block = [&](const std::vector<double>& src,
                             std::vector<double>& dst, int width) {
        dst.resize(src.size());
        if (jacobi) {
            for (std::int64_t i = 0; i < n; ++i) {
                const double di = dinv[static_cast<std::size_t>(i)];
                for (int j = 0; j < width; ++j)
                    dst[static_cast<std::size_t>(i) * width + j] =
                        di * src[static_cast<std::size_t>(i) * width + j];
            }
        } else {
            std::copy(src.begin(), src.end(), dst.begin());
        }
    };

    std::vector<double> z, p, w, s_old, g, alpha, beta, s_new,
        x_act(static_cast<std::size_t>(n) * sa, 0.0),
        xcol(static_cast<std::size_t>(n)), bcol(static_cast<std::size_t>(n)),
        scratch(static_cast<std::size_t>(n));
    precond_block(r, z, sa);
    p = z;
    s_old.assign(static_cast<std::size_t>(sa) * sa, 0.0);
    if (sa > 0) gram(r.data(), z.data(), n, sa, s_old.data());

    // True relative residual of active column j (solution still in x_act).
    auto verify_active = [&](int j, int width) -> double {
        const int orig = active[static_cast<std::size_t>(j)];
        for (std::int64_t i = 0; i < n; ++i) {
            xcol[static_cast<std::size_t>(i)] = x_act[static_cast<std::size_t>(i) * width + j];
            bcol[static_cast<std::size_t>(i)] = b.at(i, orig);
        }
        ++report.matvec_count;
        return true_rel_residual(a, bcol, xcol, bnorm[static_cast<std::size_t>(orig)], scratch);
    };
    auto publish_column = [&](int j, int width) {
        const int orig = active[static_cast<std::size_t>(j)];
        for (std::int64_t i = 0; i < n; ++i)
            res.x.at(i, orig) = x_act[static_cast<std::size_t>(i) * width + j];
    };

    std::vector<double> rr;
    for (int m = 1; m <= cfg.max_iter && sa > 0; ++m) {
        const bool fused = sa <= kMaxFixedWidth;
        w.resize(static_cast<std::size_t>(n) * sa);
        g.assign(static_cast<std::size_t>(sa) * sa, 0.0);
        if (fused) {
            kFusedTable[static_cast<std::size_t>(sa - 1)].spmm_gram(
                a, p.data(), w.data(), g.data());
            mirror_upper(g.data(), sa);
        } else {
            a.apply_block(p.data(), sa, w.data());
            gram(p.data(), w.data(), n, sa, g.data());
        }
        report.matvec_count += sa;
        alpha.assign(static_cast<std::size_t>(sa) * sa, 0.0);
        PivotedCholesky(g.data(), sa).solve(s_old.data(), sa, alpha.data());

        rr.assign(static_cast<std::size_t>(sa), 0.0);
        bool have_zs = false;  // z and s_new already match the active block
        if (fused) {
            z.resize(static_cast<std::size_t>(n) * sa);
            s_new.assign(static_cast<std::size_t>(sa) * sa, 0.0);
            kFusedTable[static_cast<std::size_t>(sa - 1)].update(
                n, p.data(), w.data(), x_act.data(), r.data(), z.data(),
                alpha.data(), jacobi ? dinv.data() : nullptr, rr.data(),
                s_new.data());
            mirror_upper(s_new.data(), sa);
            have_zs = true;
        } else {
            add_product<1>(x_act.data(), p.data(), alpha.data(), n, sa);
            add_product<-1>(r.data(), w.data(), alpha.data(), n, sa);
            for (int j = 0; j < sa; ++j) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < n; ++i) {
                    const double v = r[static_cast<std::size_t>(i) * sa + j];
                    acc += v * v;
                }
                rr[static_cast<std::size_t>(j)] = acc;
            }
        }
        report.iterations = m;

        // Freeze columns whose true residual confirms the recurrence. A
        // recurrence that dips under tol without confirmation has drifted;
        // those columns force a re-anchor of the whole active block below.
        std::vector<int> keep;
        keep.reserve(static_cast<std::size_t>(sa));
        bool need_restart = false;
        for (int j = 0; j < sa; ++j) {
            const int orig = active[static_cast<std::size_t>(j)];
            const double rel = std::sqrt(rr[static_cast<std::size_t>(j)]) /
                               bnorm[static_cast<std::size_t>(orig)];
            if (rel <= cfg.rel_tol) {
                const double rt = verify_active(j, sa);
                if (rt <= cfg.rel_tol) {
                    publish_column(j, sa);
                    report.final_rel_residual[static_cast<std::size_t>(orig)] = rt;
                    report.converged[static_cast<std::size_t>(orig)] = 1;
                    continue;
                }
                need_restart = true;
            }
            keep.push_back(j);
        }

        if (static_cast<int>(keep.size()) != sa) {
            std::vector<int> next_active;
            next_active.reserve(keep.size());
            for (int j : keep) next_active.push_back(active[static_cast<std::size_t>(j)]);
            compact_columns(r, n, sa, keep);
            compact_columns(p, n, sa, keep);
            compact_columns(x_act, n, sa, keep);
            compact_square(s_old, sa, keep);
            active = std::move(next_active);
            sa = static_cast<int>(active.size());
            if (sa == 0) break;
            have_zs = false;  // z/s_new describe the pre-compaction block
        }

        if (need_restart) {
            // Re-anchor on the true residuals: R = B - A X, fresh P and
            // Gram. The recurrence residual snaps back above tol, so the
            // next verification only happens after real progress; mirrors
            // the single-vector restart.
            w.resize(static_cast<std::size_t>(n) * sa);
            a.apply_block(x_act.data(), sa, w.data());
            report.matvec_count += sa;
            for (std::int64_t i = 0; i < n; ++i)
                for (int j = 0; j < sa; ++j)
                    r[static_cast<std::size_t>(i) * sa + j] =
                        b.at(i, active[static_cast<std::size_t>(j)]) -
                        w[static_cast<std::size_t>(i) * sa + j];
            precond_block(r, z, sa);
            p = z;
            s_old.assign(static_cast<std::size_t>(sa) * sa, 0.0);
            gram(r.data(), z.data(), n, sa, s_old.data());
            continue;
        }

        if (!have_zs) {
            precond_block(r, z, sa);
            s_new.assign(static_cast<std::size_t>(sa) * sa, 0.0);
            gram(r.data(), z.data(), n, sa, s_new.data());
        }
        beta.assign(static_cast<std::size_t>(sa) * sa, 0.0);
        PivotedCholesky(s_old.data(), sa).solve(s_new.data(), sa, beta.data());
        if (sa <= kMaxFixedWidth) {
            // P = Z + P Beta in place.
            kFusedTable[static_cast<std::size_t>(sa - 1)].p_update(
                n, p.data(), z.data(), beta.data());
        } else {
            add_product<1>(z.data(), p.data(), beta.data(), n, sa);
            std::swap(p, z);
        }
        s_old = s_new;
    }

    // Whatever is still active hit max_iter: report the honest residuals.
    for (int j = 0; j < sa; ++j) {
        const int orig = active[static_cast<std::size_t>(j)];
        const double rt = verify_active(j, sa);
        publish_column(j, sa);
        report.final_rel_residual[static_cast<std::size_t>(orig)] = rt;
        report.converged[static_cast<std::size_t>(orig)] = rt <= cfg.rel_tol;
    }

    report.wall_time = seconds_since(t0);
    return res;
}

BlockCgResult block_cg(const DiscreteOperator& op, const MultiVector& b,
                       const SolverConfig& cfg) {
    return block_cg(op.A, b, cfg);
}

double cg_error_bound(double kappa, int m, double e0) {
    if (!(kappa >= 1.0))
        throw InvalidKappaError("cg_error_bound: kappa must be >= 1");
    if (m < 0) throw InvalidConfigError("cg_error_bound: m must be >= 0");
    if (!(e0 >= 0.0)) throw InvalidConfigError("cg_error_bound: e0 must be >= 0");
    const double rk = std::sqrt(kappa);
    const double factor = (rk - 1.0) / (rk + 1.0);
    return 2.0 * std::pow(factor, m) * e0;
}

}  // namespace blockoa
