#include "blockoa/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <utility>

#include "blockoa/errors.hpp"
#include "blockoa/parallel.hpp"
#include "blockoa/rng.hpp"
#include "blockoa/version.hpp"

#ifdef __linux__
#include <sys/mman.h>
#include <unistd.h>
#endif

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace blockoa {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// Samples are produced in chunks: one timed pass per phase over each chunk,
// so phase wall times stay meaningful when the passes run multi-threaded,
// and per-chunk buffers bound memory at large n_data. 80 keeps the per-group
// column blocks at a register-friendly width (16) for the usual five groups.
constexpr std::int64_t kChunk = 80;

// Every sample retains ~25 fresh pages of field storage; demand-faulting
// them one at a time costs more than all the arithmetic that fills them.
// One batched populate per vector keeps the kernel out of the hot loop.
// Best effort: on failure first-touch faulting simply resumes.
void prefault(void* p, std::size_t bytes) {
#ifdef __linux__
#ifdef MADV_POPULATE_WRITE
    if (bytes == 0) return;
    const std::size_t page = 4096;
    auto addr = reinterpret_cast<std::uintptr_t>(p);
    const std::uintptr_t base = addr & ~(page - 1);
    madvise(reinterpret_cast<void*>(base), bytes + (addr - base),
            MADV_POPULATE_WRITE);
#endif
#else
    (void)p;
    (void)bytes;
#endif
}

}  // namespace

void NoiseConfig::validate() const {
    if (kind == Kind::uniform && !(lo <= hi))
        throw InvalidConfigError("noise: uniform requires lo <= hi");
    if (kind == Kind::gaussian && !(sigma >= 0.0))
        throw InvalidConfigError("noise: gaussian requires sigma >= 0");
}

void GenerationConfig::validate() const {
    if (n_data < 0) throw InvalidConfigError("generation: n_data must be >= 0");
    if (n_basis < 1) throw InvalidConfigError("generation: n_basis must be >= 1");
    if (n_k < 1) throw InvalidConfigError("generation: n_k must be >= 1");
    if (n_basis % n_k != 0)
        throw InvalidConfigError("generation: n_k must divide n_basis evenly");
    if (threads < 1) throw InvalidConfigError("generation: threads must be >= 1");
    solver.validate();
    noise.validate();
    grid.validate();
    bc.validate();
    chip.validate();
}

int BasisSet::n_basis() const {
    int total = 0;
    for (const auto& g : groups) total += g.x.s;
    return total;
}

std::uint64_t sample_seed_for(std::uint64_t master_seed, std::int64_t l) {
    return derive_seed(master_seed, "sample", static_cast<std::uint64_t>(l));
}

BasisSet generate_basis(const GenerationConfig& cfg) {
    cfg.validate();
    const int eta = cfg.eta();
    const auto floorplans = build_floorplans(cfg.chip, cfg.n_k, cfg.master_seed);

    BasisSet basis;
    basis.groups.resize(static_cast<std::size_t>(cfg.n_k));

    // Groups are independent: one operator, eta power draws, one block solve.
    parallel_for(0, cfg.n_k, cfg.threads, [&](std::int64_t j) {
        BasisGroup& group = basis.groups[static_cast<std::size_t>(j)];
        group.floorplan = floorplans[static_cast<std::size_t>(j)];
        group.floorplan_id = group.floorplan.id;
        group.k_field = rasterize_conductivity(group.floorplan, cfg.chip, cfg.grid);
        group.op = assemble(group.k_field, cfg.grid, cfg.bc);

        const std::int64_t n = group.op.A.n;
        group.b = MultiVector(n, eta);
        group.q_fields.reserve(static_cast<std::size_t>(eta));
        for (int t = 0; t < eta; ++t) {
            const std::uint64_t draw_seed = derive_seed(
                cfg.master_seed, "basis",
                static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(eta) +
                    static_cast<std::uint64_t>(t));
            const PowerAssignment pa =
                sample_power(group.floorplan, cfg.chip, draw_seed);
            ScalarField q = rasterize_power(pa, group.floorplan, cfg.chip, cfg.grid);
            group.b.set_column(t, rhs_from_power(group.op, q));
            group.q_fields.push_back(std::move(q));
        }

        BlockCgResult solved = block_cg(group.op, group.b, cfg.solver);
        group.x = std::move(solved.x);
        group.report = std::move(solved.report);
    });

    for (const auto& group : basis.groups)
        if (!group.report.all_converged())
            throw NotConvergedError(
                "basis solve did not reach tolerance for floorplan " +
                std::to_string(group.floorplan_id));
    return basis;
}

std::vector<double> draw_weights(int n_basis, std::uint64_t sample_seed) {
    if (n_basis < 1) throw EmptyBasisError("draw_weights: empty basis");
    Rng rng(derive_seed(sample_seed, "mu"));
    std::vector<double> mu(static_cast<std::size_t>(n_basis));
    double sum = 0.0;
    // A near-zero normalizer would blow the weights up; resample the whole
    // vector (measure-zero event, but seeds are adversarially many).
    do {
        sum = 0.0;
        for (auto& m : mu) {
            m = rng.normal();
            sum += m;
        }
    } while (std::abs(sum) < 1e-6);
    for (auto& m : mu) m /= sum;
    return mu;
}

namespace {

// Shared by the public sample_noise and the batched pipeline path: same
// seed derivation, same draw order, writes with a caller-chosen stride.
template <typename Put>
void draw_noise_interior(const GridSpec& grid, const NoiseConfig& noise,
                         std::uint64_t seed, Put&& put) {
    Rng rng(derive_seed(seed, "eps"));
    // Interior support only: boundary-adjacent cells stay exactly zero and
    // consume no draws, so the interior stream is grid-traversal stable.
    for (int iz = 1; iz + 1 < grid.nz; ++iz)
        for (int iy = 1; iy + 1 < grid.ny; ++iy)
            for (int ix = 1; ix + 1 < grid.nx; ++ix) {
                const double draw = noise.kind == NoiseConfig::Kind::uniform
                                        ? rng.uniform(noise.lo, noise.hi)
                                        : noise.sigma * rng.normal();
                put(grid.flat(ix, iy, iz), draw);
            }
}

}  // namespace

std::vector<double> sample_noise(const GridSpec& grid, const NoiseConfig& noise,
                                 std::uint64_t seed) {
    noise.validate();
    std::vector<double> eps(static_cast<std::size_t>(grid.cell_count()), 0.0);
    if (noise.kind == NoiseConfig::Kind::none) return eps;
    draw_noise_interior(grid, noise, seed, [&](std::int64_t i, double v) {
        eps[static_cast<std::size_t>(i)] = v;
    });
    return eps;
}

std::vector<double> combine_from_weights(const BasisSet& basis,
                                         std::span<const double> weights,
                                         std::span<const double> noise) {
    if (basis.empty()) throw EmptyBasisError("combine: empty basis");
    if (static_cast<int>(weights.size()) != basis.n_basis())
        throw DimensionMismatchError("combine: weight count != basis size");
    const std::int64_t n = basis.groups.front().op.A.n;
    for (const auto& g : basis.groups)
        if (g.op.A.n != n)
            throw DimensionMismatchError("combine: basis groups disagree on n");
    if (!noise.empty() && static_cast<std::int64_t>(noise.size()) != n)
        throw DimensionMismatchError("combine: noise length != n");

    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    // Zero weights are skipped and the first contribution is an assignment:
    // a unit weight vector therefore reproduces its column bit for bit.
    bool first = true;
    int c = 0;
    for (const auto& g : basis.groups) {
        for (int t = 0; t < g.x.s; ++t, ++c) {
            const double w = weights[static_cast<std::size_t>(c)];
            if (w == 0.0) continue;
            const double* xs = g.x.data.data();
            const int s = g.x.s;
            if (first) {
                for (std::int64_t i = 0; i < n; ++i)
                    x[static_cast<std::size_t>(i)] = w * xs[i * s + t];
                first = false;
            } else {
                for (std::int64_t i = 0; i < n; ++i)
                    x[static_cast<std::size_t>(i)] += w * xs[i * s + t];
            }
        }
    }
    if (!noise.empty())
        for (std::int64_t i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i)] += noise[static_cast<std::size_t>(i)];
    return x;
}

Combination combine_basis(const BasisSet& basis, std::uint64_t sample_seed,
                          const NoiseConfig& noise) {
    if (basis.empty()) throw EmptyBasisError("combine: empty basis");
    Combination out;
    out.weights = draw_weights(basis.n_basis(), sample_seed);
    if (noise.kind == NoiseConfig::Kind::none) {
        out.x = combine_from_weights(basis, out.weights);
    } else {
        const std::vector<double> eps =
            sample_noise(basis.groups.front().op.grid, noise, sample_seed);
        out.x = combine_from_weights(basis, out.weights, eps);
    }
    return out;
}

ScalarField operator_action(const BasisSet& basis, int group,
                            std::span<const double> x_new) {
    if (basis.empty()) throw EmptyBasisError("operator_action: empty basis");
    if (group < 0 || group >= static_cast<int>(basis.groups.size()))
        throw DimensionMismatchError("operator_action: group out of range");
    const DiscreteOperator& op = basis.groups[static_cast<std::size_t>(group)].op;
    if (static_cast<std::int64_t>(x_new.size()) != op.A.n)
        throw DimensionMismatchError("operator_action: vector length != n");
    return power_from_rhs(op, apply(op, x_new));
}

namespace {

DatasetManifest base_manifest(const GenerationConfig& cfg, const char* method,
                              double tol_claimed) {
    DatasetManifest m;
    m.method = method;
    m.master_seed = cfg.master_seed;
    m.residual_tol_claimed = tol_claimed;
    m.tool_version = kToolVersion;
    m.requested_n_data = cfg.n_data;
    return m;
}

// Full-width tile of the combine product: sixteen output columns held in
// registers while the basis rows stream past. A single row is a serial
// chain of fused multiply-adds per column, so it runs at fma latency, not
// throughput; pairing two adjacent rows doubles the independent chains in
// flight and the shared weight loads come along free. Per-row, per-column
// accumulation order is groups ascending, then columns within a group
// ascending, with one fused multiply-add per term: the same sequence of
// roundings as the one-sample path, so each output stays bitwise stable.
// 512-bit lanes are deliberately avoided; on the hosts this targets they
// clock the core down far more than the wider step is worth.
#if defined(__AVX2__) && defined(__FMA__) && !defined(BLOCKOA_NO_WIDE_COMBINE)
void combine_tile16(const std::pair<const double*, int>* srcs,
                    std::size_t n_groups, std::int64_t n, const double* w,
                    int m, int cb, double* x) {
    const double* wb = w + cb;
    std::int64_t i = 0;
    for (; i + 2 <= n; i += 2) {
        __m256d a00 = _mm256_setzero_pd(), a01 = _mm256_setzero_pd();
        __m256d a02 = _mm256_setzero_pd(), a03 = _mm256_setzero_pd();
        __m256d a10 = _mm256_setzero_pd(), a11 = _mm256_setzero_pd();
        __m256d a12 = _mm256_setzero_pd(), a13 = _mm256_setzero_pd();
        const double* wt = wb;
        for (std::size_t g = 0; g < n_groups; ++g) {
            const int s = srcs[g].second;
            const double* xi = srcs[g].first + i * s;
            for (int t = 0; t < s; ++t, wt += m) {
                const __m256d w0 = _mm256_loadu_pd(wt);
                const __m256d w1 = _mm256_loadu_pd(wt + 4);
                const __m256d w2 = _mm256_loadu_pd(wt + 8);
                const __m256d w3 = _mm256_loadu_pd(wt + 12);
                const __m256d f0 = _mm256_broadcast_sd(xi + t);
                const __m256d f1 = _mm256_broadcast_sd(xi + t + s);
                a00 = _mm256_fmadd_pd(f0, w0, a00);
                a01 = _mm256_fmadd_pd(f0, w1, a01);
                a02 = _mm256_fmadd_pd(f0, w2, a02);
                a03 = _mm256_fmadd_pd(f0, w3, a03);
                a10 = _mm256_fmadd_pd(f1, w0, a10);
                a11 = _mm256_fmadd_pd(f1, w1, a11);
                a12 = _mm256_fmadd_pd(f1, w2, a12);
                a13 = _mm256_fmadd_pd(f1, w3, a13);
            }
        }
        double* dst = x + static_cast<std::size_t>(i) * m + cb;
        _mm256_storeu_pd(dst, a00);
        _mm256_storeu_pd(dst + 4, a01);
        _mm256_storeu_pd(dst + 8, a02);
        _mm256_storeu_pd(dst + 12, a03);
        _mm256_storeu_pd(dst + m, a10);
        _mm256_storeu_pd(dst + m + 4, a11);
        _mm256_storeu_pd(dst + m + 8, a12);
        _mm256_storeu_pd(dst + m + 12, a13);
    }
    for (; i < n; ++i) {
        __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
        __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
        const double* wt = wb;
        for (std::size_t g = 0; g < n_groups; ++g) {
            const int s = srcs[g].second;
            const double* xi = srcs[g].first + i * s;
            for (int t = 0; t < s; ++t, wt += m) {
                const __m256d f = _mm256_broadcast_sd(xi + t);
                a0 = _mm256_fmadd_pd(f, _mm256_loadu_pd(wt), a0);
                a1 = _mm256_fmadd_pd(f, _mm256_loadu_pd(wt + 4), a1);
                a2 = _mm256_fmadd_pd(f, _mm256_loadu_pd(wt + 8), a2);
                a3 = _mm256_fmadd_pd(f, _mm256_loadu_pd(wt + 12), a3);
            }
        }
        double* dst = x + static_cast<std::size_t>(i) * m + cb;
        _mm256_storeu_pd(dst, a0);
        _mm256_storeu_pd(dst + 4, a1);
        _mm256_storeu_pd(dst + 8, a2);
        _mm256_storeu_pd(dst + 12, a3);
    }
}
#else
void combine_tile16(const std::pair<const double*, int>* srcs,
                    std::size_t n_groups, std::int64_t n, const double* w,
                    int m, int cb, double* x) {
    constexpr int kCW = 16;
    const double* wb = w + cb;
    for (std::int64_t i = 0; i < n; ++i) {
        double acc[kCW] = {};
        const double* wt = wb;
        for (std::size_t g = 0; g < n_groups; ++g) {
            const int s = srcs[g].second;
            const double* xi = srcs[g].first + i * s;
            for (int t = 0; t < s; ++t, wt += m) {
                const double f = xi[t];
                for (int c = 0; c < kCW; ++c) acc[c] += f * wt[c];
            }
        }
        double* dst = x + static_cast<std::size_t>(i) * m + cb;
        for (int c = 0; c < kCW; ++c) dst[c] = acc[c];
    }
}
#endif

}  // namespace

GenerationResult generate_blockoa(const GenerationConfig& cfg) {
    cfg.validate();
    const auto t_total = clock_type::now();

    GenerationResult out;
    PhaseTimings& pt = out.timings;

    const auto t_basis = clock_type::now();
    BasisSet basis = generate_basis(cfg);
    pt.basis_solve_s = seconds_since(t_basis);
    for (const auto& g : basis.groups) {
        pt.iterations_total += g.report.iterations;
        pt.matvecs_total += g.report.matvec_count;
    }

    const std::int64_t n = basis.groups.front().op.A.n;
    const int n_k = static_cast<int>(basis.groups.size());

    Dataset& ds = out.dataset;
    ds.grid = cfg.grid;
    ds.bc = cfg.bc;
    ds.manifest = base_manifest(cfg, "blockoa", 1e-12);
    ds.samples.resize(static_cast<std::size_t>(cfg.n_data));
    for (const auto& g : basis.groups)
        ds.manifest.floorplan_digests.emplace_back(g.floorplan_id,
                                                   g.op.k_field_digest);

    // Samples are combined and acted on in per-group column blocks: the
    // basis is streamed once per chunk instead of once per sample, and the
    // operator application serves a whole block in one matrix traversal.
    // Per-sample weight and noise streams are drawn exactly as the scalar
    // combine_basis path draws them.
    const int total_basis = basis.n_basis();
    std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(n_k));
    std::vector<std::vector<double>> xblk(static_cast<std::size_t>(n_k)),
        yblk(static_cast<std::size_t>(n_k)), wblk(static_cast<std::size_t>(n_k));

    for (std::int64_t chunk_lo = 0; chunk_lo < cfg.n_data; chunk_lo += kChunk) {
        const std::int64_t chunk_hi = std::min(cfg.n_data, chunk_lo + kChunk);

        for (auto& m : members) m.clear();
        for (std::int64_t l0 = chunk_lo; l0 < chunk_hi; ++l0)
            members[static_cast<std::size_t>(l0 % n_k)].push_back(l0);

        const auto t_combine = clock_type::now();
        parallel_for(0, n_k, cfg.threads, [&](std::int64_t gi) {
            const auto& ls = members[static_cast<std::size_t>(gi)];
            const int m = static_cast<int>(ls.size());
            if (m == 0) return;

            // Weight matrix for this block: row c = basis column c's weight
            // across the block's samples.
            auto& w = wblk[static_cast<std::size_t>(gi)];
            w.assign(static_cast<std::size_t>(total_basis) * m, 0.0);
            for (int c = 0; c < m; ++c) {
                const std::uint64_t seed =
                    sample_seed_for(cfg.master_seed, ls[static_cast<std::size_t>(c)] + 1);
                const std::vector<double> mu = draw_weights(total_basis, seed);
                for (int t = 0; t < total_basis; ++t)
                    w[static_cast<std::size_t>(t) * m + c] =
                        mu[static_cast<std::size_t>(t)];
            }

            // X_block = sum over basis groups of X_h W_h, groups ascending,
            // columns within a group ascending: the accumulation order of
            // combine_from_weights. One sweep over the cells with the
            // partial sums held in a small local block, so each output row
            // is loaded and stored once instead of once per basis column.
            // Every element is stored, so the block needs no clearing.
            auto& x = xblk[static_cast<std::size_t>(gi)];
            x.resize(static_cast<std::size_t>(n) * m);
            std::vector<std::pair<const double*, int>> srcs;
            srcs.reserve(basis.groups.size());
            for (const auto& h : basis.groups)
                srcs.emplace_back(h.x.data.data(), h.x.s);
            constexpr int kCW = 16;  // column tile; full chunks split evenly
            for (int cb = 0; cb < m; cb += kCW) {
                const int cw = std::min(kCW, m - cb);
                const double* wb = w.data() + cb;
                if (cw == kCW) {
                    combine_tile16(srcs.data(), srcs.size(), n, w.data(), m,
                                   cb, x.data());
                } else {
                    for (std::int64_t i = 0; i < n; ++i) {
                        double acc[kCW] = {};
                        const double* wt = wb;
                        for (const auto& [xs, s] : srcs) {
                            const double* xi = xs + i * s;
                            for (int t = 0; t < s; ++t, wt += m) {
                                const double f = xi[t];
                                for (int c = 0; c < cw; ++c) acc[c] += f * wt[c];
                            }
                        }
                        double* dst = x.data() + static_cast<std::size_t>(i) * m + cb;
                        for (int c = 0; c < cw; ++c) dst[c] = acc[c];
                    }
                }
            }

            if (cfg.noise.kind != NoiseConfig::Kind::none) {
                // Columns share cache lines in the row-major block, so the
                // interior sweep handles a few columns at once: one pass
                // over the lines serves the whole lane group, and the
                // independent per-sample generators overlap instead of
                // serializing. Each column still consumes its own stream
                // in ascending cell order, exactly as the scalar path does.
                const bool uni = cfg.noise.kind == NoiseConfig::Kind::uniform;
                constexpr int kLanes = 8;
                for (int c0 = 0; c0 < m; c0 += kLanes) {
                    const int lanes = std::min(kLanes, m - c0);
                    Rng rngs[kLanes] = {Rng(0), Rng(0), Rng(0), Rng(0),
                                        Rng(0), Rng(0), Rng(0), Rng(0)};
                    for (int dc = 0; dc < lanes; ++dc) {
                        const std::uint64_t seed = sample_seed_for(
                            cfg.master_seed,
                            ls[static_cast<std::size_t>(c0 + dc)] + 1);
                        rngs[dc] = Rng(derive_seed(seed, "eps"));
                    }
                    for (int iz = 1; iz + 1 < cfg.grid.nz; ++iz)
                        for (int iy = 1; iy + 1 < cfg.grid.ny; ++iy) {
                            double* row =
                                x.data() +
                                (cfg.grid.flat(1, iy, iz)) * m + c0;
                            if (uni && lanes == kLanes) {
                                for (int ix = 1; ix + 1 < cfg.grid.nx;
                                     ++ix, row += m)
                                    for (int dc = 0; dc < kLanes; ++dc)
                                        row[dc] += rngs[dc].uniform(
                                            cfg.noise.lo, cfg.noise.hi);
                            } else {
                                for (int ix = 1; ix + 1 < cfg.grid.nx;
                                     ++ix, row += m)
                                    for (int dc = 0; dc < lanes; ++dc)
                                        row[dc] += uni
                                            ? rngs[dc].uniform(cfg.noise.lo,
                                                               cfg.noise.hi)
                                            : cfg.noise.sigma *
                                                  rngs[dc].normal();
                            }
                        }
                }
            }
        });
        pt.combine_s += seconds_since(t_combine);

        const auto t_action = clock_type::now();
        parallel_for(0, n_k, cfg.threads, [&](std::int64_t gi) {
            const auto& ls = members[static_cast<std::size_t>(gi)];
            const int m = static_cast<int>(ls.size());
            if (m == 0) return;
            const BasisGroup& group = basis.groups[static_cast<std::size_t>(gi)];
            const auto& x = xblk[static_cast<std::size_t>(gi)];
            auto& y = yblk[static_cast<std::size_t>(gi)];
            y.resize(static_cast<std::size_t>(n) * m);
            group.op.A.apply_block(x.data(), m, y.data());

            const double* vol = group.op.volumes.data();
            const double* gv = group.op.g.data();
            // One sweep turns the block rows into per-sample fields: q is
            // computed from the y row and written straight into its sample
            // column, the (noised) solution row fans out beside it, and the
            // residual accumulators ride along per column. Neither block is
            // written back, and no separate deinterleave pass runs. Each
            // destination column advances one element per row, so all the
            // write streams stay line-sequential.
            std::vector<double> num(static_cast<std::size_t>(m), 0.0);
            std::vector<double> den(static_cast<std::size_t>(m), 0.0);
            std::vector<std::vector<double>> qv(static_cast<std::size_t>(m)),
                uv(static_cast<std::size_t>(m));
            std::vector<double*> qp(static_cast<std::size_t>(m)),
                up(static_cast<std::size_t>(m));
            for (int j = 0; j < m; ++j) {
                auto& q = qv[static_cast<std::size_t>(j)];
                auto& u = uv[static_cast<std::size_t>(j)];
                q.reserve(static_cast<std::size_t>(n));
                u.reserve(static_cast<std::size_t>(n));
                prefault(q.data(), static_cast<std::size_t>(n) * sizeof(double));
                prefault(u.data(), static_cast<std::size_t>(n) * sizeof(double));
                q.resize(static_cast<std::size_t>(n));
                u.resize(static_cast<std::size_t>(n));
                qp[static_cast<std::size_t>(j)] = q.data();
                up[static_cast<std::size_t>(j)] = u.data();
            }
            for (std::int64_t i = 0; i < n; ++i) {
                const double* yi = y.data() + static_cast<std::size_t>(i) * m;
                const double* xi = x.data() + static_cast<std::size_t>(i) * m;
                const double v = vol[i], gg = gv[i];
                for (int j = 0; j < m; ++j) {
                    const double qi = (yi[j] - gg) / v;
                    const double bi = v * qi + gg;
                    const double ri = yi[j] - bi;
                    num[static_cast<std::size_t>(j)] += ri * ri;
                    den[static_cast<std::size_t>(j)] += bi * bi;
                    qp[static_cast<std::size_t>(j)][i] = qi;
                    up[static_cast<std::size_t>(j)][i] = xi[j];
                }
            }

            for (int j = 0; j < m; ++j) {
                Sample& sample =
                    ds.samples[static_cast<std::size_t>(ls[static_cast<std::size_t>(j)])];
                sample.floorplan_id = group.floorplan_id;
                sample.provenance = Provenance::blockoa;
                const double nu = num[static_cast<std::size_t>(j)];
                const double de = den[static_cast<std::size_t>(j)];
                sample.residual =
                    de == 0.0 ? (nu == 0.0 ? 0.0 : 1.0) : std::sqrt(nu / de);
                sample.k.grid = group.k_field.grid;
                sample.k.unit = group.k_field.unit;
                sample.k.values.reserve(group.k_field.values.size());
                prefault(sample.k.values.data(),
                         group.k_field.values.size() * sizeof(double));
                sample.k.values.assign(group.k_field.values.begin(),
                                       group.k_field.values.end());
                sample.q = ScalarField{cfg.grid, Unit::power_density_w_per_m3,
                                       std::move(qv[static_cast<std::size_t>(j)])};
                sample.u = ScalarField{cfg.grid, Unit::temperature_c,
                                       std::move(uv[static_cast<std::size_t>(j)])};
            }
        });
        pt.operator_action_s += seconds_since(t_action);
        pt.matvecs_total += chunk_hi - chunk_lo;
    }

    ds.manifest.n_data = static_cast<std::int64_t>(ds.samples.size());
    ds.manifest.floorplan_ids.reserve(ds.samples.size());
    for (const auto& s : ds.samples)
        ds.manifest.floorplan_ids.push_back(s.floorplan_id);

    pt.total_s = seconds_since(t_total);
    ds.manifest.timings = pt;
    return out;
}

GenerationResult generate_direct(const GenerationConfig& cfg) {
    cfg.validate();
    const auto t_total = clock_type::now();

    GenerationResult out;
    PhaseTimings& pt = out.timings;

    const auto floorplans = build_floorplans(cfg.chip, cfg.n_k, cfg.master_seed);
    struct PerPlan {
        ScalarField k;
        DiscreteOperator op;
    };
    std::vector<PerPlan> plans;
    plans.reserve(floorplans.size());
    for (const auto& fp : floorplans) {
        PerPlan p;
        p.k = rasterize_conductivity(fp, cfg.chip, cfg.grid);
        p.op = assemble(p.k, cfg.grid, cfg.bc);
        plans.push_back(std::move(p));
    }

    Dataset& ds = out.dataset;
    ds.grid = cfg.grid;
    ds.bc = cfg.bc;
    ds.manifest = base_manifest(cfg, "direct", cfg.solver.rel_tol);
    for (std::size_t j = 0; j < floorplans.size(); ++j)
        ds.manifest.floorplan_digests.emplace_back(floorplans[j].id,
                                                   plans[j].op.k_field_digest);

    const int n_k = static_cast<int>(floorplans.size());
    std::vector<Sample> slots(static_cast<std::size_t>(kChunk));
    std::vector<char> emitted(static_cast<std::size_t>(kChunk), 0);
    std::vector<ScalarField> qs(static_cast<std::size_t>(kChunk));
    std::vector<std::vector<double>> rhss(static_cast<std::size_t>(kChunk));
    std::vector<int> iters(static_cast<std::size_t>(kChunk), 0);
    std::vector<std::int64_t> mvs(static_cast<std::size_t>(kChunk), 0);

    for (std::int64_t chunk_lo = 0; chunk_lo < cfg.n_data; chunk_lo += kChunk) {
        const std::int64_t chunk_hi = std::min(cfg.n_data, chunk_lo + kChunk);

        parallel_for(chunk_lo, chunk_hi, cfg.threads, [&](std::int64_t l0) {
            const std::size_t slot = static_cast<std::size_t>(l0 - chunk_lo);
            const int j = static_cast<int>(l0 % n_k);
            const std::uint64_t seed = sample_seed_for(cfg.master_seed, l0 + 1);
            const PowerAssignment pa =
                sample_power(floorplans[static_cast<std::size_t>(j)], cfg.chip, seed);
            qs[slot] = rasterize_power(pa, floorplans[static_cast<std::size_t>(j)],
                                       cfg.chip, cfg.grid);
            rhss[slot] = rhs_from_power(plans[static_cast<std::size_t>(j)].op, qs[slot]);
        });

        const auto t_solve = clock_type::now();
        parallel_for(chunk_lo, chunk_hi, cfg.threads, [&](std::int64_t l0) {
            const std::size_t slot = static_cast<std::size_t>(l0 - chunk_lo);
            const int j = static_cast<int>(l0 % n_k);
            CgResult solved = cg(plans[static_cast<std::size_t>(j)].op, rhss[slot],
                                 cfg.solver);
            iters[slot] = solved.report.iterations;
            mvs[slot] = solved.report.matvec_count;
            emitted[slot] = solved.report.converged[0] ? 1 : 0;
            if (!emitted[slot]) return;

            Sample& sample = slots[slot];
            sample.floorplan_id = floorplans[static_cast<std::size_t>(j)].id;
            sample.provenance = Provenance::direct;
            sample.residual = solved.report.final_rel_residual[0];
            sample.k = plans[static_cast<std::size_t>(j)].k;
            sample.q = std::move(qs[slot]);
            sample.u = ScalarField{cfg.grid, Unit::temperature_c, std::move(solved.x)};
        });
        pt.solve_s += seconds_since(t_solve);

        // Sequential accounting keeps sample order and counters deterministic.
        for (std::int64_t l0 = chunk_lo; l0 < chunk_hi; ++l0) {
            const std::size_t slot = static_cast<std::size_t>(l0 - chunk_lo);
            pt.iterations_total += iters[slot];
            pt.matvecs_total += mvs[slot];
            if (emitted[slot])
                ds.samples.push_back(std::move(slots[slot]));
            else
                ++out.dropped;
        }
    }

    ds.manifest.n_data = static_cast<std::int64_t>(ds.samples.size());
    ds.manifest.dropped_count = out.dropped;
    ds.manifest.floorplan_ids.reserve(ds.samples.size());
    for (const auto& s : ds.samples)
        ds.manifest.floorplan_ids.push_back(s.floorplan_id);

    pt.total_s = seconds_since(t_total);
    ds.manifest.timings = pt;
    return out;
}

const char* to_string(Provenance p) {
    return p == Provenance::blockoa ? "blockoa" : "direct";
}

}  // namespace blockoa
