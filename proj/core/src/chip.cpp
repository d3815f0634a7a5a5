#include "blockoa/chip.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blockoa/errors.hpp"
#include "blockoa/rng.hpp"

namespace blockoa {

const Material& ChipSpec::material(const std::string& name) const {
    for (const auto& m : materials)
        if (m.name == name) return m;
    throw InvalidSpecError("chip: unknown material '" + name + "'");
}

static void check_range(const std::array<double, 2>& r, const char* what) {
    if (!(r[0] > 0.0) || !(r[0] <= r[1]))
        throw InvalidSpecError(std::string("chip: power range for ") + what +
                               " must satisfy 0 < lo <= hi");
}

void ChipSpec::validate() const {
    if (!(extent[0] > 0.0) || !(extent[1] > 0.0) || !(extent[2] > 0.0))
        throw InvalidSpecError("chip: extent must be positive");
    if (materials.empty()) throw InvalidSpecError("chip: no materials");
    for (const auto& m : materials)
        if (!(m.conductivity > 0.0))
            throw InvalidSpecError("chip: material '" + m.name +
                                   "' conductivity must be > 0");
    if (layers.empty()) throw InvalidSpecError("chip: no layers");

    // Layers must tile [0, extent_z) without gaps or overlap.
    const double rel = 1e-9 * extent[2];
    double z = 0.0;
    for (const auto& l : layers) {
        if (std::abs(l.z_lo - z) > rel)
            throw InvalidSpecError("chip: layers must tile the z-extent");
        if (!(l.z_hi > l.z_lo))
            throw InvalidSpecError("chip: layer thickness must be positive");
        (void)material(l.material);  // throws on unknown
        z = l.z_hi;
    }
    if (std::abs(z - extent[2]) > rel)
        throw InvalidSpecError("chip: layer stack does not reach the z-extent");

    if (block_counts.core_blocks <= 0)
        throw InvalidSpecError("chip: core_blocks must be >= 1");
    if (block_counts.high_power < 0 ||
        block_counts.high_power > block_counts.core_blocks)
        throw InvalidSpecError("chip: need 0 <= high_power <= core_blocks");
    if (block_counts.caches_per_layer < 0)
        throw InvalidSpecError("chip: caches_per_layer must be >= 0");

    check_range(power_ranges.high, "high");
    check_range(power_ranges.normal, "normal");
    check_range(power_ranges.cache, "cache");

    if (tsvs) {
        if (tsvs->count < 0) throw InvalidSpecError("chip: tsv count < 0");
        if (tsvs->count > 0 && !(tsvs->width > 0.0))
            throw InvalidSpecError("chip: tsv width must be > 0");
        if (tsvs->count > 0) (void)material(tsvs->material);
    }

    bool has_core_layer = false;
    for (const auto& l : layers)
        if (l.role == LayerRole::core) has_core_layer = true;
    if (block_counts.core_blocks > 0 && !has_core_layer)
        throw InvalidSpecError("chip: core blocks requested but no core layer");
}

ChipSpec ChipSpec::default_chip() {
    constexpr double mm = 1e-3;
    ChipSpec spec;
    spec.extent = {10.0 * mm, 10.0 * mm, 0.51 * mm};
    spec.materials = {{"silicon", 150.0}, {"copper", 413.0}, {"tim", 40.0}};

    // Bottom to top: TIM / cache die / TIM / cache die / TIM / core die.
    const double t_tim = 0.02 * mm;
    const double t_die = 0.15 * mm;
    double z = 0.0;
    auto push = [&](double t, const char* mat, LayerRole role) {
        spec.layers.push_back({z, z + t, mat, role});
        z += t;
    };
    push(t_tim, "tim", LayerRole::tim);
    push(t_die, "silicon", LayerRole::cache);
    push(t_tim, "tim", LayerRole::tim);
    push(t_die, "silicon", LayerRole::cache);
    push(t_tim, "tim", LayerRole::tim);
    push(t_die, "silicon", LayerRole::core);

    spec.block_counts = {156, 6, 2};
    spec.power_ranges.high = {3.0, 6.0};
    spec.power_ranges.normal = {0.5, 1.0};
    spec.power_ranges.cache = {0.02, 0.04};
    spec.tsvs = TsvSpec{12, 0.2 * mm, "copper"};
    return spec;
}

namespace {

// Blocks are random sub-boxes of disjoint slots on a per-layer virtual grid,
// which makes non-overlap structural instead of a rejection loop.
struct SlotGrid {
    int gx = 0, gy = 0;
    double sw = 0.0, sh = 0.0;
};

SlotGrid slot_grid_for(const ChipSpec& spec, int count) {
    const double aspect = spec.extent[0] / spec.extent[1];
    // ~40% spare slots; grid proportions follow the chip aspect.
    const double target = 1.4 * count;
    int gy = std::max(1, (int)std::ceil(std::sqrt(target / aspect)));
    int gx = std::max(1, (int)std::ceil(target / gy));
    return {gx, gy, spec.extent[0] / gx, spec.extent[1] / gy};
}

// First `take` entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<int> choose_distinct(int n, int take, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < take; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(take));
    return idx;
}

void place_layer_blocks(const ChipSpec& spec, int layer_index, int count,
                        BlockRole role, Rng& rng, std::vector<Block>& out) {
    if (count <= 0) return;
    const SlotGrid sg = slot_grid_for(spec, count);
    if (static_cast<long>(sg.gx) * sg.gy < count)
        throw InvalidSpecError("chip: cannot fit requested blocks in layer");
    const Layer& layer = spec.layers[static_cast<std::size_t>(layer_index)];
    const std::vector<int> slots = choose_distinct(sg.gx * sg.gy, count, rng);
    for (int slot : slots) {
        const int sx = slot % sg.gx;
        const int sy = slot / sg.gx;
        const double w = sg.sw * rng.uniform(0.55, 0.9);
        const double h = sg.sh * rng.uniform(0.55, 0.9);
        const double x0 = sx * sg.sw + rng.uniform(0.0, sg.sw - w);
        const double y0 = sy * sg.sh + rng.uniform(0.0, sg.sh - h);
        Block b;
        b.box = {{x0, y0, layer.z_lo}, {x0 + w, y0 + h, layer.z_hi}};
        b.layer = layer_index;
        b.role = role;
        out.push_back(b);
    }
}

void place_tsvs(const ChipSpec& spec, Rng& rng,
                std::vector<MaterialRegion>& out) {
    if (!spec.tsvs || spec.tsvs->count == 0) return;
    // TSVs span between the outermost device layers, crossing the TIMs.
    double z_lo = spec.extent[2], z_hi = 0.0;
    for (const auto& l : spec.layers) {
        if (l.role == LayerRole::tim) continue;
        z_lo = std::min(z_lo, l.z_lo);
        z_hi = std::max(z_hi, l.z_hi);
    }
    if (!(z_hi > z_lo)) return;  // all-TIM stack: nothing to connect
    const double w = std::min({spec.tsvs->width, spec.extent[0], spec.extent[1]});
    for (int i = 0; i < spec.tsvs->count; ++i) {
        const double x0 = rng.uniform(0.0, spec.extent[0] - w);
        const double y0 = rng.uniform(0.0, spec.extent[1] - w);
        MaterialRegion r;
        r.box = {{x0, y0, z_lo}, {x0 + w, y0 + w, z_hi}};
        r.material = spec.tsvs->material;
        out.push_back(std::move(r));
    }
}

}  // namespace

std::vector<Floorplan> build_floorplans(const ChipSpec& spec, int n_k,
                                        std::uint64_t seed) {
    spec.validate();
    if (n_k < 1) throw InvalidSpecError("build_floorplans: n_k must be >= 1");

    std::vector<int> core_layers, cache_layers;
    for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
        if (spec.layers[static_cast<std::size_t>(i)].role == LayerRole::core)
            core_layers.push_back(i);
        else if (spec.layers[static_cast<std::size_t>(i)].role == LayerRole::cache)
            cache_layers.push_back(i);
    }

    std::vector<Floorplan> plans;
    plans.reserve(static_cast<std::size_t>(n_k));
    for (int fp_i = 0; fp_i < n_k; ++fp_i) {
        Rng rng(derive_seed(seed, "floorplan", static_cast<std::uint64_t>(fp_i)));
        Floorplan fp;
        fp.id = static_cast<std::uint64_t>(fp_i);

        // Core blocks split as evenly as possible across core layers.
        const int n_core_layers = static_cast<int>(core_layers.size());
        for (int c = 0; c < n_core_layers; ++c) {
            const int share = spec.block_counts.core_blocks / n_core_layers +
                              (c < spec.block_counts.core_blocks % n_core_layers ? 1 : 0);
            place_layer_blocks(spec, core_layers[static_cast<std::size_t>(c)],
                               share, BlockRole::normal, rng, fp.blocks);
        }
        // Promote a random subset to high power.
        const auto high = choose_distinct(spec.block_counts.core_blocks,
                                          spec.block_counts.high_power, rng);
        for (int i : high) fp.blocks[static_cast<std::size_t>(i)].role = BlockRole::high;

        for (int layer : cache_layers)
            place_layer_blocks(spec, layer, spec.block_counts.caches_per_layer,
                               BlockRole::cache, rng, fp.blocks);

        place_tsvs(spec, rng, fp.material_regions);
        plans.push_back(std::move(fp));
    }
    return plans;
}

PowerAssignment sample_power(const Floorplan& fp, const ChipSpec& spec,
                             std::uint64_t seed) {
    Rng rng(derive_seed(seed, "power", fp.id));
    PowerAssignment pa;
    pa.floorplan_id = fp.id;
    pa.densities.reserve(fp.blocks.size());
    for (const auto& b : fp.blocks) {
        const auto& r = b.role == BlockRole::high     ? spec.power_ranges.high
                        : b.role == BlockRole::normal ? spec.power_ranges.normal
                                                      : spec.power_ranges.cache;
        pa.densities.push_back(rng.uniform(r[0], r[1]));
    }
    return pa;
}

ScalarField rasterize_conductivity(const Floorplan& fp, const ChipSpec& spec,
                                   const GridSpec& grid) {
    grid.validate();
    ScalarField f{grid, Unit::conductivity_w_per_m_k,
                  std::vector<double>(static_cast<std::size_t>(grid.cell_count()), 0.0)};

    // Layer base material per z-level of cell centers.
    std::vector<double> layer_k(static_cast<std::size_t>(grid.nz), 0.0);
    for (int iz = 0; iz < grid.nz; ++iz) {
        const double zc = (iz + 0.5) * grid.dz();
        const Layer* owner = &spec.layers.back();
        for (const auto& l : spec.layers) {
            if (zc >= l.z_lo && zc < l.z_hi) {
                owner = &l;
                break;
            }
        }
        layer_k[static_cast<std::size_t>(iz)] = spec.material(owner->material).conductivity;
    }

    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix)
                f.at(ix, iy, iz) = layer_k[static_cast<std::size_t>(iz)];

    // Material regions override the base; later regions win.
    for (const auto& region : fp.material_regions) {
        const double k = spec.material(region.material).conductivity;
        for (int iz = 0; iz < grid.nz; ++iz)
            for (int iy = 0; iy < grid.ny; ++iy)
                for (int ix = 0; ix < grid.nx; ++ix)
                    if (region.box.contains(grid.center(ix, iy, iz)))
                        f.at(ix, iy, iz) = k;
    }
    return f;
}

// Cell-center index range covered by [lo, hi) on one axis.
static std::pair<int, int> covered_range(double lo, double hi, double d, int n) {
    int first = static_cast<int>(std::ceil(lo / d - 0.5));
    int last = static_cast<int>(std::ceil(hi / d - 0.5)) - 1;
    first = std::max(first, 0);
    last = std::min(last, n - 1);
    return {first, last};
}

ScalarField rasterize_power(const PowerAssignment& pa, const Floorplan& fp,
                            const ChipSpec& spec, const GridSpec& grid) {
    grid.validate();
    if (pa.densities.size() != fp.blocks.size())
        throw DimensionMismatchError("rasterize_power: assignment/floorplan mismatch");
    ScalarField f{grid, Unit::power_density_w_per_m3,
                  std::vector<double>(static_cast<std::size_t>(grid.cell_count()), 0.0)};

    for (std::size_t bi = 0; bi < fp.blocks.size(); ++bi) {
        const Block& b = fp.blocks[bi];
        const double thickness = spec.layers[static_cast<std::size_t>(b.layer)].thickness();
        // W/mm^2 -> W/m^2 -> W/m^3 over the layer thickness.
        const double q_vol = pa.densities[bi] * 1e6 / thickness;
        const auto [x0, x1] = covered_range(b.box.lo[0], b.box.hi[0], grid.dx(), grid.nx);
        const auto [y0, y1] = covered_range(b.box.lo[1], b.box.hi[1], grid.dy(), grid.ny);
        const auto [z0, z1] = covered_range(b.box.lo[2], b.box.hi[2], grid.dz(), grid.nz);
        for (int iz = z0; iz <= z1; ++iz)
            for (int iy = y0; iy <= y1; ++iy)
                for (int ix = x0; ix <= x1; ++ix)
                    f.at(ix, iy, iz) = q_vol;
    }
    return f;
}

}  // namespace blockoa
