#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockoa/grid.hpp"

namespace blockoa {

// Axis-aligned box, half-open on every axis so abutting boxes never
// double-claim a point.
struct Box {
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    std::array<double, 3> hi{0.0, 0.0, 0.0};

    [[nodiscard]] bool contains(const std::array<double, 3>& p) const {
        return p[0] >= lo[0] && p[0] < hi[0] && p[1] >= lo[1] && p[1] < hi[1] &&
               p[2] >= lo[2] && p[2] < hi[2];
    }
};

struct Material {
    std::string name;
    double conductivity = 0.0;  // W/(m*K)
};

enum class LayerRole { core, cache, tim };

// One slab of the stack; z_lo/z_hi in meters, bottom of the chip at z = 0.
struct Layer {
    double z_lo = 0.0;
    double z_hi = 0.0;
    std::string material;
    LayerRole role = LayerRole::core;

    [[nodiscard]] double thickness() const { return z_hi - z_lo; }
};

struct BlockCounts {
    int core_blocks = 0;
    int high_power = 0;
    int caches_per_layer = 0;
};

// Areal power density ranges in W/mm^2, closed intervals.
struct PowerRanges {
    std::array<double, 2> high{0.0, 0.0};
    std::array<double, 2> normal{0.0, 0.0};
    std::array<double, 2> cache{0.0, 0.0};
};

struct TsvSpec {
    int count = 0;
    double width = 0.0;  // square cross-section side, meters
    std::string material;
};

// Parametric chip description. All lengths in meters; the JSON config layer
// takes millimeters and converts on load.
struct ChipSpec {
    std::array<double, 3> extent{0.0, 0.0, 0.0};
    std::vector<Material> materials;
    std::vector<Layer> layers;  // ordered bottom to top, tiling [0, extent_z)
    BlockCounts block_counts;
    PowerRanges power_ranges;
    std::optional<TsvSpec> tsvs;

    [[nodiscard]] const Material& material(const std::string& name) const;
    void validate() const;

    // The stacked-die model used throughout the paper-scale experiments:
    // 10 x 10 x 0.51 mm, three 0.15 mm silicon dies (core on top, two cache
    // dies below) glued by 0.02 mm TIM layers, copper TSVs.
    static ChipSpec default_chip();
};

enum class BlockRole { high, normal, cache };

struct Block {
    Box box;
    int layer = 0;
    BlockRole role = BlockRole::normal;
};

struct MaterialRegion {
    Box box;
    std::string material;
};

struct Floorplan {
    std::uint64_t id = 0;
    std::vector<Block> blocks;
    std::vector<MaterialRegion> material_regions;  // TSVs and overrides
};

// One areal density (W/mm^2) per floorplan block, same order.
struct PowerAssignment {
    std::uint64_t floorplan_id = 0;
    std::vector<double> densities;
};

// n_k floorplans, deterministic in (spec, n_k, seed). Blocks within a layer
// never overlap; throws InvalidSpecError when the requested counts cannot be
// placed.
std::vector<Floorplan> build_floorplans(const ChipSpec& spec, int n_k,
                                        std::uint64_t seed);

// Uniform density per block inside its role's range, deterministic in
// (fp.id, seed).
PowerAssignment sample_power(const Floorplan& fp, const ChipSpec& spec,
                             std::uint64_t seed);

// Cell-center sampling: each cell takes the conductivity of whatever material
// covers its center (layer base, unless a material region overrides it).
ScalarField rasterize_conductivity(const Floorplan& fp, const ChipSpec& spec,
                                   const GridSpec& grid);

// Volumetric heat source in W/m^3: areal block density divided by the owning
// layer thickness, assigned to cells whose center the block covers.
ScalarField rasterize_power(const PowerAssignment& pa, const Floorplan& fp,
                            const ChipSpec& spec, const GridSpec& grid);

}  // namespace blockoa
