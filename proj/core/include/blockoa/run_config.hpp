#pragma once

#include <filesystem>
#include <string>

#include "blockoa/pipeline.hpp"

namespace blockoa {

// A run as described by the JSON config: what to generate and where. All
// JSON quantities carry explicit units (mm, W/mm^2, W/(m^2 K), degC) and are
// converted to SI on load. Unknown keys are rejected.
struct RunConfig {
    GenerationConfig gen;
    std::string method = "blockoa";  // "blockoa" | "direct"
    std::filesystem::path out;       // may be empty; --out overrides
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& file);

// Canonical JSON echo (sorted keys, round-trip-exact numbers). Parsing the
// result reproduces the config; this string is what manifests embed.
std::string serialize_run_config(const RunConfig& cfg);

// Default chip at a desk-scale grid; the starting point for the shipped
// configs/default.json.
RunConfig default_run_config();

}  // namespace blockoa
