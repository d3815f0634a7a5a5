#include "blockoa/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "blockoa/errors.hpp"

namespace blockoa {

using nlohmann::json;

namespace {

constexpr double kMm = 1e-3;

[[noreturn]] void bad(const std::string& msg) {
    throw InvalidConfigError("config: " + msg);
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
    if (!j.is_object()) bad(std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) bad("unknown key '" + it.key() + "' in " + where);
    }
}

double as_double(const json& j, const char* where) {
    if (!j.is_number()) bad(std::string(where) + " must be a number");
    return j.get<double>();
}

std::int64_t as_int(const json& j, const char* where) {
    if (!j.is_number_integer()) bad(std::string(where) + " must be an integer");
    return j.get<std::int64_t>();
}

std::uint64_t as_uint(const json& j, const char* where) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        bad(std::string(where) + " must be a non-negative integer");
    return j.get<std::uint64_t>();
}

std::string as_string(const json& j, const char* where) {
    if (!j.is_string()) bad(std::string(where) + " must be a string");
    return j.get<std::string>();
}

std::array<double, 2> as_range(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 2) bad(std::string(where) + " must be [lo, hi]");
    return {as_double(j[0], where), as_double(j[1], where)};
}

ChipSpec parse_chip(const json& j) {
    reject_unknown(j, {"extent_mm", "materials", "layers", "block_counts",
                       "power_ranges", "tsvs"},
                   "chip");
    ChipSpec chip;

    const json& ext = j.at("extent_mm");
    if (!ext.is_array() || ext.size() != 3) bad("chip.extent_mm must be [x, y, z]");
    for (int i = 0; i < 3; ++i)
        chip.extent[static_cast<std::size_t>(i)] =
            as_double(ext[static_cast<std::size_t>(i)], "chip.extent_mm") * kMm;

    for (const json& m : j.at("materials")) {
        reject_unknown(m, {"name", "conductivity_w_mk"}, "chip.materials[]");
        chip.materials.push_back({as_string(m.at("name"), "material name"),
                                  as_double(m.at("conductivity_w_mk"),
                                            "material conductivity")});
    }

    double z = 0.0;
    for (const json& l : j.at("layers")) {
        reject_unknown(l, {"thickness_mm", "material", "role"}, "chip.layers[]");
        Layer layer;
        layer.z_lo = z;
        layer.z_hi = z + as_double(l.at("thickness_mm"), "layer thickness") * kMm;
        z = layer.z_hi;
        layer.material = as_string(l.at("material"), "layer material");
        const std::string role = as_string(l.at("role"), "layer role");
        if (role == "core")
            layer.role = LayerRole::core;
        else if (role == "cache")
            layer.role = LayerRole::cache;
        else if (role == "tim")
            layer.role = LayerRole::tim;
        else
            bad("layer role must be core|cache|tim, got '" + role + "'");
        chip.layers.push_back(std::move(layer));
    }

    const json& bcnt = j.at("block_counts");
    reject_unknown(bcnt, {"core_blocks", "high_power", "caches_per_layer"},
                   "chip.block_counts");
    chip.block_counts.core_blocks =
        static_cast<int>(as_int(bcnt.at("core_blocks"), "core_blocks"));
    chip.block_counts.high_power =
        static_cast<int>(as_int(bcnt.at("high_power"), "high_power"));
    chip.block_counts.caches_per_layer =
        static_cast<int>(as_int(bcnt.at("caches_per_layer"), "caches_per_layer"));

    const json& pr = j.at("power_ranges");
    reject_unknown(pr, {"high_w_mm2", "normal_w_mm2", "cache_w_mm2"},
                   "chip.power_ranges");
    chip.power_ranges.high = as_range(pr.at("high_w_mm2"), "power_ranges.high_w_mm2");
    chip.power_ranges.normal =
        as_range(pr.at("normal_w_mm2"), "power_ranges.normal_w_mm2");
    chip.power_ranges.cache =
        as_range(pr.at("cache_w_mm2"), "power_ranges.cache_w_mm2");

    if (j.contains("tsvs") && !j.at("tsvs").is_null()) {
        const json& t = j.at("tsvs");
        reject_unknown(t, {"count", "width_mm", "material"}, "chip.tsvs");
        TsvSpec tsv;
        tsv.count = static_cast<int>(as_int(t.at("count"), "tsvs.count"));
        tsv.width = as_double(t.at("width_mm"), "tsvs.width_mm") * kMm;
        tsv.material = as_string(t.at("material"), "tsvs.material");
        chip.tsvs = tsv;
    } else {
        chip.tsvs.reset();
    }
    return chip;
}

json chip_to_json(const ChipSpec& chip) {
    json j;
    j["extent_mm"] = {chip.extent[0] / kMm, chip.extent[1] / kMm,
                      chip.extent[2] / kMm};
    json mats = json::array();
    for (const auto& m : chip.materials)
        mats.push_back({{"name", m.name}, {"conductivity_w_mk", m.conductivity}});
    j["materials"] = mats;
    json layers = json::array();
    for (const auto& l : chip.layers) {
        const char* role = l.role == LayerRole::core    ? "core"
                           : l.role == LayerRole::cache ? "cache"
                                                        : "tim";
        layers.push_back({{"thickness_mm", l.thickness() / kMm},
                          {"material", l.material},
                          {"role", role}});
    }
    j["layers"] = layers;
    j["block_counts"] = {{"core_blocks", chip.block_counts.core_blocks},
                         {"high_power", chip.block_counts.high_power},
                         {"caches_per_layer", chip.block_counts.caches_per_layer}};
    j["power_ranges"] = {{"high_w_mm2", chip.power_ranges.high},
                         {"normal_w_mm2", chip.power_ranges.normal},
                         {"cache_w_mm2", chip.power_ranges.cache}};
    if (chip.tsvs)
        j["tsvs"] = {{"count", chip.tsvs->count},
                     {"width_mm", chip.tsvs->width / kMm},
                     {"material", chip.tsvs->material}};
    else
        j["tsvs"] = nullptr;
    return j;
}

FaceCondition parse_face(const json& j, const char* face) {
    const std::string type = as_string(j.at("type"), "bc face type");
    if (type == "dirichlet") {
        reject_unknown(j, {"type", "u0_c"}, face);
        return Dirichlet{as_double(j.at("u0_c"), "bc u0_c")};
    }
    if (type == "robin") {
        reject_unknown(j, {"type", "h_w_m2k", "u_inf_c"}, face);
        return Robin{as_double(j.at("h_w_m2k"), "bc h_w_m2k"),
                     as_double(j.at("u_inf_c"), "bc u_inf_c")};
    }
    bad(std::string("bc face type must be dirichlet|robin, got '") + type + "'");
}

constexpr const char* kFaceKeys[6] = {"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"};

BoundarySpec parse_bc(const json& j) {
    reject_unknown(j, {"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"}, "bc");
    BoundarySpec bc;
    for (int f = 0; f < 6; ++f) {
        if (!j.contains(kFaceKeys[f])) bad(std::string("bc missing face ") + kFaceKeys[f]);
        bc.faces[static_cast<std::size_t>(f)] = parse_face(j.at(kFaceKeys[f]), kFaceKeys[f]);
    }
    return bc;
}

json bc_to_json(const BoundarySpec& bc) {
    json j;
    for (int f = 0; f < 6; ++f) {
        const FaceCondition& cond = bc.faces[static_cast<std::size_t>(f)];
        json jf;
        if (const Dirichlet* d = std::get_if<Dirichlet>(&cond)) {
            jf["type"] = "dirichlet";
            jf["u0_c"] = d->u0;
        } else {
            const Robin& r = std::get<Robin>(cond);
            jf["type"] = "robin";
            jf["h_w_m2k"] = r.h;
            jf["u_inf_c"] = r.u_inf;
        }
        j[kFaceKeys[f]] = jf;
    }
    return j;
}

NoiseConfig parse_noise(const json& j) {
    NoiseConfig noise;
    const std::string kind = as_string(j.at("kind"), "noise.kind");
    if (kind == "none") {
        reject_unknown(j, {"kind"}, "noise");
        noise.kind = NoiseConfig::Kind::none;
    } else if (kind == "uniform") {
        reject_unknown(j, {"kind", "lo", "hi"}, "noise");
        noise.kind = NoiseConfig::Kind::uniform;
        noise.lo = as_double(j.at("lo"), "noise.lo");
        noise.hi = as_double(j.at("hi"), "noise.hi");
    } else if (kind == "gaussian") {
        reject_unknown(j, {"kind", "sigma"}, "noise");
        noise.kind = NoiseConfig::Kind::gaussian;
        noise.sigma = as_double(j.at("sigma"), "noise.sigma");
    } else {
        bad("noise.kind must be none|uniform|gaussian, got '" + kind + "'");
    }
    return noise;
}

json noise_to_json(const NoiseConfig& n) {
    switch (n.kind) {
        case NoiseConfig::Kind::none:
            return json{{"kind", "none"}};
        case NoiseConfig::Kind::uniform:
            return json{{"kind", "uniform"}, {"lo", n.lo}, {"hi", n.hi}};
        case NoiseConfig::Kind::gaussian:
        default:
            return json{{"kind", "gaussian"}, {"sigma", n.sigma}};
    }
}

SolverConfig parse_solver(const json& j, SolverConfig base) {
    reject_unknown(j, {"rel_tol", "max_iter", "preconditioner"}, "solver");
    if (j.contains("rel_tol")) base.rel_tol = as_double(j.at("rel_tol"), "solver.rel_tol");
    if (j.contains("max_iter"))
        base.max_iter = static_cast<int>(as_int(j.at("max_iter"), "solver.max_iter"));
    if (j.contains("preconditioner")) {
        const std::string p = as_string(j.at("preconditioner"), "solver.preconditioner");
        if (p == "none")
            base.preconditioner = SolverConfig::Precond::none;
        else if (p == "jacobi")
            base.preconditioner = SolverConfig::Precond::jacobi;
        else
            bad("solver.preconditioner must be none|jacobi, got '" + p + "'");
    }
    return base;
}

json solver_to_json(const SolverConfig& s) {
    return json{{"rel_tol", s.rel_tol},
                {"max_iter", s.max_iter},
                {"preconditioner",
                 s.preconditioner == SolverConfig::Precond::jacobi ? "jacobi" : "none"}};
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.method = "blockoa";
    cfg.gen.chip = ChipSpec::default_chip();
    cfg.gen.grid = {24, 24, 12, cfg.gen.chip.extent[0], cfg.gen.chip.extent[1],
                    cfg.gen.chip.extent[2]};
    cfg.gen.bc = BoundarySpec::mixed(3e4, 50.0, 50.0);
    cfg.gen.n_data = 500;
    cfg.gen.n_basis = 50;
    cfg.gen.n_k = 5;
    cfg.gen.master_seed = 1;
    cfg.gen.noise.kind = NoiseConfig::Kind::uniform;
    cfg.gen.noise.lo = -0.01;
    cfg.gen.noise.hi = 0.01;
    cfg.gen.solver.rel_tol = 1e-9;
    cfg.gen.solver.max_iter = 50000;
    cfg.gen.solver.preconditioner = SolverConfig::Precond::jacobi;
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        bad(std::string("JSON parse error: ") + e.what());
    }
    reject_unknown(j, {"method", "out", "chip", "grid", "bc", "generation"},
                   "config root");

    RunConfig cfg = default_run_config();
    if (j.contains("method")) {
        cfg.method = as_string(j.at("method"), "method");
        if (cfg.method != "blockoa" && cfg.method != "direct")
            bad("method must be blockoa|direct, got '" + cfg.method + "'");
    }
    if (j.contains("out")) cfg.out = as_string(j.at("out"), "out");
    if (j.contains("chip")) cfg.gen.chip = parse_chip(j.at("chip"));
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        if (!g.is_array() || g.size() != 3) bad("grid must be [nx, ny, nz]");
        cfg.gen.grid.nx = static_cast<int>(as_int(g[0], "grid nx"));
        cfg.gen.grid.ny = static_cast<int>(as_int(g[1], "grid ny"));
        cfg.gen.grid.nz = static_cast<int>(as_int(g[2], "grid nz"));
    }
    if (j.contains("bc")) cfg.gen.bc = parse_bc(j.at("bc"));
    if (j.contains("generation")) {
        const json& g = j.at("generation");
        reject_unknown(g, {"n_data", "n_basis", "n_k", "master_seed", "noise", "solver"},
                       "generation");
        if (g.contains("n_data")) cfg.gen.n_data = as_int(g.at("n_data"), "n_data");
        if (g.contains("n_basis"))
            cfg.gen.n_basis = static_cast<int>(as_int(g.at("n_basis"), "n_basis"));
        if (g.contains("n_k")) cfg.gen.n_k = static_cast<int>(as_int(g.at("n_k"), "n_k"));
        if (g.contains("master_seed"))
            cfg.gen.master_seed = as_uint(g.at("master_seed"), "master_seed");
        if (g.contains("noise")) cfg.gen.noise = parse_noise(g.at("noise"));
        if (g.contains("solver")) cfg.gen.solver = parse_solver(g.at("solver"), cfg.gen.solver);
    }

    // The grid always spans the chip; spacing follows from the extent.
    cfg.gen.grid.lx = cfg.gen.chip.extent[0];
    cfg.gen.grid.ly = cfg.gen.chip.extent[1];
    cfg.gen.grid.lz = cfg.gen.chip.extent[2];
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) bad("cannot open config file " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
    // Canonical echo: every generation-relevant key, explicit values, sorted
    // keys. The output path is run plumbing, not dataset identity, and is
    // left out on purpose (the determinism contract compares across runs
    // that necessarily write to different directories).
    json j;
    j["method"] = cfg.method;
    j["chip"] = chip_to_json(cfg.gen.chip);
    j["grid"] = {cfg.gen.grid.nx, cfg.gen.grid.ny, cfg.gen.grid.nz};
    j["bc"] = bc_to_json(cfg.gen.bc);
    j["generation"] = {{"n_data", cfg.gen.n_data},
                       {"n_basis", cfg.gen.n_basis},
                       {"n_k", cfg.gen.n_k},
                       {"master_seed", cfg.gen.master_seed},
                       {"noise", noise_to_json(cfg.gen.noise)},
                       {"solver", solver_to_json(cfg.gen.solver)}};
    return j.dump(2);
}

}  // namespace blockoa
