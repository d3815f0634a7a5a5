#include "blockoa/dataset_io.hpp"

#include <unistd.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <system_error>

#include <nlohmann/json.hpp>

#include "blockoa/errors.hpp"

namespace blockoa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kFieldFiles[3] = {"k.bin", "q.bin", "u.bin"};

// Payloads are little-endian float64 regardless of host.
void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    } else {
        for (double d : v) {
            auto bits = std::bit_cast<std::uint64_t>(d);
            char buf[8];
            for (int i = 0; i < 8; ++i)
                buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(buf, 8);
        }
    }
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    } else {
        char buf[8];
        for (double& d : v) {
            in.read(buf, 8);
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
                        << (8 * i);
            d = std::bit_cast<double>(bits);
        }
    }
}

json face_to_json(const FaceCondition& f) {
    json j;
    if (const Dirichlet* d = std::get_if<Dirichlet>(&f)) {
        j["type"] = "dirichlet";
        j["u0_c"] = d->u0;
    } else {
        const Robin& r = std::get<Robin>(f);
        j["type"] = "robin";
        j["h_w_m2k"] = r.h;
        j["u_inf_c"] = r.u_inf;
    }
    return j;
}

FaceCondition face_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "dirichlet") return Dirichlet{j.at("u0_c").get<double>()};
    if (type == "robin")
        return Robin{j.at("h_w_m2k").get<double>(), j.at("u_inf_c").get<double>()};
    throw CorruptManifestError("manifest: unknown boundary type '" + type + "'");
}

constexpr const char* kFaceKeys[6] = {"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"};

json bc_to_json(const BoundarySpec& bc) {
    json j;
    for (int f = 0; f < 6; ++f)
        j[kFaceKeys[f]] = face_to_json(bc.faces[static_cast<std::size_t>(f)]);
    return j;
}

BoundarySpec bc_from_json(const json& j) {
    BoundarySpec bc;
    for (int f = 0; f < 6; ++f)
        bc.faces[static_cast<std::size_t>(f)] = face_from_json(j.at(kFaceKeys[f]));
    return bc;
}

json timings_to_json(const PhaseTimings& t) {
    return json{{"basis_solve_s", t.basis_solve_s},
                {"combine_s", t.combine_s},
                {"operator_action_s", t.operator_action_s},
                {"solve_s", t.solve_s},
                {"total_s", t.total_s},
                {"iterations_total", t.iterations_total},
                {"matvecs_total", t.matvecs_total}};
}

PhaseTimings timings_from_json(const json& j) {
    PhaseTimings t;
    t.basis_solve_s = j.at("basis_solve_s").get<double>();
    t.combine_s = j.at("combine_s").get<double>();
    t.operator_action_s = j.at("operator_action_s").get<double>();
    t.solve_s = j.at("solve_s").get<double>();
    t.total_s = j.at("total_s").get<double>();
    t.iterations_total = j.at("iterations_total").get<std::int64_t>();
    t.matvecs_total = j.at("matvecs_total").get<std::int64_t>();
    return t;
}

json manifest_to_json(const Dataset& ds) {
    const DatasetManifest& m = ds.manifest;
    json j;
    j["format_version"] = m.format_version;
    j["method"] = m.method;
    j["n_data"] = m.n_data;
    j["grid"] = {ds.grid.nx, ds.grid.ny, ds.grid.nz};
    j["extent_m"] = {ds.grid.lx, ds.grid.ly, ds.grid.lz};
    j["bc"] = bc_to_json(ds.bc);
    j["master_seed"] = m.master_seed;
    j["floorplan_ids"] = m.floorplan_ids;
    j["timings"] = timings_to_json(m.timings);
    j["residual_tol_claimed"] = m.residual_tol_claimed;
    j["tool_version"] = m.tool_version;

    json digests = json::array();
    for (const auto& [id, digest] : m.floorplan_digests)
        digests.push_back(json{{"id", id}, {"k_digest", digest}});
    j["floorplan_digests"] = digests;
    j["requested_n_data"] = m.requested_n_data;
    j["dropped_count"] = m.dropped_count;
    if (!m.config_echo.empty()) j["config"] = json::parse(m.config_echo);
    return j;
}

template <typename T>
T required(const json& j, const char* key) {
    if (!j.contains(key))
        throw CorruptManifestError(std::string("manifest: missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw CorruptManifestError(std::string("manifest: bad value for '") + key +
                                   "': " + e.what());
    }
}

}  // namespace

WriteSummary write_dataset(const Dataset& ds, const fs::path& dir,
                           const WriteOptions& opts) {
    const std::int64_t n_cells = ds.grid.cell_count();
    const std::int64_t n_data = static_cast<std::int64_t>(ds.samples.size());
    if (ds.manifest.n_data != n_data)
        throw DimensionMismatchError("write_dataset: manifest n_data != samples");
    if (static_cast<std::int64_t>(ds.manifest.floorplan_ids.size()) != n_data)
        throw DimensionMismatchError("write_dataset: floorplan_ids != samples");
    for (const auto& s : ds.samples) {
        if (s.k.grid != ds.grid || s.q.grid != ds.grid || s.u.grid != ds.grid)
            throw DimensionMismatchError("write_dataset: sample grid mismatch");
        s.k.check_shape();
        s.q.check_shape();
        s.u.check_shape();
    }

    if (fs::exists(dir / kManifestName) && !opts.overwrite)
        throw ExistsError("write_dataset: '" + dir.string() +
                          "' already holds a dataset (use overwrite)");

    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    const fs::path staging =
        parent / (dir.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(staging, ec);
    if (!fs::create_directories(staging))
        throw IoError("write_dataset: cannot create staging dir " + staging.string());

    try {
        for (int f = 0; f < 3; ++f) {
            std::ofstream out(staging / kFieldFiles[f],
                              std::ios::binary | std::ios::trunc);
            if (!out) throw IoError(std::string("write_dataset: cannot open ") + kFieldFiles[f]);
            for (const auto& s : ds.samples) {
                const std::vector<double>& v =
                    f == 0 ? s.k.values : f == 1 ? s.q.values : s.u.values;
                write_doubles(out, v);
            }
            out.flush();
            if (!out) throw IoError(std::string("write_dataset: short write to ") + kFieldFiles[f]);
        }
        std::ofstream mout(staging / kManifestName, std::ios::trunc);
        if (!mout) throw IoError("write_dataset: cannot open manifest.json");
        mout << manifest_to_json(ds).dump(2) << '\n';
        mout.flush();
        if (!mout) throw IoError("write_dataset: short write to manifest.json");
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }

    // Re-check then swap; the window is tolerable under the single-writer
    // contract, and rename makes the dataset appear atomically.
    if (fs::exists(dir)) {
        if (fs::exists(dir / kManifestName) && !opts.overwrite) {
            fs::remove_all(staging, ec);
            throw ExistsError("write_dataset: '" + dir.string() +
                              "' already holds a dataset (use overwrite)");
        }
        fs::remove_all(dir);
    }
    fs::rename(staging, dir);

    return WriteSummary{dir, n_data, n_data * n_cells * 8};
}

Dataset read_dataset(const fs::path& dir) {
    std::ifstream min(dir / kManifestName);
    if (!min)
        throw CorruptManifestError("read_dataset: cannot open " +
                                   (dir / kManifestName).string());
    json j;
    try {
        j = json::parse(min);
    } catch (const json::exception& e) {
        throw CorruptManifestError(std::string("read_dataset: manifest parse: ") +
                                   e.what());
    }

    Dataset ds;
    DatasetManifest& m = ds.manifest;
    m.format_version = required<int>(j, "format_version");
    if (m.format_version != 1)
        throw CorruptManifestError("read_dataset: unsupported format_version");
    m.method = required<std::string>(j, "method");
    m.n_data = required<std::int64_t>(j, "n_data");
    const auto grid_counts = required<std::vector<std::int64_t>>(j, "grid");
    const auto extent = required<std::vector<double>>(j, "extent_m");
    if (grid_counts.size() != 3 || extent.size() != 3)
        throw CorruptManifestError("read_dataset: grid/extent_m must have 3 entries");
    if (!j.contains("bc")) throw CorruptManifestError("manifest: missing key 'bc'");
    try {
        ds.bc = bc_from_json(j.at("bc"));
    } catch (const json::exception& e) {
        throw CorruptManifestError(std::string("read_dataset: bad bc: ") + e.what());
    }
    m.master_seed = required<std::uint64_t>(j, "master_seed");
    m.floorplan_ids = required<std::vector<std::uint64_t>>(j, "floorplan_ids");
    if (!j.contains("timings")) throw CorruptManifestError("manifest: missing key 'timings'");
    try {
        m.timings = timings_from_json(j.at("timings"));
    } catch (const json::exception& e) {
        throw CorruptManifestError(std::string("read_dataset: bad timings: ") + e.what());
    }
    m.residual_tol_claimed = required<double>(j, "residual_tol_claimed");
    m.tool_version = required<std::string>(j, "tool_version");

    if (j.contains("floorplan_digests"))
        for (const auto& entry : j.at("floorplan_digests"))
            m.floorplan_digests.emplace_back(entry.at("id").get<std::uint64_t>(),
                                             entry.at("k_digest").get<std::uint64_t>());
    if (j.contains("requested_n_data"))
        m.requested_n_data = j.at("requested_n_data").get<std::int64_t>();
    if (j.contains("dropped_count"))
        m.dropped_count = j.at("dropped_count").get<std::int64_t>();
    if (j.contains("config")) m.config_echo = j.at("config").dump(2);

    ds.grid.nx = static_cast<int>(grid_counts[0]);
    ds.grid.ny = static_cast<int>(grid_counts[1]);
    ds.grid.nz = static_cast<int>(grid_counts[2]);
    ds.grid.lx = extent[0];
    ds.grid.ly = extent[1];
    ds.grid.lz = extent[2];
    ds.grid.validate();

    if (m.n_data < 0) throw CorruptManifestError("read_dataset: negative n_data");
    if (static_cast<std::int64_t>(m.floorplan_ids.size()) != m.n_data)
        throw CorruptManifestError("read_dataset: floorplan_ids length != n_data");

    const std::int64_t n_cells = ds.grid.cell_count();
    const std::uintmax_t expect =
        static_cast<std::uintmax_t>(m.n_data) * static_cast<std::uintmax_t>(n_cells) * 8;
    for (const char* name : kFieldFiles) {
        std::error_code ec;
        const std::uintmax_t size = fs::file_size(dir / name, ec);
        if (ec) throw SizeMismatchError(std::string("read_dataset: missing ") + name);
        if (size != expect)
            throw SizeMismatchError(std::string("read_dataset: ") + name + " is " +
                                    std::to_string(size) + " bytes, expected " +
                                    std::to_string(expect));
    }

    const Provenance prov =
        m.method == "blockoa" ? Provenance::blockoa : Provenance::direct;
    const Unit units[3] = {Unit::conductivity_w_per_m_k, Unit::power_density_w_per_m3,
                           Unit::temperature_c};
    ds.samples.resize(static_cast<std::size_t>(m.n_data));
    for (int f = 0; f < 3; ++f) {
        std::ifstream in(dir / kFieldFiles[f], std::ios::binary);
        if (!in) throw IoError(std::string("read_dataset: cannot open ") + kFieldFiles[f]);
        for (auto& s : ds.samples) {
            ScalarField& field = f == 0 ? s.k : f == 1 ? s.q : s.u;
            field.grid = ds.grid;
            field.unit = units[f];
            field.values.resize(static_cast<std::size_t>(n_cells));
            read_doubles(in, field.values);
            if (!in) throw SizeMismatchError(std::string("read_dataset: short read from ") +
                                             kFieldFiles[f]);
        }
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        ds.samples[i].floorplan_id = m.floorplan_ids[i];
        ds.samples[i].provenance = prov;
    }
    return ds;
}

ValidationReport validate_dataset(const fs::path& dir, double tol) {
    const Dataset ds = read_dataset(dir);

    std::map<std::uint64_t, std::uint64_t> declared;  // id -> digest
    for (const auto& [id, digest] : ds.manifest.floorplan_digests)
        declared[id] = digest;

    ValidationReport report;
    report.residuals.reserve(ds.samples.size());
    std::map<std::uint64_t, DiscreteOperator> ops;  // k digest -> operator

    for (const auto& s : ds.samples) {
        const std::uint64_t digest = field_digest(s.k);
        const auto it = declared.find(s.floorplan_id);
        if (it != declared.end() && it->second != digest) {
            // Stored conductivity contradicts the manifest: integrity failure.
            report.residuals.push_back(std::numeric_limits<double>::infinity());
            ++report.fail_count;
            report.max_residual = std::numeric_limits<double>::infinity();
            continue;
        }
        auto [op_it, fresh] = ops.try_emplace(digest);
        if (fresh) op_it->second = assemble(s.k, ds.grid, ds.bc);

        const double r = relative_residual(op_it->second, s.u.values, s.q);
        report.residuals.push_back(r);
        report.max_residual = std::max(report.max_residual, r);
        if (r <= tol)
            ++report.pass_count;
        else
            ++report.fail_count;
    }
    return report;
}

}  // namespace blockoa
