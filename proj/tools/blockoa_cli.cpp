// blockoa: dataset generation, validation, and benchmarking from the shell.
//
// Exit codes: 0 success; 1 validation failures; 2 bad config/usage;
// 3 generation or IO failure. Standard output carries exactly one JSON line
// per invocation; diagnostics go to standard error.

#include <sys/utsname.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "blockoa/dataset_io.hpp"
#include "blockoa/errors.hpp"
#include "blockoa/pipeline.hpp"
#include "blockoa/run_config.hpp"
#include "blockoa/version.hpp"

namespace {

using blockoa::RunConfig;
using nlohmann::json;

std::string host_description() {
    utsname u{};
    std::string host = "unknown";
    if (uname(&u) == 0)
        host = std::string(u.sysname) + " " + u.release + " " + u.machine;
    const unsigned hw = std::thread::hardware_concurrency();
    return host + ", " + std::to_string(hw ? hw : 1) + " hw threads, " +
           blockoa::kToolVersion;
}

void emit(const json& summary) { std::cout << summary.dump() << "\n"; }

struct GenerateArgs {
    std::string method;  // empty: take the config's
    std::string config_file;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool overwrite = false;
};

int run_generate(const GenerateArgs& a, int threads) {
    RunConfig cfg;
    try {
        cfg = blockoa::load_run_config(a.config_file);
        if (!a.method.empty()) cfg.method = a.method;
        if (a.seed) cfg.gen.master_seed = *a.seed;
        cfg.out = a.out_dir;
        cfg.gen.threads = threads;
        cfg.gen.validate();
    } catch (const blockoa::Error& e) {
        std::cerr << "blockoa generate: " << e.what() << "\n";
        return 2;
    }

    try {
        blockoa::GenerationResult res = cfg.method == "direct"
                                            ? blockoa::generate_direct(cfg.gen)
                                            : blockoa::generate_blockoa(cfg.gen);
        res.dataset.manifest.config_echo = blockoa::serialize_run_config(cfg);
        const blockoa::WriteSummary ws =
            blockoa::write_dataset(res.dataset, cfg.out, {a.overwrite});

        double max_residual = 0.0;
        for (const auto& s : res.dataset.samples)
            max_residual = std::max(max_residual, s.residual);

        json summary{{"command", "generate"},
                     {"method", cfg.method},
                     {"out", ws.dir.string()},
                     {"n_data", res.dataset.manifest.n_data},
                     {"dropped", res.dropped},
                     {"wall_s", res.timings.total_s},
                     {"max_residual", max_residual}};
        emit(summary);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "blockoa generate: " << e.what() << "\n";
        return 3;
    }
}

struct BenchArgs {
    std::string config_file;
    std::string out_file;
    std::vector<double> tols{1e-5, 1e-9};
    std::vector<int> sizes{16, 24};
};

std::string grid_name(const blockoa::GridSpec& g) {
    return std::to_string(g.nx) + "x" + std::to_string(g.ny) + "x" +
           std::to_string(g.nz);
}

int run_bench(const BenchArgs& a, int threads) {
    RunConfig base;
    try {
        base = blockoa::load_run_config(a.config_file);
        base.gen.threads = threads;
        if (a.sizes.empty()) throw blockoa::InvalidConfigError("bench: empty size list");
        for (int n : a.sizes)
            if (n < 2) throw blockoa::InvalidConfigError("bench: grid size must be >= 2");
        for (double t : a.tols)
            if (!(t > 0.0)) throw blockoa::InvalidConfigError("bench: tol must be > 0");
        base.gen.validate();
    } catch (const blockoa::Error& e) {
        std::cerr << "blockoa bench: " << e.what() << "\n";
        return 2;
    }

    json cells = json::array();
    try {
        for (int n : a.sizes) {
            blockoa::GenerationConfig gen = base.gen;
            gen.grid.nx = gen.grid.ny = gen.grid.nz = n;
            const std::string gname = grid_name(gen.grid);

            // Both methods consume the same floorplan/power streams: the
            // seed, chip, and grid agree, only the solve strategy differs.
            blockoa::GenerationResult koa = blockoa::generate_blockoa(gen);
            cells.push_back({{"method", "blockoa"},
                             {"grid", gname},
                             {"total_s", koa.timings.total_s},
                             {"basis_solve_s", koa.timings.basis_solve_s},
                             {"operator_action_s", koa.timings.operator_action_s},
                             {"iterations", koa.timings.iterations_total}});

            for (double tol : a.tols) {
                // The reference cells time plain CG at the requested
                // tolerance; the config's solver block tunes the blockoa
                // basis only.
                blockoa::GenerationConfig dgen = gen;
                dgen.solver.rel_tol = tol;
                dgen.solver.preconditioner = blockoa::SolverConfig::Precond::none;
                blockoa::GenerationResult direct = blockoa::generate_direct(dgen);
                cells.push_back(
                    {{"method", "direct"},
                     {"grid", gname},
                     {"tol", tol},
                     {"total_s", direct.timings.total_s},
                     {"iterations", direct.timings.iterations_total},
                     {"speedup", direct.timings.total_s / koa.timings.total_s}});
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "blockoa bench: " << e.what() << "\n";
        return 3;
    }

    json report{{"cells", cells}, {"host", host_description()}};
    if (!a.out_file.empty()) {
        std::ofstream out(a.out_file);
        if (!out) {
            std::cerr << "blockoa bench: cannot write " << a.out_file << "\n";
            return 3;
        }
        out << report.dump(2) << "\n";
        emit(json{{"command", "bench"},
                  {"cells", cells.size()},
                  {"out", a.out_file}});
    } else {
        emit(report);
    }
    return 0;
}

int run_validate(const std::string& dir, double tol) {
    blockoa::ValidationReport rep;
    try {
        rep = blockoa::validate_dataset(dir, tol);
    } catch (const std::exception& e) {
        std::cerr << "blockoa validate: " << e.what() << "\n";
        return 2;
    }
    emit(json{{"command", "validate"},
              {"dir", dir},
              {"tol", tol},
              {"pass", rep.pass_count},
              {"fail", rep.fail_count},
              {"max_residual", rep.max_residual}});
    return rep.fail_count == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"steady-state IC thermal dataset generator"};
    app.require_subcommand(1);

    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap (>= 1)")
        ->envname("BLOCKOA_THREADS")
        ->check(CLI::PositiveNumber);

    GenerateArgs ga;
    CLI::App* gen = app.add_subcommand("generate", "produce a dataset directory");
    gen->add_option("--method", ga.method, "blockoa | direct (default: config's)")
        ->check(CLI::IsMember({"blockoa", "direct"}));
    gen->add_option("--config", ga.config_file, "run config JSON")->required();
    gen->add_option("--out", ga.out_dir, "output dataset directory")->required();
    std::int64_t seed_flag = 0;
    CLI::Option* seed_opt =
        gen->add_option("--seed", seed_flag, "override master_seed")
            ->check(CLI::NonNegativeNumber);
    gen->add_flag("--overwrite", ga.overwrite, "replace an existing dataset");

    BenchArgs ba;
    CLI::App* bench =
        app.add_subcommand("bench", "time blockoa against direct CG solves");
    bench->add_option("--config", ba.config_file, "run config JSON")->required();
    bench->add_option("--out", ba.out_file, "report JSON path (default: stdout)");
    bench->add_option("--tols", ba.tols, "CG tolerances")->delimiter(',');
    bench->add_option("--sizes", ba.sizes, "cubic grid edge sizes")->delimiter(',');

    std::string val_dir;
    double val_tol = 1e-10;
    CLI::App* val =
        app.add_subcommand("validate", "recheck stored samples against their operators");
    val->add_option("dir", val_dir, "dataset directory")->required();
    val->add_option("--tol", val_tol, "relative residual bound")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "blockoa: " << e.what() << "\n";
        return 2;
    }

    if (seed_opt->count() > 0) ga.seed = static_cast<std::uint64_t>(seed_flag);

    if (gen->parsed()) return run_generate(ga, threads);
    if (bench->parsed()) return run_bench(ba, threads);
    if (val->parsed()) return run_validate(val_dir, val_tol);
    return 2;  // unreachable given require_subcommand
}
