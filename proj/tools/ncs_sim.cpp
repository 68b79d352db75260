// Command-line driver: parameter sweeps to CSV and single-run trace dumps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ncs/experiment.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kIoError = 2 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Overrides {
    std::string preset = "default";
    std::string config_file;
    std::vector<std::string> policies;
    std::vector<int> loops;
    std::optional<int> runs;
    std::optional<std::uint64_t> seed;
    std::vector<double> lambdas;
    std::string out;
    std::optional<int> jobs;
    std::string aoi_unit;
};

void add_common(CLI::App& app, Overrides& o) {
    app.add_option("--preset", o.preset, "Base parameter set")->check(CLI::IsMember(ncs::preset_names()));
    app.add_option("--config", o.config_file, "JSON config file applied on top of the preset");
    app.add_option("--policy", o.policies, "Policies: udp,tcp,zw,acp,et,zwet,at")->delimiter(',');
    app.add_option("--loops", o.loops, "Numbers of control loops, e.g. 1,2,4,8,12")->delimiter(',');
    app.add_option("--runs", o.runs, "Measurement runs per (policy, N)");
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--lambda", o.lambdas, "Thresholds for et/zwet (lambda0 for at)")->delimiter(',');
    app.add_option("--out", o.out, "Output directory (sweep) or file (trace); overrides $NCS_OUT_DIR");
    app.add_option("--jobs", o.jobs, "Parallel runs");
    app.add_option("--aoi-unit", o.aoi_unit, "AoI unit in CSV output")->check(CLI::IsMember({"periods", "ms"}));
}

ncs::ExperimentConfig resolve(const Overrides& o) {
    ncs::ExperimentConfig c = ncs::preset(o.preset);
    if (!o.config_file.empty()) c = ncs::load_config_file(std::move(c), o.config_file);
    if (const char* env = std::getenv("NCS_OUT_DIR"); env && *env) c.out_dir = env;

    if (!o.loops.empty()) c.loops = o.loops;
    if (o.runs) c.runs = *o.runs;
    if (o.seed) c.master_seed = *o.seed;
    if (o.jobs) c.jobs = *o.jobs;
    if (!o.out.empty()) c.out_dir = o.out;
    if (o.aoi_unit == "ms") c.aoi_unit = ncs::AoiUnit::ms;
    if (o.aoi_unit == "periods") c.aoi_unit = ncs::AoiUnit::periods;

    std::vector<ncs::PolicyKind> kinds;
    if (!o.policies.empty()) {
        for (const auto& name : o.policies) {
            auto k = ncs::parse_policy(name);
            if (!k) throw ncs::ConfigError("unknown policy '" + name + "'");
            kinds.push_back(*k);
        }
    }
    if (!kinds.empty() || !o.lambdas.empty()) {
        std::vector<ncs::PolicyConfig> cells;
        std::set<std::string> seen;
        auto add = [&](ncs::PolicyConfig cell) {
            if (seen.insert(cell.label()).second) cells.push_back(std::move(cell));
        };
        if (kinds.empty())
            for (const auto& cell : c.policies) kinds.push_back(cell.kind);
        for (auto kind : kinds) {
            if (ncs::uses_threshold(kind) && !o.lambdas.empty()) {
                for (double l : o.lambdas) add(ncs::make_cell(c, kind, l));
            } else if (o.policies.empty()) {
                for (const auto& cell : c.policies)
                    if (cell.kind == kind) add(cell);
            } else {
                add(ncs::make_cell(c, kind));
            }
        }
        c.policies = std::move(cells);
    }
    c.validate();
    return c;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

int run_sweep_command(const Overrides& o, bool quiet) {
    const auto config = resolve(o);
    const fs::path dir = config.out_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    auto progress = [quiet](std::size_t done, std::size_t total) {
        if (!quiet && (done == total || done % 20 == 0)) std::cerr << "\r" << done << "/" << total << " runs" << std::flush;
    };
    const auto result = ncs::run_sweep(config, progress);
    if (!quiet) std::cerr << "\n";

    std::ostringstream runs;
    std::ostringstream aggregate;
    ncs::write_runs_csv(runs, result);
    ncs::write_aggregate_csv(aggregate, result);
    write_file(dir / "runs.csv", runs.str());
    write_file(dir / "aggregate.csv", aggregate.str());
    if (!quiet) std::cerr << "wrote " << (dir / "runs.csv").string() << " and " << (dir / "aggregate.csv").string() << "\n";
    return kOk;
}

int run_trace_command(const Overrides& o, int run_id) {
    const auto config = resolve(o);
    if (config.policies.size() != 1 || config.loops.size() != 1)
        throw ncs::ConfigError("trace needs exactly one policy cell and one loop count");
    const auto scenario = ncs::make_scenario(config, config.policies.front(), config.loops.front());
    const auto trace = ncs::run(scenario, config.master_seed, static_cast<std::uint64_t>(run_id));

    std::ostringstream out;
    out << "loop,k,x,u,age\n";
    for (std::size_t i = 0; i < trace.loops.size(); ++i) {
        const auto& l = trace.loops[i];
        for (std::size_t k = 0; k < l.steps(); ++k)
            out << i + 1 << ',' << k << ',' << ncs::format_number(l.state(k).norm()) << ','
                << ncs::format_number(l.input(k).norm()) << ',' << l.age[k] << '\n';
    }
    const fs::path path = o.out.empty() ? fs::path(config.out_dir) / "trace.csv" : fs::path(o.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, out.str());
    const auto s = ncs::summarize(trace, scenario.systems);
    std::cerr << "mean_aoi=" << ncs::format_number(s.mean_aoi) << " mean_lqg=" << ncs::format_number(s.mean_lqg)
              << " diverged=" << (s.diverged ? 1 : 0) << " delivered=" << trace.counters.delivered
              << " dropped=" << trace.counters.dropped << " -> " << path.string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Networked control loops over a shared CSMA/CA channel: transport-layer policy sweeps"};
    app.require_subcommand(0, 1);

    Overrides sweep_opts;
    bool quiet = false;
    add_common(app, sweep_opts);
    app.add_flag("-q,--quiet", quiet, "No progress output");

    auto* sweep = app.add_subcommand("sweep", "Run (policy x N x runs) and write runs.csv + aggregate.csv");
    Overrides sub_sweep;
    add_common(*sweep, sub_sweep);
    sweep->add_flag("-q,--quiet", quiet, "No progress output");

    auto* trace = app.add_subcommand("trace", "Dump the per-step trace of a single run");
    Overrides sub_trace;
    int run_id = 0;
    add_common(*trace, sub_trace);
    trace->add_option("--run-id", run_id, "Run index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*trace) return run_trace_command(sub_trace, run_id);
        return run_sweep_command(*sweep ? sub_sweep : sweep_opts, quiet);
    } catch (const ncs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ncs::SolverError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    }
}
