#include "ncs/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace ncs {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (policies.empty()) throw ConfigError("config: no policies selected");
    if (loops.empty()) throw ConfigError("config: no loop counts selected");
    for (int n : loops) {
        if (n < 1) throw ConfigError("config: loop counts must be >= 1");
        (void)assign_state_matrices(n, plant);
    }
    if (runs < 1) throw ConfigError("config: runs must be >= 1");
    if (horizon_steps < AveragingWindow{}.last)
        throw ConfigError("config: horizon must reach the end of the averaging window (3000 steps)");
    if (sampling_period_us <= 0) throw ConfigError("config: sampling period must be positive");
    if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
    mac.validate();
    for (const auto& p : policies) p.params.validate();
}

std::vector<double> assign_state_matrices(int n_loops) {
    static const std::vector<double> fixed{1.1, 1.1, 1.2, 1.0, 1.1, 1.0, 1.2, 1.0, 1.2, 1.2, 1.0, 1.1};
    if (n_loops < 1) throw ConfigError("assign_state_matrices: need at least one loop");
    if (n_loops > static_cast<int>(fixed.size()))
        throw ConfigError("assign_state_matrices: more than 12 loops requires an explicit a_values assignment");
    return {fixed.begin(), fixed.begin() + n_loops};
}

std::vector<double> assign_state_matrices(int n_loops, const PlantParams& plant) {
    if (plant.a_values.empty()) return assign_state_matrices(n_loops);
    if (n_loops < 1 || n_loops > static_cast<int>(plant.a_values.size()))
        throw ConfigError("assign_state_matrices: a_values has fewer entries than loops");
    return {plant.a_values.begin(), plant.a_values.begin() + n_loops};
}

PolicyConfig make_cell(const ExperimentConfig& config, PolicyKind kind, std::optional<double> lambda) {
    PolicyConfig cell{kind, config.policy_params};
    cell.params.sampling_period_us = config.sampling_period_us;
    if (lambda) {
        if (kind == PolicyKind::at)
            cell.params.at.lambda0 = *lambda;
        else
            cell.params.lambda = *lambda;
    }
    return cell;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"default", "full"};
    return names;
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    if (name == "default") {
        c.policies = {make_cell(c, PolicyKind::zwet, 50.0)};
    } else if (name == "full") {
        c.policies = {make_cell(c, PolicyKind::udp),         make_cell(c, PolicyKind::tcp),
                      make_cell(c, PolicyKind::zw),          make_cell(c, PolicyKind::acp),
                      make_cell(c, PolicyKind::et, 15.0),    make_cell(c, PolicyKind::zwet, 15.0),
                      make_cell(c, PolicyKind::zwet, 50.0),  make_cell(c, PolicyKind::zwet, 300.0),
                      make_cell(c, PolicyKind::at, 50.0)};
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

// JSON config ------------------------------------------------------------------

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [key, _] : obj.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

void read_mac(const json& j, MacConfig& mac) {
    reject_unknown(j, {"slot_us", "data_tx_us", "ack_tx_us", "max_retries", "min_be", "max_be", "queue_capacity"},
                   "mac");
    read(j, "slot_us", mac.slot_us);
    read(j, "data_tx_us", mac.data_tx_us);
    read(j, "ack_tx_us", mac.ack_tx_us);
    read(j, "max_retries", mac.max_retries);
    read(j, "min_be", mac.min_be);
    read(j, "max_be", mac.max_be);
    read(j, "queue_capacity", mac.queue_capacity);
}

void read_policy_params(const json& j, PolicyParams& p) {
    reject_unknown(j, {"lambda", "ack_timeout_us", "at", "tcp", "acp"}, "policy_params");
    read(j, "lambda", p.lambda);
    read(j, "ack_timeout_us", p.ack_timeout_us);
    if (j.contains("at")) {
        const auto& a = j.at("at");
        reject_unknown(a, {"lambda0", "lambda_min", "lambda_max", "factor", "streak_length"}, "policy_params.at");
        read(a, "lambda0", p.at.lambda0);
        read(a, "lambda_min", p.at.lambda_min);
        read(a, "lambda_max", p.at.lambda_max);
        read(a, "factor", p.at.factor);
        read(a, "streak_length", p.at.streak_length);
    }
    if (j.contains("tcp")) {
        const auto& t = j.at("tcp");
        reject_unknown(t, {"initial_cwnd", "initial_ssthresh", "initial_rto_us", "rto_min_us", "rto_max_us"},
                       "policy_params.tcp");
        read(t, "initial_cwnd", p.tcp.initial_cwnd);
        read(t, "initial_ssthresh", p.tcp.initial_ssthresh);
        read(t, "initial_rto_us", p.tcp.initial_rto_us);
        read(t, "rto_min_us", p.tcp.rto_min_us);
        read(t, "rto_max_us", p.tcp.rto_max_us);
    }
    if (j.contains("acp")) {
        const auto& a = j.at("acp");
        reject_unknown(a, {"gamma", "initial_rate_hz", "rate_min_hz", "min_epoch_us", "epoch_srtt_multiple"},
                       "policy_params.acp");
        read(a, "gamma", p.acp.gamma);
        read(a, "initial_rate_hz", p.acp.initial_rate_hz);
        read(a, "rate_min_hz", p.acp.rate_min_hz);
        read(a, "min_epoch_us", p.acp.min_epoch_us);
        read(a, "epoch_srtt_multiple", p.acp.epoch_srtt_multiple);
    }
}

PolicyKind policy_kind(const std::string& name) {
    if (auto k = parse_policy(name)) return *k;
    throw ConfigError("config: unknown policy '" + name + "'");
}

std::vector<double> lambda_list(const json& v) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) return v.get<std::vector<double>>();
    throw ConfigError("config: lambda must be a number or a list of numbers");
}

std::vector<PolicyConfig> read_policies(const json& j, const ExperimentConfig& c) {
    if (!j.is_array()) throw ConfigError("config: 'policies' must be a list");
    std::vector<PolicyConfig> out;
    for (const auto& item : j) {
        if (item.is_string()) {
            const auto kind = policy_kind(item.get<std::string>());
            out.push_back(make_cell(c, kind));
            continue;
        }
        reject_unknown(item, {"policy", "lambda", "lambda0"}, "policies[]");
        if (!item.contains("policy")) throw ConfigError("config: policy entry without 'policy'");
        const auto kind = policy_kind(item.at("policy").get<std::string>());
        std::vector<double> lambdas;
        if (item.contains("lambda")) lambdas = lambda_list(item.at("lambda"));
        if (item.contains("lambda0")) lambdas = lambda_list(item.at("lambda0"));
        if (lambdas.empty()) {
            out.push_back(make_cell(c, kind));
        } else {
            for (double l : lambdas) out.push_back(make_cell(c, kind, l));
        }
    }
    return out;
}

}  // namespace

ExperimentConfig apply_config_json(ExperimentConfig base, const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"preset", "policies", "loops", "runs", "seed", "horizon_steps", "sampling_period_us", "out_dir",
                    "jobs", "aoi_unit", "plant", "mac", "policy_params", "divergence_ceiling"},
                   "config");

    ExperimentConfig c = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : std::move(base);
    read(j, "loops", c.loops);
    read(j, "runs", c.runs);
    read(j, "seed", c.master_seed);
    read(j, "horizon_steps", c.horizon_steps);
    read(j, "sampling_period_us", c.sampling_period_us);
    read(j, "out_dir", c.out_dir);
    read(j, "jobs", c.jobs);
    read(j, "divergence_ceiling", c.divergence_ceiling);
    if (j.contains("aoi_unit")) {
        const auto unit = j.at("aoi_unit").get<std::string>();
        if (unit == "periods")
            c.aoi_unit = AoiUnit::periods;
        else if (unit == "ms")
            c.aoi_unit = AoiUnit::ms;
        else
            throw ConfigError("config: aoi_unit must be 'periods' or 'ms'");
    }
    if (j.contains("plant")) {
        const auto& p = j.at("plant");
        reject_unknown(p, {"a_values", "b", "sigma", "q", "r"}, "plant");
        read(p, "a_values", c.plant.a_values);
        read(p, "b", c.plant.b);
        read(p, "sigma", c.plant.sigma);
        read(p, "q", c.plant.q);
        read(p, "r", c.plant.r);
    }
    if (j.contains("mac")) read_mac(j.at("mac"), c.mac);

    const bool params_changed = j.contains("policy_params") || j.contains("sampling_period_us");
    if (j.contains("policy_params")) read_policy_params(j.at("policy_params"), c.policy_params);
    if (j.contains("policies")) {
        c.policies = read_policies(j.at("policies"), c);
    } else if (params_changed) {
        // Re-derive existing cells so new defaults apply while thresholds are kept.
        for (auto& cell : c.policies) cell = make_cell(c, cell.kind, cell.reported_lambda());
    }
    return c;
}

ExperimentConfig load_config_file(ExperimentConfig base, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return apply_config_json(std::move(base), buf.str());
}

ScenarioConfig make_scenario(const ExperimentConfig& config, const PolicyConfig& policy, int n_loops) {
    ScenarioConfig s;
    s.policy = policy;
    s.policy.params.sampling_period_us = config.sampling_period_us;
    for (double a : assign_state_matrices(n_loops, config.plant))
        s.systems.push_back(SystemMatrices::scalar(a, config.plant.b, config.plant.sigma, config.plant.q, config.plant.r));
    s.horizon_steps = config.horizon_steps;
    s.sampling_period_us = config.sampling_period_us;
    s.mac = config.mac;
    s.divergence_ceiling = config.divergence_ceiling;
    return s;
}

// Sweep ------------------------------------------------------------------------

const AggregateRow* SweepResult::find(PolicyKind kind, int n_loops, std::optional<double> lambda) const {
    for (const auto& a : aggregates) {
        if (a.policy.kind != kind || a.n_loops != n_loops) continue;
        if (lambda && a.policy.reported_lambda() != lambda) continue;
        return &a;
    }
    return nullptr;
}

SweepResult run_sweep(const ExperimentConfig& config, const ProgressFn& progress) {
    config.validate();

    struct Task {
        std::size_t cell;
        int n_loops;
        int run_id;
    };
    std::vector<Task> tasks;
    std::vector<ScenarioConfig> scenarios;  // per (cell, N)
    for (std::size_t c = 0; c < config.policies.size(); ++c)
        for (int n : config.loops) {
            scenarios.push_back(make_scenario(config, config.policies[c], n));
            for (int r = 0; r < config.runs; ++r) tasks.push_back({c, n, r});
        }

    std::vector<RunRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const auto& t = tasks[i];
            const auto& scenario = scenarios[i / static_cast<std::size_t>(config.runs)];
            try {
                const std::uint64_t seed = derive_run_seed(config.master_seed, static_cast<std::uint64_t>(t.run_id));
                const RunTrace trace = run(scenario, seed);
                RunRow& row = rows[i];
                row.policy = config.policies[t.cell];
                row.n_loops = t.n_loops;
                row.run_id = t.run_id;
                row.seed = seed;
                row.summary = summarize(trace, scenario.systems);
                row.counters = trace.counters;
                row.diverged_step = trace.diverged_step;
                row.diverged_loop = trace.diverged_loop;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
            const auto finished = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(finished, tasks.size());
            }
        }
    };

    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(tasks.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    SweepResult result;
    result.aoi_unit = config.aoi_unit;
    result.sampling_period_us = config.sampling_period_us;
    const double aoi_scale =
        config.aoi_unit == AoiUnit::ms ? static_cast<double>(config.sampling_period_us) / 1000.0 : 1.0;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        AggregateRow agg;
        const auto& first = rows[s * static_cast<std::size_t>(config.runs)];
        agg.policy = first.policy;
        agg.n_loops = first.n_loops;
        agg.runs = config.runs;
        for (int r = 0; r < config.runs; ++r) {
            const auto& row = rows[s * static_cast<std::size_t>(config.runs) + static_cast<std::size_t>(r)];
            agg.aoi.push_back(row.summary.mean_aoi * aoi_scale);
            agg.lqg.push_back(row.summary.mean_lqg);
            if (row.summary.diverged) ++agg.diverged_runs;
        }
        result.aggregates.push_back(std::move(agg));
    }
    result.rows = std::move(rows);
    return result;
}

// CSV --------------------------------------------------------------------------

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_number failed");
    return {buf, end};
}

namespace {

std::string policy_notes(const PolicyConfig& p) {
    return p.kind == PolicyKind::acp ? "ACP-simplified" : "";
}

std::string join_notes(std::initializer_list<std::string> parts) {
    std::string out;
    for (const auto& p : parts) {
        if (p.empty()) continue;
        if (!out.empty()) out += ';';
        out += p;
    }
    return out;
}

std::string lambda_field(const PolicyConfig& p) {
    const auto l = p.reported_lambda();
    return l ? format_number(*l) : "";
}

}  // namespace

void write_runs_csv(std::ostream& out, const SweepResult& result) {
    const double aoi_scale =
        result.aoi_unit == AoiUnit::ms ? static_cast<double>(result.sampling_period_us) / 1000.0 : 1.0;
    out << kRunsCsvHeader << '\n';
    for (const auto& r : result.rows) {
        std::string diverged_note;
        if (r.summary.diverged)
            diverged_note = "diverged loop=" + std::to_string(r.diverged_loop + 1) +
                            " step=" + std::to_string(r.diverged_step);
        out << to_string(r.policy.kind) << ',' << r.n_loops << ',' << r.run_id << ',' << r.seed << ','
            << format_number(r.summary.mean_aoi * aoi_scale) << ',' << format_number(r.summary.mean_lqg) << ','
            << (r.summary.diverged ? 1 : 0) << ',' << lambda_field(r.policy) << ','
            << join_notes({policy_notes(r.policy), diverged_note}) << '\n';
    }
}

void write_aggregate_csv(std::ostream& out, const SweepResult& result) {
    out << kAggregateCsvHeader << '\n';
    for (const auto& a : result.aggregates) {
        out << to_string(a.policy.kind) << ',' << a.n_loops << ',' << lambda_field(a.policy) << ',' << a.runs << ',';
        if (a.runs >= 2) {
            const auto aoi = confidence_interval(a.aoi);
            const auto lqg = confidence_interval(a.lqg);
            out << format_number(aoi.mean) << ',' << format_number(aoi.lo) << ',' << format_number(aoi.hi) << ','
                << format_number(lqg.mean) << ',' << format_number(lqg.lo) << ',' << format_number(lqg.hi);
        } else {
            out << format_number(sample_mean(a.aoi)) << ",,," << format_number(sample_mean(a.lqg)) << ",,";
        }
        out << ',' << a.diverged_runs << ',' << policy_notes(a.policy) << '\n';
    }
}

}  // namespace ncs
