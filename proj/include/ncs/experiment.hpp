#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ncs/engine.hpp"
#include "ncs/metrics.hpp"
#include "ncs/policy.hpp"

namespace ncs {

// Scalar plant parameters shared by all loops; A varies per loop.
struct PlantParams {
    std::vector<double> a_values;  // explicit per-loop A; empty = fixed 12-loop assignment
    double b = 1.0;
    double sigma = 1.0;
    double q = 100.0;
    double r = 1.0;
};

enum class AoiUnit { periods, ms };

struct ExperimentConfig {
    std::vector<PolicyConfig> policies;
    std::vector<int> loops{1, 2, 4, 8, 12};
    int runs = 20;
    std::uint64_t master_seed = 1;
    Step horizon_steps = 3000;
    TimeUs sampling_period_us = 10'000;
    MacConfig mac;
    PolicyParams policy_params;  // defaults for every policy cell
    PlantParams plant;
    double divergence_ceiling = 1e9;
    AoiUnit aoi_unit = AoiUnit::periods;
    std::string out_dir = "results";
    int jobs = 1;

    void validate() const;
};

// A_i for loops 1..n: 1.1 for i in {1,2,5,12}, 1.0 for {4,6,8,11}, 1.2 for {3,7,9,10}.
// n > 12 needs an explicit assignment.
[[nodiscard]] std::vector<double> assign_state_matrices(int n_loops);
[[nodiscard]] std::vector<double> assign_state_matrices(int n_loops, const PlantParams& plant);

// "default": all network/plant defaults, ZW-ET with lambda = 50.
// "full": udp, tcp, zw, acp, et(15), zwet(15, 50, 300), at(50) over N in {1,2,4,8,12}.
[[nodiscard]] ExperimentConfig preset(const std::string& name);
[[nodiscard]] const std::vector<std::string>& preset_names();

// Policy cell with the experiment-wide parameters and a threshold.
[[nodiscard]] PolicyConfig make_cell(const ExperimentConfig& config, PolicyKind kind,
                                     std::optional<double> lambda = std::nullopt);

// Applies a JSON config document (string) on top of `base`. Throws ConfigError.
[[nodiscard]] ExperimentConfig apply_config_json(ExperimentConfig base, const std::string& json_text);
[[nodiscard]] ExperimentConfig load_config_file(ExperimentConfig base, const std::filesystem::path& path);

[[nodiscard]] ScenarioConfig make_scenario(const ExperimentConfig& config, const PolicyConfig& policy, int n_loops);

struct RunRow {
    PolicyConfig policy;
    int n_loops = 0;
    int run_id = 0;
    std::uint64_t seed = 0;
    RunSummary summary;
    PacketCounters counters;
    Step diverged_step = -1;
    int diverged_loop = -1;
};

struct AggregateRow {
    PolicyConfig policy;
    int n_loops = 0;
    int runs = 0;
    std::vector<double> aoi;  // per run, in reporting units
    std::vector<double> lqg;
    int diverged_runs = 0;
};

struct SweepResult {
    std::vector<RunRow> rows;             // ordered by (policy cell, N, run_id)
    std::vector<AggregateRow> aggregates;  // ordered by (policy cell, N)
    AoiUnit aoi_unit = AoiUnit::periods;
    TimeUs sampling_period_us = 10'000;

    [[nodiscard]] const AggregateRow* find(PolicyKind kind, int n_loops,
                                           std::optional<double> lambda = std::nullopt) const;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// Runs every (policy cell, N, run_id). Results do not depend on `jobs`.
[[nodiscard]] SweepResult run_sweep(const ExperimentConfig& config, const ProgressFn& progress = {});

inline constexpr const char* kRunsCsvHeader = "policy,n_loops,run_id,seed,mean_aoi,mean_lqg,diverged,lambda,notes";
inline constexpr const char* kAggregateCsvHeader =
    "policy,n_loops,lambda,runs,mean_aoi,aoi_ci_lo,aoi_ci_hi,mean_lqg,lqg_ci_lo,lqg_ci_hi,diverged_runs,notes";

void write_runs_csv(std::ostream& out, const SweepResult& result);
void write_aggregate_csv(std::ostream& out, const SweepResult& result);

// Locale-independent shortest round-trip decimal.
[[nodiscard]] std::string format_number(double v);

}  // namespace ncs
