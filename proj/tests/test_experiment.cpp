#include <sstream>

#include "doctest.h"
#include "ncs/experiment.hpp"

using namespace ncs;

namespace {

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

ExperimentConfig small_config() {
    auto c = preset("default");
    c.policies = {make_cell(c, PolicyKind::zw), make_cell(c, PolicyKind::zwet, 50.0)};
    c.loops = {1, 2};
    c.runs = 3;
    return c;
}

}  // namespace

TEST_CASE("state matrix assignment") {
    const auto a12 = assign_state_matrices(12);
    CHECK(a12 == std::vector<double>{1.1, 1.1, 1.2, 1.0, 1.1, 1.0, 1.2, 1.0, 1.2, 1.2, 1.0, 1.1});
    for (double v : {1.0, 1.1, 1.2}) CHECK(std::count(a12.begin(), a12.end(), v) == 4);
    CHECK(assign_state_matrices(1) == std::vector<double>{1.1});
    CHECK(assign_state_matrices(3) == std::vector<double>{1.1, 1.1, 1.2});
    CHECK_THROWS_AS((void)assign_state_matrices(13), ConfigError);
    PlantParams p;
    p.a_values.assign(20, 0.9);
    CHECK(assign_state_matrices(13, p).size() == 13);
}

TEST_CASE("presets carry the experiment defaults") {
    const auto c = preset("default");
    CHECK(c.runs == 20);
    CHECK(c.horizon_steps == 3000);
    CHECK(c.sampling_period_us == 10'000);
    CHECK(c.loops == std::vector<int>{1, 2, 4, 8, 12});
    CHECK(c.mac.slot_us == 320);
    CHECK(c.mac.data_tx_us == 4000);
    CHECK(c.mac.ack_tx_us == 1000);
    CHECK(c.mac.max_retries == 7);
    CHECK(c.policy_params.ack_timeout_us == 100'000);
    REQUIRE(c.policies.size() == 1);
    CHECK(c.policies[0].kind == PolicyKind::zwet);
    CHECK(c.policies[0].params.lambda == 50.0);
    CHECK(preset("full").policies.size() == 9);
    CHECK_THROWS_AS((void)preset("nope"), ConfigError);
}

TEST_CASE("JSON config overrides") {
    const auto c = apply_config_json(preset("default"), R"({
        "policies": ["zw", {"policy": "zwet", "lambda": [15, 300]}, {"policy": "at", "lambda0": 20}],
        "loops": [4], "runs": 5, "seed": 9, "aoi_unit": "ms",
        "mac": {"max_retries": 3}, "policy_params": {"ack_timeout_us": 50000},
        "plant": {"q": 10}
    })");
    REQUIRE(c.policies.size() == 4);
    CHECK(c.policies[1].params.lambda == 15.0);
    CHECK(c.policies[2].params.lambda == 300.0);
    CHECK(c.policies[3].params.at.lambda0 == 20.0);
    for (const auto& p : c.policies) CHECK(p.params.ack_timeout_us == 50'000);
    CHECK(c.loops == std::vector<int>{4});
    CHECK(c.runs == 5);
    CHECK(c.master_seed == 9);
    CHECK(c.aoi_unit == AoiUnit::ms);
    CHECK(c.mac.max_retries == 3);
    CHECK(make_scenario(c, c.policies[0], 4).systems[0].Q(0, 0) == 10.0);
}

TEST_CASE("policy_params alone re-derives existing cells") {
    const auto c = apply_config_json(preset("default"), R"({"policy_params": {"ack_timeout_us": 70000}})");
    REQUIRE(c.policies.size() == 1);
    CHECK(c.policies[0].params.ack_timeout_us == 70'000);
    CHECK(c.policies[0].params.lambda == 50.0);
}

TEST_CASE("bad configs are rejected") {
    const auto base = preset("default");
    CHECK_THROWS_AS((void)apply_config_json(base, "{"), ConfigError);
    CHECK_THROWS_AS((void)apply_config_json(base, R"({"loopz": [1]})"), ConfigError);
    CHECK_THROWS_AS((void)apply_config_json(base, R"({"policies": ["sctp"]})"), ConfigError);
    CHECK_THROWS_AS((void)apply_config_json(base, R"({"runs": "many"})"), ConfigError);
    CHECK_THROWS_AS((void)apply_config_json(base, R"({"mac": {"slot": 1}})"), ConfigError);
    CHECK_THROWS_AS((void)apply_config_json(base, R"({"aoi_unit": "s"})"), ConfigError);
    auto c = apply_config_json(base, R"({"loops": [13]})");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = apply_config_json(base, R"({"runs": 0})");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = apply_config_json(base, R"({"horizon_steps": 100})");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS((void)load_config_file(base, "/nonexistent/config.json"), ConfigError);
}

TEST_CASE("sweep rows, CSV headers and determinism across job counts") {
    auto c = small_config();
    const auto r1 = run_sweep(c);
    c.jobs = 3;
    const auto r3 = run_sweep(c);
    CHECK(r1.rows.size() == 2 * 2 * 3);
    CHECK(r1.aggregates.size() == 4);

    std::ostringstream a1, a3, g1, g3;
    write_runs_csv(a1, r1);
    write_runs_csv(a3, r3);
    write_aggregate_csv(g1, r1);
    write_aggregate_csv(g3, r3);
    CHECK(a1.str() == a3.str());
    CHECK(g1.str() == g3.str());

    const auto rl = lines(a1.str());
    REQUIRE(rl.size() == 13);
    CHECK(rl[0] == kRunsCsvHeader);
    CHECK(rl[1].rfind("zw,1,0,", 0) == 0);
    const auto gl = lines(g1.str());
    REQUIRE(gl.size() == 5);
    CHECK(gl[0] == kAggregateCsvHeader);
    CHECK(gl[3].rfind("zwet,1,50,3,", 0) == 0);

    // Run seeds are the per-run derivation.
    CHECK(r1.rows[0].seed == derive_run_seed(c.master_seed, 0));
    const auto* agg = r1.find(PolicyKind::zwet, 2, 50.0);
    REQUIRE(agg);
    CHECK(agg->lqg.size() == 3);
    CHECK_FALSE(r1.find(PolicyKind::udp, 1));
}

TEST_CASE("growing the run count keeps earlier runs") {
    auto c = small_config();
    c.policies.resize(1);
    c.loops = {2};
    c.runs = 2;
    const auto small = run_sweep(c);
    c.runs = 4;
    const auto large = run_sweep(c);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(small.rows[i].summary.mean_lqg == large.rows[i].summary.mean_lqg);
        CHECK(small.rows[i].seed == large.rows[i].seed);
    }
}

TEST_CASE("AoI in milliseconds scales by the sampling period") {
    auto c = small_config();
    c.policies.resize(1);
    c.loops = {1};
    const auto periods = run_sweep(c);
    c.aoi_unit = AoiUnit::ms;
    const auto ms = run_sweep(c);
    std::ostringstream p, m;
    write_runs_csv(p, periods);
    write_runs_csv(m, ms);
    CHECK(p.str() != m.str());
    CHECK(periods.aggregates[0].aoi[0] * 10.0 == doctest::Approx(ms.aggregates[0].aoi[0]));
}

TEST_CASE("ACP rows are labelled and diverged runs annotated") {
    auto c = preset("default");
    c.policies = {make_cell(c, PolicyKind::acp), make_cell(c, PolicyKind::udp)};
    c.loops = {1, 4};
    c.runs = 2;
    const auto r = run_sweep(c);
    std::ostringstream out;
    write_runs_csv(out, r);
    const auto rl = lines(out.str());
    CHECK(rl[1].find("ACP-simplified") != std::string::npos);
    bool annotated = false;
    for (const auto& l : rl)
        if (l.rfind("udp,4,", 0) == 0) annotated |= l.find(",1,,diverged loop=") != std::string::npos;
    CHECK(annotated);
}

TEST_CASE("number formatting is locale independent and round-trips") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(100.0) == "100");
    for (double v : {1.0 / 3.0, 1e-300, 6.02e23, -2.5}) CHECK(std::stod(format_number(v)) == v);
}
