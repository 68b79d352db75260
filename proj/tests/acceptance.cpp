// Acceptance checks over the full 20-run sweep. Prints one PASS/FAIL line per
// criterion; exits non-zero if any criterion fails.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "ncs/experiment.hpp"

using namespace ncs;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::cout << "criterion " << id << " [" << (ok ? "PASS" : "FAIL") << "] " << name;
    if (!detail.empty()) std::cout << " -- " << detail;
    std::cout << std::endl;
    if (!ok) ++failures;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

const AggregateRow& cell(const SweepResult& r, PolicyKind kind, int n, std::optional<double> lambda = std::nullopt) {
    const auto* a = r.find(kind, n, lambda);
    if (!a) throw std::runtime_error("missing sweep cell " + std::string(to_string(kind)) + " N=" + std::to_string(n));
    return *a;
}

double mean_lqg_of(const AggregateRow& a) { return sample_mean(a.lqg); }
double mean_aoi_of(const AggregateRow& a) { return sample_mean(a.aoi); }

// 1 ----------------------------------------------------------------------------
void estimator_equivalence() {
    std::mt19937_64 gen(20240601);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::uniform_int_distribution<int> dim(1, 4);
    std::uniform_int_distribution<int> len(1, 60);
    double worst = 0.0;
    for (int c = 0; c < 1000; ++c) {
        const int n = dim(gen);
        const int m = dim(gen);
        SystemMatrices sys;
        sys.A = Matrix::NullaryExpr(n, n, [&] { return 1.2 * coef(gen); });
        sys.B = Matrix::NullaryExpr(n, m, [&] { return coef(gen); });
        sys.Sigma = Matrix::Identity(n, n);
        sys.Q = Matrix::Identity(n, n);
        sys.R = Matrix::Identity(m, m);
        const int k = len(gen);
        const Step nu = static_cast<Step>(gen() % static_cast<std::uint64_t>(k + 1));
        const Vector x_nu = Vector::NullaryExpr(n, [&] { return 10.0 * coef(gen); });

        RemoteEstimator est(sys);
        EstimatorState ref{x_nu, nu, {}};
        for (int j = 0; j < k; ++j) {
            if (j == nu) est.apply_update(x_nu, nu);
            const Vector u = Vector::NullaryExpr(m, [&] { return coef(gen); });
            est.record_input(u);
            ref.input_history.push_back(u);
        }
        if (nu == k) est.apply_update(x_nu, nu);
        const Vector closed = estimate_state(ref, k, sys);
        const double rel = (est.estimate() - closed).norm() / std::max(closed.norm(), 1e-300);
        worst = std::max(worst, closed.norm() == 0.0 ? est.estimate().norm() : rel);
    }
    report(1, "estimator closed form vs incremental recursion, 1000 random cases", worst <= 1e-9,
           "max relative error " + num(worst));
}

// 2 ----------------------------------------------------------------------------
void dare_equivalence() {
    double worst = 0.0;
    for (double a : {1.0, 1.1, 1.2}) {
        const double b = 1.0, q = 100.0, r = 1.0;
        const double c2 = r - q * b * b - a * a * r;
        const double p = (-c2 + std::sqrt(c2 * c2 + 4.0 * b * b * q * r)) / (2.0 * b * b);
        const double l = b * p * a / (r + b * b * p);
        const Gain g = solve_dare(SystemMatrices::scalar(a, b, 1.0, q, r));
        worst = std::max({worst, std::abs(g.P(0, 0) - p) / p, std::abs(g.L(0, 0) - l) / l});
    }
    const double l1 = solve_dare(SystemMatrices::scalar(1.0)).L(0, 0);
    report(2, "scalar DARE vs closed-form quadratic root", worst <= 1e-8,
           "max relative error " + num(worst) + ", L(A=1) = " + std::to_string(l1));
}

// 3 ----------------------------------------------------------------------------
void conservation(const SweepResult& r) {
    std::size_t bad = 0;
    std::uint64_t retransmitted = 0;
    for (const auto& row : r.rows) {
        const auto& c = row.counters;
        if (c.enqueued != c.delivered + c.dropped || c.admitted + c.retransmitted != c.enqueued) ++bad;
        retransmitted += c.retransmitted;
    }
    report(3, "packet conservation in every run", bad == 0,
           std::to_string(r.rows.size()) + " runs checked, " + std::to_string(bad) +
               " violations (MAC admissions include " + std::to_string(retransmitted) + " TCP retransmissions)");
}

// 4 ----------------------------------------------------------------------------
void determinism(const ExperimentConfig& config, const SweepResult& first) {
    auto c = config;
    c.jobs = 4;
    const auto second = run_sweep(c);
    std::ostringstream a, b, ga, gb;
    write_runs_csv(a, first);
    write_runs_csv(b, second);
    write_aggregate_csv(ga, first);
    write_aggregate_csv(gb, second);
    const bool ok = a.str() == b.str() && ga.str() == gb.str();
    report(4, "byte-identical CSV for identical config and seed", ok,
           std::to_string(a.str().size() + ga.str().size()) + " bytes compared (1 vs 4 worker threads)");
}

std::string lqg_pair(const AggregateRow& a, const AggregateRow& b) {
    return num(mean_lqg_of(a)) + " vs " + num(mean_lqg_of(b));
}

// 5 ----------------------------------------------------------------------------
void acp_ordering(const SweepResult& r) {
    bool ok = true;
    std::string detail;
    for (int n : {8, 12}) {
        const auto& acp = cell(r, PolicyKind::acp, n);
        for (auto other : {PolicyKind::udp, PolicyKind::tcp, PolicyKind::zw}) {
            const auto& o = cell(r, other, n);
            const bool pass = significantly_less(acp.lqg, o.lqg);
            ok &= pass;
            detail += "N=" + std::to_string(n) + " acp<" + std::string(to_string(other)) + " " + (pass ? "yes" : "no") +
                      " (" + lqg_pair(acp, o) + "); ";
        }
    }
    report(5, "ACP-simplified LQG below UDP, TCP and ZW at N=8,12", ok, detail);
}

// 6 ----------------------------------------------------------------------------
void et_divergence(const SweepResult& r, const std::vector<int>& loops) {
    const double et8 = mean_lqg_of(cell(r, PolicyKind::et, 8, 15.0));
    const double zw8 = mean_lqg_of(cell(r, PolicyKind::zw, 8));
    bool grows = true;
    std::string series;
    double prev = 0.0;
    for (int n : loops) {
        const double v = mean_lqg_of(cell(r, PolicyKind::et, n, 15.0));
        if (n != loops.front() && v < prev) grows = false;
        prev = v;
        series += num(v) + " ";
    }
    report(6, "ET(15) LQG at N=8 at least 10x ZW and growing with N", et8 >= 10.0 * zw8 && grows,
           "ET/ZW at N=8 = " + num(et8 / zw8) + "; ET by N: " + series);
}

// 7 ----------------------------------------------------------------------------
void zwet_beats_acp(const SweepResult& r) {
    const auto& zwet = cell(r, PolicyKind::zwet, 12, 50.0);
    const auto& acp = cell(r, PolicyKind::acp, 12);
    report(7, "ZW-ET(50) LQG below ACP-simplified at N=12", significantly_less(zwet.lqg, acp.lqg),
           lqg_pair(zwet, acp));
}

// 8 ----------------------------------------------------------------------------
void threshold_sensitivity(const SweepResult& r) {
    const double l50 = mean_lqg_of(cell(r, PolicyKind::zwet, 12, 50.0));
    const double l15 = mean_lqg_of(cell(r, PolicyKind::zwet, 12, 15.0));
    const double n1_15 = mean_lqg_of(cell(r, PolicyKind::zwet, 1, 15.0));
    const double n1_300 = mean_lqg_of(cell(r, PolicyKind::zwet, 1, 300.0));
    report(8, "ZW-ET: lambda 50 beats 15 at N=12; lambda 15 beats 300 at N=1", l50 < l15 && n1_15 < n1_300,
           "N=12: 50 -> " + num(l50) + ", 15 -> " + num(l15) + "; N=1: 15 -> " + num(n1_15) + ", 300 -> " +
               num(n1_300));
}

// 9 ----------------------------------------------------------------------------
void adaptive_threshold(const SweepResult& r, const std::vector<int>& loops) {
    bool ok = true;
    std::string detail;
    for (int n : loops) {
        const double at = mean_lqg_of(cell(r, PolicyKind::at, n, 50.0));
        const double acp = mean_lqg_of(cell(r, PolicyKind::acp, n));
        if (!(at < acp)) {
            ok = false;
            detail += "N=" + std::to_string(n) + " AT " + num(at) + " >= ACP " + num(acp) + "; ";
        }
        if (n <= 4) {
            double best = INFINITY;
            for (double l : {15.0, 50.0, 300.0}) best = std::min(best, mean_lqg_of(cell(r, PolicyKind::zwet, n, l)));
            if (!(at < best)) {
                ok = false;
                detail += "N=" + std::to_string(n) + " AT " + num(at) + " >= best ZW-ET " + num(best) + "; ";
            }
        }
    }
    const double z50 = mean_lqg_of(cell(r, PolicyKind::zwet, 12, 50.0));
    const double z15 = mean_lqg_of(cell(r, PolicyKind::zwet, 12, 15.0));
    const double at12 = mean_lqg_of(cell(r, PolicyKind::at, 12, 50.0));
    if (!(z50 < at12 && at12 < z15)) {
        ok = false;
        detail += "N=12 ZW-ET(50) " + num(z50) + ", AT " + num(at12) + ", ZW-ET(15) " + num(z15) + " not ordered";
    }
    report(9, "AT below ZW-ET for N<=4, below ACP everywhere, between ZW-ET(50) and ZW-ET(15) at N=12", ok,
           ok ? "all orderings hold" : detail);
}

// 10 ---------------------------------------------------------------------------
void aoi_sanity(const SweepResult& r, const ExperimentConfig& config) {
    bool monotone = true;
    std::string detail;
    for (const auto& p : config.policies) {
        const std::optional<double> l =
            p.kind == PolicyKind::at ? std::optional<double>(p.params.at.lambda0)
            : uses_threshold(p.kind) ? std::optional<double>(p.params.lambda)
                                     : std::nullopt;
        double prev = -1.0;
        std::string series;
        bool mono = true;
        for (int n : config.loops) {
            const double v = mean_aoi_of(cell(r, p.kind, n, l));
            if (v < prev) mono = false;
            prev = v;
            series += num(v) + " ";
        }
        monotone &= mono;
        if (!mono) {
            detail += to_string(p.kind);
            if (l && p.kind != PolicyKind::at) detail += "(" + num(*l) + ")";
            detail += " not monotone: " + series + "; ";
        }
    }
    const double ratio = mean_aoi_of(cell(r, PolicyKind::udp, 12)) / mean_aoi_of(cell(r, PolicyKind::zw, 12));
    report(10, "mean AoI nondecreasing in N; UDP AoI at N=12 at least 5x ZW", monotone && ratio >= 5.0,
           detail + "UDP/ZW AoI at N=12 = " + num(ratio));
}

// 11 ---------------------------------------------------------------------------
void mac_timing() {
    const MacConfig cfg;
    bool exact = true;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        RngStream probe(seed);
        const int b = draw_backoff(probe, cfg.min_be);
        CsmaChannel ch(cfg, {RngStream(seed)});
        UpdatePacket p;
        p.payload = Vector::Zero(1);
        const TimeUs t0 = static_cast<TimeUs>(seed) * 7;
        auto wake = ch.enqueue(p, t0).wake;
        std::optional<TimeUs> delivered;
        while (wake) {
            auto step = ch.advance(wake->time_us);
            for (const auto& e : step.events)
                if (e.kind == MacEventKind::delivered) delivered = e.time_us;
            wake = step.next;
        }
        exact &= delivered && *delivered - t0 == b * cfg.slot_us + cfg.data_tx_us;
    }

    double max_rate = 0.0;
    for (int n : {1, 2, 4, 8, 12}) {
        std::vector<RngStream> rng;
        for (int i = 0; i < n; ++i) rng.push_back(rng_substream(99, static_cast<std::uint64_t>(i), StreamPurpose::backoff));
        CsmaChannel ch(cfg, std::move(rng));
        std::optional<ChannelWake> wake;
        const TimeUs horizon = 20'000'000;
        for (LoopId id = 0; id < n; ++id)
            for (int j = 0; j < 6000; ++j) {
                UpdatePacket p;
                p.loop_id = id;
                p.seq = static_cast<Seq>(j);
                p.payload = Vector::Zero(1);
                if (auto w = ch.enqueue(std::move(p), 0).wake) wake = w;
            }
        std::uint64_t delivered = 0;
        while (wake && wake->time_us <= horizon) {
            auto step = ch.advance(wake->time_us);
            for (const auto& e : step.events) delivered += e.kind == MacEventKind::delivered && e.time_us <= horizon;
            wake = step.next;
        }
        max_rate = std::max(max_rate, static_cast<double>(delivered) / (static_cast<double>(horizon) / 1e6));
    }
    report(11, "single-node latency b*slot+4ms exactly; saturated delivery rate <= 250/s", exact && max_rate <= 250.0,
           std::string("2000 single-node draws ") + (exact ? "exact" : "MISMATCH") + ", max saturated rate " +
               num(max_rate) + " packets/s");
}

// 12 ---------------------------------------------------------------------------
// Randomized event streams: sample/admit, in-time ACK, earliest timeout.
struct EventStream {
    std::mt19937_64 gen;
    TimeUs now = 0;
    Seq next = 1;
    std::map<Seq, TimeUs> deadline;

    explicit EventStream(std::uint64_t seed) : gen(seed) {}

    TimeUs earliest() const {
        TimeUs t = INT64_MAX;
        for (const auto& [s, d] : deadline) t = std::min(t, d);
        return t;
    }
    void send(TransportPolicy& p, Seq s, bool retx) {
        if (auto d = p.on_sent(s, now, retx)) deadline[s] = *d;
    }
    // Returns 0 = sample, 1 = ack, 2 = timeout; `seq` is the acked/expired packet.
    int step(TransportPolicy& p, double x, bool& admitted, std::size_t& out_before, Seq& seq) {
        const auto pick = gen() % 10;
        if (pick < 5 || deadline.empty()) {
            now = std::max(now, std::min(now + 1 + static_cast<TimeUs>(gen() % 4000), earliest() - 1));
            for (Seq s : p.take_retransmissions(now)) send(p, s, true);
            out_before = p.outstanding();
            admitted = p.admit(Vector::Constant(1, x), 0, now).admit;
            if (admitted) send(p, next++, false);
            return 0;
        }
        if (pick < 9) {
            auto it = deadline.begin();
            std::advance(it, static_cast<long>(gen() % deadline.size()));
            seq = it->first;
            now = std::max(now, std::min(it->second, earliest()) - 1);
            deadline.erase(it);
            p.on_ack(seq, now);
            return 1;
        }
        auto it = std::min_element(deadline.begin(), deadline.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
        seq = it->first;
        now = std::max(now, it->second);
        deadline.erase(it);
        p.on_timeout(seq, now);
        return 2;
    }
};

void policy_invariants() {
    const long events = 100'000;
    std::string broken;
    std::normal_distribution<double> noise(0.0, 40.0);

    for (auto kind : {PolicyKind::zw, PolicyKind::zwet, PolicyKind::at}) {
        PolicyConfig c{kind, {}};
        auto p = make_policy(c);
        EventStream s(static_cast<std::uint64_t>(kind) * 31 + 1);
        bool admitted = false;
        std::size_t before = 0;
        Seq seq = 0;
        for (long i = 0; i < events; ++i) {
            (void)s.step(*p, noise(s.gen), admitted, before, seq);
            if (p->outstanding() > 1) {
                broken += std::string(to_string(kind)) + " n_out>1; ";
                break;
            }
        }
    }

    {
        TcpPolicy p(PolicyParams{});
        EventStream s(4242);
        double cwnd = 1.0, ssthresh = 64.0;
        bool admitted = false, ok = true;
        std::size_t before = 0;
        Seq seq = 0;
        for (long i = 0; i < events && ok; ++i) {
            const std::size_t window_before = p.window();
            const int kind = s.step(p, 0.0, admitted, before, seq);
            if (kind == 0 && admitted && before >= window_before) ok = false;
            if (kind == 1) cwnd += cwnd < ssthresh ? 1.0 : 1.0 / cwnd;
            if (kind == 2) {
                ssthresh = std::max(std::floor(cwnd / 2.0), 1.0);
                cwnd = 1.0;
            }
            ok &= std::abs(p.state().cwnd - cwnd) <= 1e-9 * cwnd && p.state().ssthresh == ssthresh;
        }
        if (!ok) broken += "tcp window algebra; ";
    }

    {
        PolicyParams params;
        params.at.lambda_min = 1e-300;
        params.at.lambda_max = 1e300;
        AdaptiveThresholdPolicy p(params);
        EventStream s(777);
        long timeouts = 0, streaks = 0;
        int run = 0;
        bool admitted = false, ok = true;
        std::size_t before = 0;
        Seq seq = 0;
        for (long i = 0; i < events && ok; ++i) {
            const int kind = s.step(p, noise(s.gen), admitted, before, seq);
            if (kind == 1 && ++run == 10) {
                ++streaks;
                run = 0;
            }
            if (kind == 2) {
                ++timeouts;
                run = 0;
            }
            const double expected = params.at.lambda0 * std::pow(1.5, static_cast<double>(timeouts - streaks));
            ok = std::abs(p.state().lambda - expected) <= 1e-9 * expected;
        }
        if (!ok) broken += "at replay formula; ";
    }
    report(12, "transport policy invariants over 1e5 randomized events", broken.empty(),
           broken.empty() ? "zw/zwet/at n_out<=1, tcp window algebra, at replay formula" : broken);
}

}  // namespace

int main() {
    try {
        estimator_equivalence();
        dare_equivalence();

        const auto config = preset("full");
        std::cerr << "running " << config.policies.size() << " policy cells x " << config.loops.size() << " N x "
                  << config.runs << " runs\n";
        const auto sweep = run_sweep(config);

        conservation(sweep);
        determinism(config, sweep);
        acp_ordering(sweep);
        et_divergence(sweep, config.loops);
        zwet_beats_acp(sweep);
        threshold_sensitivity(sweep);
        adaptive_threshold(sweep, config.loops);
        aoi_sanity(sweep, config);
        mac_timing();
        policy_invariants();
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 2;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
