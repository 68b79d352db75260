#include "ncs/metrics.hpp"

#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace ncs {

namespace {

void check_window(const RunTrace& trace, AveragingWindow window) {
    if (trace.loops.empty()) throw MetricsError("metrics: trace has no loops");
    if (window.first < 0 || window.last < window.first) throw MetricsError("metrics: invalid averaging window");
    for (const auto& l : trace.loops)
        if (static_cast<Step>(l.steps()) <= window.last)
            throw MetricsError("metrics: trace shorter than the averaging window");
}

double loop_aoi(const LoopTrace& l, AveragingWindow w) {
    double sum = 0.0;
    for (Step k = w.first; k <= w.last; ++k) sum += static_cast<double>(l.age[static_cast<std::size_t>(k)]);
    return sum / static_cast<double>(w.length());
}

double loop_lqg(const LoopTrace& l, const SystemMatrices& sys, AveragingWindow w) {
    double sum = 0.0;
    for (Step k = w.first; k <= w.last; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        sum += stage_cost(l.state(idx), l.input(idx), sys);
    }
    return sum / static_cast<double>(w.length());
}

}  // namespace

double mean_aoi(const RunTrace& trace, AveragingWindow window) {
    check_window(trace, window);
    double sum = 0.0;
    for (const auto& l : trace.loops) sum += loop_aoi(l, window);
    return sum / static_cast<double>(trace.loops.size());
}

double mean_lqg(const RunTrace& trace, std::span<const SystemMatrices> systems, AveragingWindow window) {
    check_window(trace, window);
    if (systems.size() != trace.loops.size()) throw MetricsError("metrics: one system per loop is required");
    double sum = 0.0;
    for (std::size_t i = 0; i < trace.loops.size(); ++i) sum += loop_lqg(trace.loops[i], systems[i], window);
    return sum / static_cast<double>(trace.loops.size());
}

RunSummary summarize(const RunTrace& trace, std::span<const SystemMatrices> systems, AveragingWindow window) {
    RunSummary s;
    s.mean_aoi = mean_aoi(trace, window);
    s.mean_lqg = mean_lqg(trace, systems, window);
    s.diverged = trace.diverged;
    for (std::size_t i = 0; i < trace.loops.size(); ++i)
        s.per_loop.push_back({loop_aoi(trace.loops[i], window), loop_lqg(trace.loops[i], systems[i], window)});
    return s;
}

double sample_mean(std::span<const double> v) {
    if (v.empty()) throw MetricsError("metrics: mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

namespace {

double sample_stddev(std::span<const double> v, double mean) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double student_t_quantile(double p, double dof) {
    return boost::math::quantile(boost::math::students_t_distribution<double>(dof), p);
}

Interval confidence_interval(std::span<const double> samples, double level) {
    if (samples.size() < 2) throw MetricsError("confidence_interval: at least two samples are required");
    if (!(level > 0.0 && level < 1.0)) throw MetricsError("confidence_interval: level must be in (0, 1)");
    const double mean = sample_mean(samples);
    const double s = sample_stddev(samples, mean);
    const auto n = static_cast<double>(samples.size());
    const double half = student_t_quantile(0.5 + level / 2.0, n - 1.0) * s / std::sqrt(n);
    return {mean, mean - half, mean + half};
}

bool paired_less(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() != b.size() || a.size() < 2) throw MetricsError("paired_less: need two equal samples of size >= 2");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double mean = sample_mean(d);
    const double s = sample_stddev(d, mean);
    if (!std::isfinite(mean) || !std::isfinite(s)) return false;
    if (s == 0.0) return mean < 0.0;
    const double t = mean / (s / std::sqrt(static_cast<double>(d.size())));
    return t < -student_t_quantile(1.0 - alpha, static_cast<double>(d.size() - 1));
}

bool significantly_less(std::span<const double> a, std::span<const double> b, double level, double alpha) {
    const auto ca = confidence_interval(a, level);
    const auto cb = confidence_interval(b, level);
    if (ca.hi < cb.lo) return true;
    return a.size() == b.size() && paired_less(a, b, alpha);
}

}  // namespace ncs
