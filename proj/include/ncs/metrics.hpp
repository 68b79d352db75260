#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "ncs/control.hpp"
#include "ncs/engine.hpp"

namespace ncs {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inclusive averaging window over sampling steps; the first 1000 steps are
// treated as transient.
struct AveragingWindow {
    Step first = 1000;
    Step last = 3000;
    [[nodiscard]] Step length() const { return last - first + 1; }
};

struct LoopSummary {
    double mean_aoi = 0.0;
    double mean_lqg = 0.0;
};

struct RunSummary {
    double mean_aoi = 0.0;  // sampling periods
    double mean_lqg = 0.0;
    std::vector<LoopSummary> per_loop;
    bool diverged = false;
};

[[nodiscard]] double mean_aoi(const RunTrace& trace, AveragingWindow window = {});
[[nodiscard]] double mean_lqg(const RunTrace& trace, std::span<const SystemMatrices> systems,
                              AveragingWindow window = {});
[[nodiscard]] RunSummary summarize(const RunTrace& trace, std::span<const SystemMatrices> systems,
                                   AveragingWindow window = {});

struct Interval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    [[nodiscard]] double half_width() const { return hi - mean; }
};

// Student-t interval mean +- t_{(1+level)/2, n-1} s / sqrt(n). Needs n >= 2.
[[nodiscard]] Interval confidence_interval(std::span<const double> samples, double level = 0.99);

// Student-t quantile: t such that P(T_dof <= t) = p.
[[nodiscard]] double student_t_quantile(double p, double dof);

// One-sided paired t-test of H1: mean(a - b) < 0 at significance alpha.
[[nodiscard]] bool paired_less(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

// a is below b with either disjoint confidence intervals at `level` or a
// significant one-sided paired test at `alpha`.
[[nodiscard]] bool significantly_less(std::span<const double> a, std::span<const double> b, double level = 0.99,
                                      double alpha = 0.05);

[[nodiscard]] double sample_mean(std::span<const double> v);

}  // namespace ncs
