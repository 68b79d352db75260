#include "ncs/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ncs {

std::uint64_t RngStream::uniform_below(std::uint64_t bound) {
    // Largest multiple of bound that fits; draws above it are rejected.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = 0;
    do {
        v = engine_();
    } while (v >= limit);
    return v % bound;
}

double RngStream::standard_normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

RngStream rng_substream(std::uint64_t run_seed, std::uint64_t loop_id, StreamPurpose purpose) {
    const std::uint64_t seed =
        mix64(mix64(run_seed ^ mix64(loop_id + 0x5851F42D4C957F2DULL)) ^ static_cast<std::uint64_t>(purpose));
    return RngStream(seed);
}

RngStream rng_stream(std::uint64_t master_seed, std::uint64_t run_id, std::uint64_t loop_id,
                     StreamPurpose purpose) {
    return rng_substream(derive_run_seed(master_seed, run_id), loop_id, purpose);
}

}  // namespace ncs
