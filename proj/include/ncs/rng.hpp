#pragma once

#include <cstdint>
#include <random>

namespace ncs {

enum class StreamPurpose : std::uint64_t {
    noise = 1,
    backoff = 2,
    phase = 3,
};

// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seed of one measurement run: mix64(master_seed ^ mix64(run_id)). Each run's
// seed depends only on its own id, so growing the run count never changes the
// seeds of earlier runs.
[[nodiscard]] constexpr std::uint64_t derive_run_seed(std::uint64_t master_seed, std::uint64_t run_id) {
    return mix64(master_seed ^ mix64(run_id));
}

// Platform-independent random stream. The engine is std::mt19937_64, whose
// output sequence is fixed by the standard; the transforms to uniform, integer
// and Gaussian variates are implemented here rather than taken from
// <random> distributions, whose algorithms are implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    [[nodiscard]] std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of resolution.
    [[nodiscard]] double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer on [0, bound) by rejection; bound > 0.
    [[nodiscard]] std::uint64_t uniform_below(std::uint64_t bound);

    // Standard normal by Box-Muller; the second variate of each pair is cached.
    [[nodiscard]] double standard_normal();

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

// Independent substream for (run, loop, purpose).
[[nodiscard]] RngStream rng_stream(std::uint64_t master_seed, std::uint64_t run_id,
                                   std::uint64_t loop_id, StreamPurpose purpose);

// Same as above given an already derived run seed.
[[nodiscard]] RngStream rng_substream(std::uint64_t run_seed, std::uint64_t loop_id,
                                      StreamPurpose purpose);

}  // namespace ncs
