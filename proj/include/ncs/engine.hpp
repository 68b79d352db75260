#pragma once

#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "ncs/control.hpp"
#include "ncs/mac.hpp"
#include "ncs/policy.hpp"

namespace ncs {

// Everything one simulation run needs besides its seed.
struct ScenarioConfig {
    PolicyConfig policy;
    std::vector<SystemMatrices> systems;  // one per loop
    Step horizon_steps = 3000;            // steps k = 0..horizon_steps are simulated
    TimeUs sampling_period_us = 10'000;
    MacConfig mac;
    // Admitted packets reach the controller at the admission instant with no
    // MAC involvement and zero-latency ACKs.
    bool ideal_network = false;
    // Loop i samples at phase_i + k * period with phase_i uniform in [0, period).
    bool random_phase = true;
    double divergence_ceiling = 1e9;
    double dare_tol = 1e-10;
    long dare_max_iter = 1'000'000;

    [[nodiscard]] int n_loops() const { return static_cast<int>(systems.size()); }
    void validate() const;
};

enum class EventKind : std::uint8_t {
    // Declaration order is the tie-break priority at equal timestamps.
    tx_complete,
    ack_arrive,
    timeout,
    epoch_tick,
    sample,
    slot_boundary,
};

struct Event {
    TimeUs time_us = 0;
    std::uint64_t order = 0;
    EventKind kind = EventKind::sample;
    LoopId loop = -1;
    Seq seq = 0;
    Step step = 0;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time_us != b.time_us) return a.time_us > b.time_us;
        if (a.kind != b.kind) return a.kind > b.kind;
        return a.order > b.order;
    }
};

// Deterministic min-queue on (time, kind priority, insertion order).
class EventQueue {
public:
    void push(Event e);
    Event pop();
    [[nodiscard]] bool empty() const { return heap_.empty(); }
    [[nodiscard]] std::size_t size() const { return heap_.size(); }
    [[nodiscard]] TimeUs now() const { return now_; }

private:
    std::priority_queue<Event, std::vector<Event>, EventAfter> heap_;
    std::uint64_t next_order_ = 0;
    TimeUs now_ = 0;
};

enum class PacketEventKind : std::uint8_t { admit, retransmit, deliver, drop, ack, timeout };

[[nodiscard]] std::string_view to_string(PacketEventKind kind);

struct PacketRecord {
    TimeUs time_us;
    LoopId loop;
    Seq seq;
    Step gen_step;
    PacketEventKind kind;
};

struct PacketCounters {
    std::uint64_t admitted = 0;       // new samples admitted by the TL
    std::uint64_t retransmitted = 0;  // TL retransmissions (TCP)
    std::uint64_t enqueued = 0;       // admitted + retransmitted, handed to the MAC
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;  // MAC retry limit or tail drop
    std::uint64_t collisions = 0;
    std::uint64_t acks = 0;
    std::uint64_t timeouts = 0;
};

struct LoopTrace {
    int state_dim = 1;
    int input_dim = 1;
    std::vector<double> x;  // (horizon + 1) * state_dim
    std::vector<double> u;  // (horizon + 1) * input_dim
    std::vector<Step> age;  // AoI in sampling periods

    [[nodiscard]] std::size_t steps() const { return age.size(); }
    [[nodiscard]] Eigen::Map<const Vector> state(std::size_t k) const {
        return {x.data() + k * static_cast<std::size_t>(state_dim), state_dim};
    }
    [[nodiscard]] Eigen::Map<const Vector> input(std::size_t k) const {
        return {u.data() + k * static_cast<std::size_t>(input_dim), input_dim};
    }
};

struct RunTrace {
    std::uint64_t run_seed = 0;
    std::vector<LoopTrace> loops;
    std::vector<PacketRecord> packets;
    PacketCounters counters;
    std::vector<TimeUs> phase_us;
    bool diverged = false;
    int diverged_loop = -1;
    Step diverged_step = -1;
    TimeUs end_time_us = 0;

    // Stable binary serialization; equal traces give equal bytes.
    [[nodiscard]] std::string serialize() const;
};

// Runs one measurement run. The seed is the per-run seed (see derive_run_seed).
[[nodiscard]] RunTrace run(const ScenarioConfig& config, std::uint64_t run_seed);

inline RunTrace run(const ScenarioConfig& config, std::uint64_t master_seed, std::uint64_t run_id) {
    return run(config, derive_run_seed(master_seed, run_id));
}

}  // namespace ncs
