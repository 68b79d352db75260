#include "ncs/engine.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>

#include "ncs/rng.hpp"

namespace ncs {

void ScenarioConfig::validate() const {
    if (systems.empty()) throw ConfigError("scenario: at least one loop is required");
    if (horizon_steps < 1) throw ConfigError("scenario: horizon must be positive");
    if (sampling_period_us <= 0) throw ConfigError("scenario: sampling period must be positive");
    if (!(divergence_ceiling > 0.0)) throw ConfigError("scenario: divergence ceiling must be positive");
    for (const auto& s : systems) s.validate();
    mac.validate();
    policy.params.validate();
    if (policy.params.sampling_period_us != sampling_period_us)
        throw ConfigError("scenario: policy and scenario sampling periods differ");
}

void EventQueue::push(Event e) {
    if (e.time_us < now_) throw std::logic_error("event scheduled in the past");
    e.order = next_order_++;
    heap_.push(e);
}

Event EventQueue::pop() {
    Event e = heap_.top();
    heap_.pop();
    now_ = e.time_us;
    return e;
}

std::string_view to_string(PacketEventKind kind) {
    switch (kind) {
    case PacketEventKind::admit: return "admit";
    case PacketEventKind::retransmit: return "retransmit";
    case PacketEventKind::deliver: return "deliver";
    case PacketEventKind::drop: return "drop";
    case PacketEventKind::ack: return "ack";
    case PacketEventKind::timeout: return "timeout";
    }
    return "?";
}

namespace {

template <typename T>
void put(std::string& out, const T& v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
void put_vector(std::string& out, const std::vector<T>& v) {
    put(out, static_cast<std::uint64_t>(v.size()));
    for (const auto& e : v) put(out, e);
}

}  // namespace

std::string RunTrace::serialize() const {
    std::string out;
    put(out, run_seed);
    put(out, static_cast<std::uint64_t>(loops.size()));
    for (const auto& l : loops) {
        put(out, l.state_dim);
        put(out, l.input_dim);
        put_vector(out, l.x);
        put_vector(out, l.u);
        put_vector(out, l.age);
    }
    put(out, static_cast<std::uint64_t>(packets.size()));
    for (const auto& p : packets) {
        put(out, p.time_us);
        put(out, p.loop);
        put(out, p.seq);
        put(out, p.gen_step);
        put(out, static_cast<std::uint8_t>(p.kind));
    }
    put(out, counters);
    put_vector(out, phase_us);
    put(out, diverged);
    put(out, diverged_loop);
    put(out, diverged_step);
    put(out, end_time_us);
    return out;
}

namespace {

struct Loop {
    SystemMatrices sys;
    Gain gain;
    NoiseSampler noise;
    RngStream noise_rng;
    std::unique_ptr<TransportPolicy> policy;
    RemoteEstimator estimator;
    Vector x;
    TimeUs phase_us = 0;
    Seq next_seq = 0;
    bool finished = false;
    std::optional<UpdatePacket> inbox;    // freshest delivered, not yet applied
    std::map<Seq, UpdatePacket> unacked;  // copies kept for TL retransmission
};

class Simulation {
public:
    Simulation(const ScenarioConfig& config, std::uint64_t run_seed);
    RunTrace execute();

private:
    void schedule(TimeUs t, EventKind kind, LoopId loop, Seq seq = 0, Step step = 0) {
        queue_.push(Event{t, 0, kind, loop, seq, step});
    }
    void schedule_wake(const ChannelWake& w) {
        schedule(w.time_us, w.kind == ChannelWakeKind::tx_complete ? EventKind::tx_complete : EventKind::slot_boundary,
                 -1);
    }
    void log(TimeUs t, LoopId loop, Seq seq, Step gen, PacketEventKind kind) {
        trace_.packets.push_back({t, loop, seq, gen, kind});
    }

    void on_sample(LoopId id, Step k, TimeUs now);
    void on_mac(TimeUs now);
    void on_ack(LoopId id, Seq seq, TimeUs now);
    void on_timeout(LoopId id, Seq seq, TimeUs now);
    void on_epoch(LoopId id, TimeUs now);

    void transmit(Loop& loop, UpdatePacket pkt, TimeUs now);
    void flush_retransmissions(Loop& loop, TimeUs now);
    void deliver(const UpdatePacket& pkt, TimeUs now);
    void record(LoopId id, Step k, const Vector& x, const Vector& u, Step age);
    void pad_traces();

    const ScenarioConfig& config_;
    std::vector<Loop> loops_;
    std::optional<CsmaChannel> channel_;
    EventQueue queue_;
    RunTrace trace_;
    bool halted_ = false;  // divergence: no further sampling
};

Simulation::Simulation(const ScenarioConfig& config, std::uint64_t run_seed) : config_(config) {
    config_.validate();
    trace_.run_seed = run_seed;
    const int n = config_.n_loops();
    const auto steps = static_cast<std::size_t>(config_.horizon_steps + 1);

    std::vector<RngStream> backoff;
    loops_.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& sys = config_.systems[static_cast<std::size_t>(i)];
        const auto id = static_cast<std::uint64_t>(i);
        Gain gain = solve_dare(sys, config_.dare_tol, config_.dare_max_iter, "loop " + std::to_string(i + 1));
        RngStream phase_rng = rng_substream(run_seed, id, StreamPurpose::phase);
        const TimeUs phase =
            config_.random_phase
                ? static_cast<TimeUs>(phase_rng.uniform_below(static_cast<std::uint64_t>(config_.sampling_period_us)))
                : 0;
        loops_.push_back(Loop{sys, std::move(gain), NoiseSampler(sys.Sigma),
                              rng_substream(run_seed, id, StreamPurpose::noise), make_policy(config_.policy),
                              RemoteEstimator(sys, steps), Vector::Zero(sys.state_dim()), phase, 0, false, std::nullopt, {}});
        backoff.push_back(rng_substream(run_seed, id, StreamPurpose::backoff));
        trace_.phase_us.push_back(phase);

        LoopTrace lt;
        lt.state_dim = static_cast<int>(sys.state_dim());
        lt.input_dim = static_cast<int>(sys.input_dim());
        lt.x.reserve(steps * static_cast<std::size_t>(lt.state_dim));
        lt.u.reserve(steps * static_cast<std::size_t>(lt.input_dim));
        lt.age.reserve(steps);
        trace_.loops.push_back(std::move(lt));
    }
    if (!config_.ideal_network) channel_.emplace(config_.mac, std::move(backoff));
}

void Simulation::record(LoopId id, Step, const Vector& x, const Vector& u, Step age) {
    auto& lt = trace_.loops[static_cast<std::size_t>(id)];
    lt.x.insert(lt.x.end(), x.data(), x.data() + x.size());
    lt.u.insert(lt.u.end(), u.data(), u.data() + u.size());
    lt.age.push_back(age);
}

void Simulation::transmit(Loop& loop, UpdatePacket pkt, TimeUs now) {
    const LoopId id = pkt.loop_id;
    ++trace_.counters.enqueued;
    if (auto deadline = loop.policy->on_sent(pkt.seq, now, pkt.retransmission))
        schedule(*deadline, EventKind::timeout, id, pkt.seq);
    if (loop.policy->kind() == PolicyKind::tcp) loop.unacked[pkt.seq] = pkt;

    if (config_.ideal_network) {
        deliver(pkt, now);
        return;
    }
    const Seq seq = pkt.seq;
    const Step gen = pkt.gen_step;
    auto result = channel_->enqueue(std::move(pkt), now);
    if (result.dropped) {
        ++trace_.counters.dropped;
        log(now, id, seq, gen, PacketEventKind::drop);
    }
    if (result.wake) schedule_wake(*result.wake);
}

void Simulation::flush_retransmissions(Loop& loop, TimeUs now) {
    if (loop.finished || halted_) return;
    for (const Seq seq : loop.policy->take_retransmissions(now)) {
        auto it = loop.unacked.find(seq);
        if (it == loop.unacked.end()) continue;
        UpdatePacket copy = it->second;
        copy.retransmission = true;
        ++trace_.counters.retransmitted;
        log(now, copy.loop_id, seq, copy.gen_step, PacketEventKind::retransmit);
        transmit(loop, std::move(copy), now);
    }
}

void Simulation::deliver(const UpdatePacket& pkt, TimeUs now) {
    auto& loop = loops_[static_cast<std::size_t>(pkt.loop_id)];
    ++trace_.counters.delivered;
    log(now, pkt.loop_id, pkt.seq, pkt.gen_step, PacketEventKind::deliver);
    if (loop.policy->uses_acks()) {
        const TimeUs at = config_.ideal_network ? now : deliver_ack(pkt, now, config_.mac).arrive_us;
        schedule(at, EventKind::ack_arrive, pkt.loop_id, pkt.seq);
    }
    if (!loop.inbox || pkt.gen_step > loop.inbox->gen_step) loop.inbox = pkt;
}

void Simulation::on_sample(LoopId id, Step k, TimeUs now) {
    auto& loop = loops_[static_cast<std::size_t>(id)];
    if (k == 0) loop.x = loop.noise(loop.noise_rng);

    flush_retransmissions(loop, now);
    if (loop.policy->admit(loop.x, k, now).admit) {
        UpdatePacket pkt{id, loop.next_seq++, k, loop.x, now, kUpdatePacketBytes, false};
        ++trace_.counters.admitted;
        log(now, id, pkt.seq, k, PacketEventKind::admit);
        transmit(loop, std::move(pkt), now);
    }

    if (loop.inbox) {
        loop.estimator.apply_update(loop.inbox->payload, loop.inbox->gen_step);
        loop.inbox.reset();
    }
    const Vector u = control_input(loop.estimator.estimate(), loop.gain);
    record(id, k, loop.x, u, loop.estimator.age());
    loop.estimator.record_input(u);

    if (k >= config_.horizon_steps) {
        loop.finished = true;
        return;
    }
    loop.x = loop.sys.A * loop.x + loop.sys.B * u + loop.noise(loop.noise_rng);
    if (!loop.x.allFinite() || loop.x.norm() > config_.divergence_ceiling) {
        halted_ = true;
        trace_.diverged = true;
        trace_.diverged_loop = id;
        trace_.diverged_step = k + 1;
        return;
    }
    schedule(now + config_.sampling_period_us, EventKind::sample, id, 0, k + 1);
}

void Simulation::on_mac(TimeUs now) {
    auto step = channel_->advance(now);
    for (auto& ev : step.events) {
        switch (ev.kind) {
        case MacEventKind::delivered: deliver(ev.packet, now); break;
        case MacEventKind::dropped:
            ++trace_.counters.dropped;
            log(now, ev.loop, ev.packet.seq, ev.packet.gen_step, PacketEventKind::drop);
            break;
        case MacEventKind::collision: ++trace_.counters.collisions; break;
        case MacEventKind::tx_start: break;
        }
    }
    if (step.next) schedule_wake(*step.next);
}

void Simulation::on_ack(LoopId id, Seq seq, TimeUs now) {
    auto& loop = loops_[static_cast<std::size_t>(id)];
    ++trace_.counters.acks;
    log(now, id, seq, -1, PacketEventKind::ack);
    loop.policy->on_ack(seq, now);
    loop.unacked.erase(seq);
    flush_retransmissions(loop, now);
}

void Simulation::on_timeout(LoopId id, Seq seq, TimeUs now) {
    auto& loop = loops_[static_cast<std::size_t>(id)];
    const auto before = loop.policy->outstanding();
    loop.policy->on_timeout(seq, now);
    if (loop.policy->outstanding() == before) return;  // already ACKed or superseded
    ++trace_.counters.timeouts;
    log(now, id, seq, -1, PacketEventKind::timeout);
    if (loop.policy->kind() != PolicyKind::tcp) loop.unacked.erase(seq);
    flush_retransmissions(loop, now);
}

void Simulation::on_epoch(LoopId id, TimeUs now) {
    auto& loop = loops_[static_cast<std::size_t>(id)];
    if (loop.finished || halted_) return;
    loop.policy->on_epoch_tick(now);
    if (auto next = loop.policy->next_epoch_tick()) schedule(*next, EventKind::epoch_tick, id);
}

void Simulation::pad_traces() {
    const auto steps = static_cast<std::size_t>(config_.horizon_steps + 1);
    for (std::size_t i = 0; i < loops_.size(); ++i) {
        auto& lt = trace_.loops[i];
        if (lt.age.size() >= steps) continue;
        const auto& loop = loops_[i];
        const Vector last_u = lt.age.empty() ? Vector::Zero(lt.input_dim) : Vector(lt.input(lt.age.size() - 1));
        Step age = lt.age.empty() ? 0 : lt.age.back();
        while (lt.age.size() < steps) {
            ++age;
            lt.x.insert(lt.x.end(), loop.x.data(), loop.x.data() + loop.x.size());
            lt.u.insert(lt.u.end(), last_u.data(), last_u.data() + last_u.size());
            lt.age.push_back(age);
        }
    }
}

RunTrace Simulation::execute() {
    for (std::size_t i = 0; i < loops_.size(); ++i) {
        const auto id = static_cast<LoopId>(i);
        auto& loop = loops_[i];
        loop.policy->start(loop.phase_us);
        schedule(loop.phase_us, EventKind::sample, id, 0, 0);
        if (auto tick = loop.policy->next_epoch_tick()) schedule(*tick, EventKind::epoch_tick, id);
    }

    while (!queue_.empty()) {
        const Event e = queue_.pop();
        trace_.end_time_us = e.time_us;
        switch (e.kind) {
        case EventKind::tx_complete:
        case EventKind::slot_boundary: on_mac(e.time_us); break;
        case EventKind::sample:
            if (!halted_) on_sample(e.loop, e.step, e.time_us);
            break;
        case EventKind::ack_arrive: on_ack(e.loop, e.seq, e.time_us); break;
        case EventKind::timeout: on_timeout(e.loop, e.seq, e.time_us); break;
        case EventKind::epoch_tick: on_epoch(e.loop, e.time_us); break;
        }
    }
    pad_traces();
    return std::move(trace_);
}

}  // namespace

RunTrace run(const ScenarioConfig& config, std::uint64_t run_seed) {
    Simulation sim(config, run_seed);
    return sim.execute();
}

}  // namespace ncs
