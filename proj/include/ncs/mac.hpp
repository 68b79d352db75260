#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "ncs/control.hpp"
#include "ncs/rng.hpp"

namespace ncs {

// Virtual time in microseconds.
using TimeUs = std::int64_t;
using LoopId = int;
using Seq = std::uint64_t;

inline constexpr int kUpdatePacketBytes = 125;

struct UpdatePacket {
    LoopId loop_id = 0;
    Seq seq = 0;
    Step gen_step = 0;
    Vector payload;
    TimeUs admit_time_us = 0;
    int size_bytes = kUpdatePacketBytes;
    bool retransmission = false;
};

struct MacConfig {
    TimeUs slot_us = 320;
    TimeUs data_tx_us = 4000;
    TimeUs ack_tx_us = 1000;
    int max_retries = 7;
    int min_be = 3;
    int max_be = 5;
    std::size_t queue_capacity = 0;  // 0 = unbounded

    void validate() const;
};

struct MacNodeState {
    std::deque<UpdatePacket> queue;
    int backoff_remaining = 0;
    int backoff_exponent = 3;
    int retry_count = 0;
    TimeUs busy_until_us = 0;
    bool contending = false;
};

// Uniform integer in [0, 2^be - 1].
[[nodiscard]] int draw_backoff(RngStream& rng, int be);

enum class MacEventKind {
    tx_start,
    delivered,
    collision,
    dropped,
};

struct MacEvent {
    MacEventKind kind;
    LoopId loop;
    TimeUs time_us;
    UpdatePacket packet;  // head packet involved
};

enum class ChannelWakeKind {
    slot_boundary,
    tx_complete,
};

struct ChannelWake {
    TimeUs time_us;
    ChannelWakeKind kind;
};

struct EnqueueResult {
    std::optional<ChannelWake> wake;
    bool dropped = false;  // tail drop on a full, bounded queue
};

struct ChannelStep {
    std::vector<MacEvent> events;
    std::optional<ChannelWake> next;
};

// Single-hop slotted CSMA/CA channel shared by all sensors. Contending nodes
// count their backoff down on a common slot grid that restarts whenever the
// channel becomes idle; counters are frozen while it is busy. A node joins
// the grid at the first slot boundary at or after its head packet arrives.
//
// The owner must call advance() exactly at the time returned in `next`
// (and at the time returned by enqueue(), when set). At most one wake-up is
// outstanding at any time.
class CsmaChannel {
public:
    CsmaChannel(MacConfig config, std::vector<RngStream> backoff_streams);

    // Appends to the node's FCFS queue. Returns a wake-up if the channel was
    // idle with no slot grid running.
    EnqueueResult enqueue(UpdatePacket pkt, TimeUs now_us);

    // Processes the transmission ending at now_us and/or the slot boundary at now_us.
    ChannelStep advance(TimeUs now_us);

    [[nodiscard]] bool busy() const { return transmitting_.has_value(); }
    [[nodiscard]] bool has_pending_wake() const { return pending_wake_.has_value(); }
    [[nodiscard]] std::size_t queued_packets() const;
    [[nodiscard]] const MacNodeState& node(LoopId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }
    [[nodiscard]] const MacConfig& config() const { return config_; }

private:
    struct Transmission {
        std::vector<LoopId> senders;
        TimeUs end_us;
    };

    void start_contention(LoopId id);
    void finish_transmission(TimeUs now_us, std::vector<MacEvent>& out);
    void slot_boundary(TimeUs now_us, std::vector<MacEvent>& out);
    bool any_contending() const;

    MacConfig config_;
    std::vector<MacNodeState> nodes_;
    std::vector<RngStream> rng_;
    std::optional<Transmission> transmitting_;
    std::optional<ChannelWake> pending_wake_;
};

// TL acknowledgement on the dedicated control channel: fixed latency, no
// contention, no loss.
struct AckEvent {
    LoopId loop;
    Seq seq;
    TimeUs arrive_us;
};

[[nodiscard]] inline AckEvent deliver_ack(const UpdatePacket& pkt, TimeUs now_us, const MacConfig& config) {
    return AckEvent{pkt.loop_id, pkt.seq, now_us + config.ack_tx_us};
}

}  // namespace ncs
