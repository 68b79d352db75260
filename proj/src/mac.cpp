#include "ncs/mac.hpp"

#include <stdexcept>

namespace ncs {

void MacConfig::validate() const {
    if (slot_us <= 0 || data_tx_us <= 0 || ack_tx_us <= 0)
        throw ConfigError("mac: all durations must be positive");
    if (min_be < 0 || min_be > max_be || max_be > 30)
        throw ConfigError("mac: backoff exponents must satisfy 0 <= min_be <= max_be <= 30");
    if (max_retries < 0) throw ConfigError("mac: max_retries must be non-negative");
}

int draw_backoff(RngStream& rng, int be) {
    return static_cast<int>(rng.uniform_below(std::uint64_t{1} << be));
}

CsmaChannel::CsmaChannel(MacConfig config, std::vector<RngStream> backoff_streams)
    : config_(config), nodes_(backoff_streams.size()), rng_(std::move(backoff_streams)) {
    config_.validate();
    for (auto& n : nodes_) n.backoff_exponent = config_.min_be;
}

std::size_t CsmaChannel::queued_packets() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n.queue.size();
    return total;
}

bool CsmaChannel::any_contending() const {
    for (const auto& n : nodes_)
        if (n.contending) return true;
    return false;
}

void CsmaChannel::start_contention(LoopId id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    n.contending = true;
    n.retry_count = 0;
    n.backoff_exponent = config_.min_be;
    n.backoff_remaining = draw_backoff(rng_[static_cast<std::size_t>(id)], n.backoff_exponent);
}

EnqueueResult CsmaChannel::enqueue(UpdatePacket pkt, TimeUs now_us) {
    const auto id = pkt.loop_id;
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw std::out_of_range("mac: unknown node");
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (config_.queue_capacity != 0 && n.queue.size() >= config_.queue_capacity) return {std::nullopt, true};

    n.queue.push_back(std::move(pkt));
    if (n.queue.size() > 1) return {};

    start_contention(id);
    if (pending_wake_) return {};
    pending_wake_ = ChannelWake{now_us, ChannelWakeKind::slot_boundary};
    return {pending_wake_, false};
}

void CsmaChannel::finish_transmission(TimeUs now_us, std::vector<MacEvent>& out) {
    const auto senders = std::move(transmitting_->senders);
    transmitting_.reset();

    if (senders.size() == 1) {
        const auto id = senders.front();
        auto& n = nodes_[static_cast<std::size_t>(id)];
        out.push_back({MacEventKind::delivered, id, now_us, std::move(n.queue.front())});
        n.queue.pop_front();
        n.contending = false;
        if (!n.queue.empty()) start_contention(id);
        return;
    }

    for (const auto id : senders) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        ++n.retry_count;
        if (n.retry_count > config_.max_retries) {
            out.push_back({MacEventKind::dropped, id, now_us, std::move(n.queue.front())});
            n.queue.pop_front();
            n.contending = false;
            if (!n.queue.empty()) start_contention(id);
            continue;
        }
        out.push_back({MacEventKind::collision, id, now_us, n.queue.front()});
        n.backoff_exponent = std::min(n.backoff_exponent + 1, config_.max_be);
        n.backoff_remaining = draw_backoff(rng_[static_cast<std::size_t>(id)], n.backoff_exponent);
    }
}

void CsmaChannel::slot_boundary(TimeUs now_us, std::vector<MacEvent>& out) {
    std::vector<LoopId> ready;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].contending && nodes_[i].backoff_remaining == 0) ready.push_back(static_cast<LoopId>(i));

    if (ready.empty()) {
        for (auto& n : nodes_)
            if (n.contending) --n.backoff_remaining;
        pending_wake_ = ChannelWake{now_us + config_.slot_us, ChannelWakeKind::slot_boundary};
        return;
    }

    const TimeUs end = now_us + config_.data_tx_us;
    for (const auto id : ready) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        n.busy_until_us = end;
        out.push_back({MacEventKind::tx_start, id, now_us, n.queue.front()});
    }
    transmitting_ = Transmission{std::move(ready), end};
    pending_wake_ = ChannelWake{end, ChannelWakeKind::tx_complete};
}

ChannelStep CsmaChannel::advance(TimeUs now_us) {
    if (!pending_wake_ || pending_wake_->time_us != now_us)
        throw std::logic_error("mac: advance() called off schedule");
    pending_wake_.reset();

    ChannelStep step;
    if (transmitting_ && transmitting_->end_us == now_us) finish_transmission(now_us, step.events);
    if (!transmitting_ && any_contending()) slot_boundary(now_us, step.events);
    step.next = pending_wake_;
    return step;
}

}  // namespace ncs
