#include "ncs/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ncs {

std::string_view to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::udp: return "udp";
    case PolicyKind::tcp: return "tcp";
    case PolicyKind::zw: return "zw";
    case PolicyKind::acp: return "acp";
    case PolicyKind::et: return "et";
    case PolicyKind::zwet: return "zwet";
    case PolicyKind::at: return "at";
    }
    return "?";
}

std::optional<PolicyKind> parse_policy(std::string_view name) {
    for (const auto kind : all_policies())
        if (to_string(kind) == name) return kind;
    return std::nullopt;
}

const std::vector<PolicyKind>& all_policies() {
    static const std::vector<PolicyKind> kinds{PolicyKind::udp, PolicyKind::tcp, PolicyKind::zw, PolicyKind::acp,
                                               PolicyKind::et,  PolicyKind::zwet, PolicyKind::at};
    return kinds;
}

bool uses_threshold(PolicyKind kind) {
    return kind == PolicyKind::et || kind == PolicyKind::zwet || kind == PolicyKind::at;
}

void PolicyParams::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("policy: lambda must be finite and >= 0");
    if (!(at.lambda_min > 0.0 && at.lambda_min <= at.lambda_max))
        throw ConfigError("policy: adaptive threshold bounds must satisfy 0 < min <= max");
    if (!(at.lambda0 >= at.lambda_min && at.lambda0 <= at.lambda_max))
        throw ConfigError("policy: lambda0 must lie within the adaptive threshold bounds");
    if (!(at.factor > 1.0) || at.streak_length < 1) throw ConfigError("policy: invalid adaptive threshold step");
    if (ack_timeout_us <= 0) throw ConfigError("policy: ACK timeout must be positive");
    if (sampling_period_us <= 0) throw ConfigError("policy: sampling period must be positive");
    if (!(tcp.initial_cwnd >= 1.0) || !(tcp.initial_ssthresh >= 1.0) || tcp.rto_min_us <= 0 ||
        tcp.initial_rto_us < tcp.rto_min_us || tcp.rto_max_us < tcp.initial_rto_us)
        throw ConfigError("policy: invalid TCP parameters");
    const double max_rate = 1e6 / static_cast<double>(sampling_period_us);
    if (!(acp.gamma > 0.0) || !(acp.rate_min_hz > 0.0) || acp.rate_min_hz > max_rate ||
        acp.initial_rate_hz < acp.rate_min_hz || acp.initial_rate_hz > max_rate || acp.min_epoch_us <= 0 ||
        !(acp.epoch_srtt_multiple > 0.0))
        throw ConfigError("policy: invalid ACP parameters");
}

std::optional<double> PolicyConfig::reported_lambda() const {
    switch (kind) {
    case PolicyKind::et:
    case PolicyKind::zwet: return params.lambda;
    case PolicyKind::at: return params.at.lambda0;
    default: return std::nullopt;
    }
}

std::string PolicyConfig::label() const {
    std::ostringstream out;
    out << to_string(kind);
    if (auto l = reported_lambda()) out << "(" << *l << ")";
    return out.str();
}

std::optional<OutstandingSet::Entry> OutstandingSet::acknowledge(Seq seq) {
    auto it = entries_.find(seq);
    if (it == entries_.end()) return std::nullopt;
    auto entry = it->second;
    entries_.erase(it);
    return entry;
}

std::optional<OutstandingSet::Entry> OutstandingSet::expire(Seq seq, TimeUs now_us) {
    auto it = entries_.find(seq);
    if (it == entries_.end() || it->second.deadline_us != now_us) return std::nullopt;
    auto entry = it->second;
    entries_.erase(it);
    return entry;
}

std::optional<TimeUs> TransportPolicy::on_sent(Seq seq, TimeUs now_us, bool retransmission) {
    handle_sent(seq, now_us, retransmission);
    if (!uses_acks()) return std::nullopt;
    const TimeUs deadline = now_us + timeout_for(retransmission);
    outstanding_.insert(seq, {now_us, deadline, retransmission});
    return deadline;
}

void TransportPolicy::on_ack(Seq seq, TimeUs now_us) {
    if (auto entry = outstanding_.acknowledge(seq))
        handle_ack(seq, *entry, now_us);
    else
        handle_unknown_ack(seq, now_us);
}

void TransportPolicy::on_timeout(Seq seq, TimeUs now_us) {
    if (auto entry = outstanding_.expire(seq, now_us)) handle_timeout(seq, *entry, now_us);
}

// TCP Tahoe ------------------------------------------------------------------

TcpPolicy::TcpPolicy(PolicyParams params) : TransportPolicy(std::move(params)) {
    state_.cwnd = params_.tcp.initial_cwnd;
    state_.ssthresh = params_.tcp.initial_ssthresh;
    state_.rto_us = params_.tcp.initial_rto_us;
}

std::size_t TcpPolicy::window() const {
    return static_cast<std::size_t>(std::floor(state_.cwnd));
}

PolicyDecision TcpPolicy::admit(const Vector&, Step, TimeUs) {
    return {outstanding() < window()};
}

std::vector<Seq> TcpPolicy::take_retransmissions(TimeUs) {
    std::vector<Seq> out;
    std::size_t in_flight = outstanding();
    while (!state_.retransmit_queue.empty() && in_flight < window()) {
        out.push_back(state_.retransmit_queue.front());
        state_.retransmit_queue.pop_front();
        ++in_flight;
    }
    return out;
}

TimeUs TcpPolicy::timeout_for(bool) const {
    return state_.rto_us;
}

void TcpPolicy::update_rtt(double sample_us) {
    if (!state_.srtt_us) {
        state_.srtt_us = sample_us;
        state_.rttvar_us = sample_us / 2.0;
    } else {
        state_.rttvar_us = 0.75 * state_.rttvar_us + 0.25 * std::abs(*state_.srtt_us - sample_us);
        state_.srtt_us = 0.875 * *state_.srtt_us + 0.125 * sample_us;
    }
    const auto rto = static_cast<TimeUs>(std::llround(*state_.srtt_us + 4.0 * state_.rttvar_us));
    state_.rto_us = std::clamp(rto, params_.tcp.rto_min_us, params_.tcp.rto_max_us);
}

void TcpPolicy::handle_ack(Seq, const OutstandingSet::Entry& entry, TimeUs now_us) {
    // Karn: retransmitted segments give ambiguous RTT samples.
    if (!entry.retransmission) update_rtt(static_cast<double>(now_us - entry.send_time_us));
    if (state_.cwnd < state_.ssthresh)
        state_.cwnd += 1.0;
    else
        state_.cwnd += 1.0 / state_.cwnd;
}

void TcpPolicy::handle_unknown_ack(Seq seq, TimeUs) {
    // Late ACK of a copy that already timed out: nothing left to resend.
    auto& q = state_.retransmit_queue;
    q.erase(std::remove(q.begin(), q.end(), seq), q.end());
}

void TcpPolicy::handle_timeout(Seq seq, const OutstandingSet::Entry&, TimeUs) {
    state_.ssthresh = std::max(std::floor(state_.cwnd / 2.0), 1.0);
    state_.cwnd = 1.0;
    state_.rto_us = std::min(state_.rto_us * 2, params_.tcp.rto_max_us);
    state_.retransmit_queue.push_back(seq);
}

// ACP ------------------------------------------------------------------------

double acp_epoch_update(AcpState& state, const AcpParams& params, double max_rate_hz) {
    if (state.acks_in_epoch == 0 && !state.awaiting_ack) return state.rate_hz;

    RateAction action = RateAction::decrease;
    const bool have_age = state.age_samples > 0;
    const double mean_age = have_age ? state.age_sum_us / static_cast<double>(state.age_samples) : 0.0;

    if (state.acks_in_epoch == 0) {
        action = RateAction::decrease;
    } else if (!state.prev_epoch_age_us) {
        action = RateAction::increase;
    } else if (have_age && mean_age < *state.prev_epoch_age_us) {
        action = state.prev_action;
    } else {
        action = state.prev_action == RateAction::increase ? RateAction::decrease : RateAction::increase;
    }

    const double step = 1.0 + params.gamma;
    const double rate = action == RateAction::increase ? state.rate_hz * step : state.rate_hz / step;
    state.rate_hz = std::clamp(rate, params.rate_min_hz, max_rate_hz);
    state.prev_action = action;
    if (have_age) state.prev_epoch_age_us = mean_age;

    state.age_sum_us = 0.0;
    state.age_samples = 0;
    state.acks_in_epoch = 0;
    state.awaiting_ack = false;
    return state.rate_hz;
}

AcpPolicy::AcpPolicy(PolicyParams params) : TransportPolicy(std::move(params)) {
    state_.rate_hz = params_.acp.initial_rate_hz;
    state_.epoch_len_us = params_.acp.min_epoch_us;
}

void AcpPolicy::start(TimeUs now_us) {
    start_us_ = now_us;
    next_epoch_ = now_us + state_.epoch_len_us;
}

PolicyDecision AcpPolicy::admit(const Vector&, Step, TimeUs now_us) {
    const TimeUs reference = freshest_acked_gen_us_.value_or(start_us_);
    state_.age_estimate_us = static_cast<double>(now_us - reference);
    state_.age_sum_us += state_.age_estimate_us;
    ++state_.age_samples;

    const auto interval = static_cast<TimeUs>(std::llround(1e6 / state_.rate_hz));
    if (last_admit_us_ && now_us - *last_admit_us_ < interval) return {false};
    last_admit_us_ = now_us;
    state_.awaiting_ack = true;
    return {true};
}

void AcpPolicy::handle_ack(Seq, const OutstandingSet::Entry& entry, TimeUs now_us) {
    ++state_.acks_in_epoch;
    // Samples are admitted at their generation instant.
    if (!freshest_acked_gen_us_ || entry.send_time_us > *freshest_acked_gen_us_)
        freshest_acked_gen_us_ = entry.send_time_us;
    const double rtt = static_cast<double>(now_us - entry.send_time_us);
    srtt_us_ = srtt_us_ ? 0.875 * *srtt_us_ + 0.125 * rtt : rtt;
}

void AcpPolicy::on_epoch_tick(TimeUs now_us) {
    if (!next_epoch_ || *next_epoch_ != now_us) return;
    const double max_rate = 1e6 / static_cast<double>(params_.sampling_period_us);
    acp_epoch_update(state_, params_.acp, max_rate);
    if (outstanding() > 0) state_.awaiting_ack = true;
    const double by_rtt = srtt_us_ ? params_.acp.epoch_srtt_multiple * *srtt_us_ : 0.0;
    state_.epoch_len_us = std::max(params_.acp.min_epoch_us, static_cast<TimeUs>(std::llround(by_rtt)));
    next_epoch_ = now_us + state_.epoch_len_us;
}

// Adaptive threshold ----------------------------------------------------------

AdaptiveThresholdPolicy::AdaptiveThresholdPolicy(PolicyParams params) : TransportPolicy(std::move(params)) {
    state_.lambda = params_.at.lambda0;
}

void AdaptiveThresholdPolicy::handle_ack(Seq, const OutstandingSet::Entry&, TimeUs) {
    if (++state_.success_streak >= params_.at.streak_length) {
        state_.lambda = std::max(state_.lambda / params_.at.factor, params_.at.lambda_min);
        state_.success_streak = 0;
    }
}

void AdaptiveThresholdPolicy::handle_timeout(Seq, const OutstandingSet::Entry&, TimeUs) {
    state_.lambda = std::min(state_.lambda * params_.at.factor, params_.at.lambda_max);
    state_.success_streak = 0;
}

std::unique_ptr<TransportPolicy> make_policy(const PolicyConfig& config) {
    config.params.validate();
    switch (config.kind) {
    case PolicyKind::udp: return std::make_unique<UdpPolicy>(config.params);
    case PolicyKind::tcp: return std::make_unique<TcpPolicy>(config.params);
    case PolicyKind::zw: return std::make_unique<ZeroWaitPolicy>(config.params);
    case PolicyKind::acp: return std::make_unique<AcpPolicy>(config.params);
    case PolicyKind::et: return std::make_unique<EventTriggeredPolicy>(config.params);
    case PolicyKind::zwet: return std::make_unique<ZeroWaitEtPolicy>(config.params);
    case PolicyKind::at: return std::make_unique<AdaptiveThresholdPolicy>(config.params);
    }
    throw ConfigError("unknown policy");
}

}  // namespace ncs
