#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ncs/control.hpp"
#include "ncs/mac.hpp"

namespace ncs {

enum class PolicyKind { udp, tcp, zw, acp, et, zwet, at };

[[nodiscard]] std::string_view to_string(PolicyKind kind);
[[nodiscard]] std::optional<PolicyKind> parse_policy(std::string_view name);
[[nodiscard]] const std::vector<PolicyKind>& all_policies();

// Whether the policy's threshold parameter is meaningful (et, zwet: lambda; at: lambda0).
[[nodiscard]] bool uses_threshold(PolicyKind kind);

struct TcpParams {
    double initial_cwnd = 1.0;
    double initial_ssthresh = 64.0;
    TimeUs initial_rto_us = 1'000'000;
    TimeUs rto_min_us = 50'000;
    TimeUs rto_max_us = 60'000'000;
};

struct AcpParams {
    double gamma = 0.25;
    double initial_rate_hz = 10.0;
    double rate_min_hz = 1.0;
    TimeUs min_epoch_us = 100'000;
    double epoch_srtt_multiple = 10.0;
};

struct AtParams {
    double lambda0 = 50.0;
    double lambda_min = 0.1;
    double lambda_max = 1e4;
    double factor = 1.5;
    int streak_length = 10;
};

struct PolicyParams {
    double lambda = 15.0;  // et / zwet threshold
    AtParams at;
    TimeUs ack_timeout_us = 100'000;  // zw, zwet, at, acp
    TcpParams tcp;
    AcpParams acp;
    TimeUs sampling_period_us = 10'000;

    void validate() const;
};

struct PolicyConfig {
    PolicyKind kind = PolicyKind::udp;
    PolicyParams params;

    // Threshold reported alongside results: lambda for et/zwet, lambda0 for at.
    [[nodiscard]] std::optional<double> reported_lambda() const;
    [[nodiscard]] std::string label() const;
};

struct PolicyDecision {
    bool admit = false;
};

// Packets sent and not yet resolved by an ACK or a timeout.
class OutstandingSet {
public:
    struct Entry {
        TimeUs send_time_us;
        TimeUs deadline_us;
        bool retransmission;
    };

    void insert(Seq seq, Entry entry) { entries_[seq] = entry; }
    // Removes the entry on ACK; nullopt if unknown (already timed out).
    std::optional<Entry> acknowledge(Seq seq);
    // Removes the entry if its deadline is exactly now_us.
    std::optional<Entry> expire(Seq seq, TimeUs now_us);
    [[nodiscard]] bool contains(Seq seq) const { return entries_.count(seq) != 0; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

private:
    std::map<Seq, Entry> entries_;
};

struct TcpState {
    double cwnd = 1.0;
    double ssthresh = 64.0;
    std::optional<double> srtt_us;
    double rttvar_us = 0.0;
    TimeUs rto_us = 1'000'000;
    std::deque<Seq> retransmit_queue;
};

struct EtState {
    double lambda = 50.0;
    int success_streak = 0;
};

enum class RateAction { increase, decrease };

struct AcpState {
    double rate_hz = 10.0;
    TimeUs epoch_len_us = 100'000;
    std::optional<double> prev_epoch_age_us;
    RateAction prev_action = RateAction::increase;
    double age_estimate_us = 0.0;

    // Accumulated over the current epoch.
    double age_sum_us = 0.0;
    long age_samples = 0;
    long acks_in_epoch = 0;
    bool awaiting_ack = false;  // some packet was outstanding during the epoch
};

// End-of-epoch rate adaptation: repeat the previous action if the mean
// estimated age fell, otherwise reverse it; an epoch without ACKs counts as
// congestion. An epoch in which nothing awaited an ACK carries no feedback:
// the rate is kept and the accumulators roll into the next epoch.
// Returns the new rate.
double acp_epoch_update(AcpState& state, const AcpParams& params, double max_rate_hz);

// Transport-layer admission policy of one loop. Feedback is limited to TL
// ACKs and ACK timeouts.
class TransportPolicy {
public:
    explicit TransportPolicy(PolicyParams params) : params_(std::move(params)) {}
    virtual ~TransportPolicy() = default;
    TransportPolicy(const TransportPolicy&) = delete;
    TransportPolicy& operator=(const TransportPolicy&) = delete;

    [[nodiscard]] virtual PolicyKind kind() const = 0;
    // Whether the controller returns TL ACKs for this policy.
    [[nodiscard]] virtual bool uses_acks() const { return true; }

    virtual void start(TimeUs /*now_us*/) {}

    // Called once per sampling step with the freshly sampled state.
    virtual PolicyDecision admit(const Vector& x, Step k, TimeUs now_us) = 0;

    // Registers a (re)transmission. Returns the ACK deadline, if any.
    std::optional<TimeUs> on_sent(Seq seq, TimeUs now_us, bool retransmission = false);
    void on_ack(Seq seq, TimeUs now_us);
    void on_timeout(Seq seq, TimeUs now_us);

    // Packets to resend now (TCP only).
    virtual std::vector<Seq> take_retransmissions(TimeUs /*now_us*/) { return {}; }

    [[nodiscard]] virtual std::optional<TimeUs> next_epoch_tick() const { return std::nullopt; }
    virtual void on_epoch_tick(TimeUs /*now_us*/) {}

    [[nodiscard]] std::size_t outstanding() const { return outstanding_.size(); }
    [[nodiscard]] const PolicyParams& params() const { return params_; }

protected:
    [[nodiscard]] virtual TimeUs timeout_for(bool /*retransmission*/) const { return params_.ack_timeout_us; }
    virtual void handle_sent(Seq, TimeUs, bool) {}
    virtual void handle_ack(Seq, const OutstandingSet::Entry&, TimeUs) {}
    virtual void handle_unknown_ack(Seq, TimeUs) {}
    virtual void handle_timeout(Seq, const OutstandingSet::Entry&, TimeUs) {}

    PolicyParams params_;
    OutstandingSet outstanding_;
};

class UdpPolicy final : public TransportPolicy {
public:
    using TransportPolicy::TransportPolicy;
    PolicyKind kind() const override { return PolicyKind::udp; }
    bool uses_acks() const override { return false; }
    PolicyDecision admit(const Vector&, Step, TimeUs) override { return {true}; }
};

class TcpPolicy final : public TransportPolicy {
public:
    explicit TcpPolicy(PolicyParams params);
    PolicyKind kind() const override { return PolicyKind::tcp; }
    PolicyDecision admit(const Vector& x, Step k, TimeUs now_us) override;
    std::vector<Seq> take_retransmissions(TimeUs now_us) override;
    [[nodiscard]] const TcpState& state() const { return state_; }
    // Packets the window currently allows, floor(cwnd).
    [[nodiscard]] std::size_t window() const;

protected:
    TimeUs timeout_for(bool retransmission) const override;
    void handle_ack(Seq seq, const OutstandingSet::Entry& entry, TimeUs now_us) override;
    void handle_unknown_ack(Seq seq, TimeUs now_us) override;
    void handle_timeout(Seq seq, const OutstandingSet::Entry& entry, TimeUs now_us) override;

private:
    void update_rtt(double sample_us);
    TcpState state_;
};

class ZeroWaitPolicy final : public TransportPolicy {
public:
    using TransportPolicy::TransportPolicy;
    PolicyKind kind() const override { return PolicyKind::zw; }
    PolicyDecision admit(const Vector&, Step, TimeUs) override { return {outstanding() == 0}; }
};

class AcpPolicy final : public TransportPolicy {
public:
    explicit AcpPolicy(PolicyParams params);
    PolicyKind kind() const override { return PolicyKind::acp; }
    void start(TimeUs now_us) override;
    PolicyDecision admit(const Vector& x, Step k, TimeUs now_us) override;
    std::optional<TimeUs> next_epoch_tick() const override { return next_epoch_; }
    void on_epoch_tick(TimeUs now_us) override;
    [[nodiscard]] const AcpState& state() const { return state_; }

protected:
    void handle_ack(Seq seq, const OutstandingSet::Entry& entry, TimeUs now_us) override;

private:
    AcpState state_;
    std::optional<double> srtt_us_;
    std::optional<TimeUs> last_admit_us_;
    std::optional<TimeUs> freshest_acked_gen_us_;
    TimeUs start_us_ = 0;
    std::optional<TimeUs> next_epoch_;
};

class EventTriggeredPolicy final : public TransportPolicy {
public:
    using TransportPolicy::TransportPolicy;
    PolicyKind kind() const override { return PolicyKind::et; }
    bool uses_acks() const override { return false; }
    PolicyDecision admit(const Vector& x, Step, TimeUs) override { return {x.norm() >= params_.lambda}; }
};

class ZeroWaitEtPolicy final : public TransportPolicy {
public:
    using TransportPolicy::TransportPolicy;
    PolicyKind kind() const override { return PolicyKind::zwet; }
    PolicyDecision admit(const Vector& x, Step, TimeUs) override {
        return {x.norm() >= params_.lambda && outstanding() == 0};
    }
};

// Zero-wait ET whose threshold grows by `factor` on each ACK timeout and
// shrinks by `factor` after every `streak_length` consecutive timely ACKs.
class AdaptiveThresholdPolicy final : public TransportPolicy {
public:
    explicit AdaptiveThresholdPolicy(PolicyParams params);
    PolicyKind kind() const override { return PolicyKind::at; }
    PolicyDecision admit(const Vector& x, Step, TimeUs) override {
        return {x.norm() >= state_.lambda && outstanding() == 0};
    }
    [[nodiscard]] const EtState& state() const { return state_; }

protected:
    void handle_ack(Seq seq, const OutstandingSet::Entry& entry, TimeUs now_us) override;
    void handle_timeout(Seq seq, const OutstandingSet::Entry& entry, TimeUs now_us) override;

private:
    EtState state_;
};

[[nodiscard]] std::unique_ptr<TransportPolicy> make_policy(const PolicyConfig& config);

}  // namespace ncs
