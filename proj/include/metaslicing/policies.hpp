#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "metaslicing/errors.hpp"
#include "metaslicing/neural_net.hpp"
#include "metaslicing/scenario.hpp"
#include "metaslicing/state.hpp"

namespace metaslicing {

/// Stationary admission policy. Implementations only read the state; the
/// environment decides what an accept actually does.
class Policy {
public:
    virtual ~Policy() = default;
    virtual Action decide(const SystemState& s) = 0;
    virtual std::string name() const = 0;
};

/// Accepts exactly when every requested resource is available.
inline Action greedy_decide(const SystemState& s) {
    return s.available.covers(s.requested) ? Action::accept : Action::reject;
}

/// Greedy action on Q-values; a tie rejects.
inline Action greedy_on_q(const std::array<double, kActions>& q) {
    return q[1] > q[0] ? Action::accept : Action::reject;
}

class GreedyPolicy final : public Policy {
public:
    Action decide(const SystemState& s) override { return greedy_decide(s); }
    std::string name() const override { return "greedy"; }
};

class AlwaysRejectPolicy final : public Policy {
public:
    Action decide(const SystemState&) override { return Action::reject; }
    std::string name() const override { return "always-reject"; }
};

class AlwaysAcceptPolicy final : public Policy {
public:
    Action decide(const SystemState&) override { return Action::accept; }
    std::string name() const override { return "always-accept"; }
};

/// Adapter for ad-hoc policies in tests and oracle cross-checks.
class FunctionPolicy final : public Policy {
public:
    FunctionPolicy(std::string name, std::function<Action(const SystemState&)> fn)
        : name_(std::move(name)), fn_(std::move(fn)) {}
    Action decide(const SystemState& s) override { return fn_(s); }
    std::string name() const override { return name_; }

private:
    std::string name_;
    std::function<Action(const SystemState&)> fn_;
};

/// Greedy with respect to a trained (frozen) Q-network.
class ImsacPolicy final : public Policy {
public:
    ImsacPolicy(std::shared_ptr<const DuelingNet> net, ScenarioConfig config)
        : net_(std::move(net)), config_(std::move(config)) {
        if (!net_) throw NotFound("iMSAC policy needs a trained network checkpoint");
        if (net_->input_width() != encoded_width(config_))
            throw InvalidArgument("checkpoint input width does not match the scenario's state encoding");
    }
    Action decide(const SystemState& s) override { return greedy_on_q(net_->q_values(encode_state(s, config_))); }
    std::string name() const override { return "imsac"; }
    const DuelingNet& network() const noexcept { return *net_; }

private:
    std::shared_ptr<const DuelingNet> net_;
    ScenarioConfig config_;
};

}  // namespace metaslicing
