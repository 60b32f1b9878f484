#pragma once

// iMSAC admission agent: dueling double deep Q-learning with experience
// replay, epsilon-greedy exploration and a periodically synchronised target
// network.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaslicing/errors.hpp"
#include "metaslicing/event_engine.hpp"
#include "metaslicing/neural_net.hpp"
#include "metaslicing/policies.hpp"
#include "metaslicing/scenario.hpp"
#include "metaslicing/state.hpp"

namespace metaslicing {

struct Experience {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
};

/// Fixed-capacity ring of experiences with uniform sampling (with
/// replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw InvalidArgument("replay buffer capacity must be >= 1");
        items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
    }

    void push(Experience e) {
        if (e.action != 0 && e.action != 1) throw InvalidArgument("experience action must be 0 or 1");
        if (!std::isfinite(e.reward)) throw InvalidArgument("experience reward must be finite");
        if (items_.size() < capacity_) {
            items_.push_back(std::move(e));
        } else {
            items_[head_] = std::move(e);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const Experience& operator[](std::size_t k) const { return items_.at(k); }

    /// Indices of a uniform mini-batch; requires size() >= batch.
    template <typename Urbg>
    std::vector<std::size_t> sample_indices(std::size_t batch, Urbg& rng) const {
        if (batch == 0 || items_.size() < batch) throw InvalidArgument("replay buffer holds fewer experiences than the batch size");
        std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
        std::vector<std::size_t> out(batch);
        for (auto& k : out) k = pick(rng);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Experience> items_;
};

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.01;
    std::uint64_t decay_steps = 100000;

    double at(std::uint64_t step) const {
        if (decay_steps == 0 || step >= decay_steps) return end;
        const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
        return std::max(end, start - (start - end) * frac);
    }
};

/// With probability 1-eps the greedy action (ties reject), otherwise a
/// uniformly random action.
template <typename Urbg>
Action select_action(const DuelingNet& net, std::span<const double> encoded, double epsilon, Urbg& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must be in [0, 1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (epsilon > 0.0 && coin(rng) < epsilon) {
        std::uniform_int_distribution<int> any(0, 1);
        return action_from_index(any(rng));
    }
    return greedy_on_q(net.q_values(encoded));
}

/// H = r + gamma * Qtarget(s', argmax_a Q(s', a)).
inline double double_q_target(double reward, const std::array<double, kActions>& online_next,
                              const std::array<double, kActions>& target_next, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("discount must be in [0, 1)");
    if (!std::isfinite(reward) || !std::isfinite(online_next[0]) || !std::isfinite(online_next[1]) ||
        !std::isfinite(target_next[0]) || !std::isfinite(target_next[1]))
        throw InvalidArgument("double_q_target: non-finite input");
    const int chosen = to_int(greedy_on_q(online_next));
    return reward + gamma * target_next[static_cast<std::size_t>(chosen)];
}

inline double double_q_target(double reward, std::span<const double> next_state, const DuelingNet& online,
                              const DuelingNet& target, double gamma) {
    return double_q_target(reward, online.q_values(next_state), target.q_values(next_state), gamma);
}

struct TrainingConfig {
    std::uint64_t iterations = 375000;
    double gamma = 0.9;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t buffer_capacity = 100000;
    std::uint64_t target_sync = 10000;
    EpsilonSchedule epsilon{};
    std::vector<std::size_t> hidden{64, 64};
    Activation activation = Activation::relu;
    Aggregation aggregation = Aggregation::mean;
    std::uint64_t eval_interval = 5000;
    std::uint64_t eval_arrivals = 20000;
    /// Restart the environment from an empty system every this many steps
    /// (0 = never). A long saturated run almost never revisits lightly
    /// loaded states, and a policy that rejects in the empty system never
    /// leaves it.
    std::uint64_t env_reset_interval = 10000;
    std::uint64_t seed = 7;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("training.gamma", "must be in [0, 1)");
        if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate", "must be > 0");
        if (batch_size == 0) throw ConfigError("training.batch_size", "must be >= 1");
        if (buffer_capacity < batch_size) throw ConfigError("training.buffer_capacity", "must be >= batch_size");
        if (target_sync == 0) throw ConfigError("training.target_sync", "must be >= 1");
        if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0)) throw ConfigError("training.epsilon_start", "must be in [0, 1]");
        if (!(epsilon.end >= 0.0 && epsilon.end <= epsilon.start))
            throw ConfigError("training.epsilon_end", "must be in [0, epsilon_start]");
        for (auto h : hidden)
            if (h == 0) throw ConfigError("training.hidden_layers", "widths must be >= 1");
    }

    static TrainingConfig from_json(const nlohmann::json& j, const std::string& prefix = "training") {
        TrainingConfig c;
        config_detail::FieldReader r(j, prefix);
        r.read("iterations", c.iterations);
        r.read("gamma", c.gamma);
        r.read("learning_rate", c.learning_rate);
        r.read("batch_size", c.batch_size);
        r.read("buffer_capacity", c.buffer_capacity);
        r.read("target_sync", c.target_sync);
        r.read("epsilon_start", c.epsilon.start);
        r.read("epsilon_end", c.epsilon.end);
        r.read("epsilon_decay_steps", c.epsilon.decay_steps);
        r.read("hidden_layers", c.hidden);
        std::string act = to_string(c.activation), agg = to_string(c.aggregation);
        r.read("activation", act);
        r.read("aggregation", agg);
        try {
            c.activation = activation_from_string(act);
        } catch (const InvalidArgument& e) {
            throw ConfigError(r.path("activation"), e.what());
        }
        try {
            c.aggregation = aggregation_from_string(agg);
        } catch (const InvalidArgument& e) {
            throw ConfigError(r.path("aggregation"), e.what());
        }
        r.read("eval_interval", c.eval_interval);
        r.read("eval_arrivals", c.eval_arrivals);
        r.read("env_reset_interval", c.env_reset_interval);
        r.read("seed", c.seed);
        r.reject_unknown();
        c.validate();
        return c;
    }

    nlohmann::json to_json() const {
        return {{"iterations", iterations},
                {"gamma", gamma},
                {"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"buffer_capacity", buffer_capacity},
                {"target_sync", target_sync},
                {"epsilon_start", epsilon.start},
                {"epsilon_end", epsilon.end},
                {"epsilon_decay_steps", epsilon.decay_steps},
                {"hidden_layers", hidden},
                {"activation", to_string(activation)},
                {"aggregation", to_string(aggregation)},
                {"eval_interval", eval_interval},
                {"eval_arrivals", eval_arrivals},
                {"env_reset_interval", env_reset_interval},
                {"seed", seed}};
    }
};

struct CurvePoint {
    std::uint64_t step = 0;
    double eval_average_reward = 0.0;
    double epsilon = 0.0;
};

struct TrainingResult {
    DuelingNet network;
    std::vector<CurvePoint> curve;
    std::uint64_t target_syncs = 0;
};

/// Scenario used for frozen-policy evaluation snapshots: same system, its
/// own arrival stream, fixed across snapshots so curves compare like with
/// like.
inline ScenarioConfig evaluation_scenario(const ScenarioConfig& train, std::uint64_t offset = 1000003) {
    ScenarioConfig e = train;
    e.seed = train.seed + offset;
    return e;
}

class ImsacTrainer {
public:
    ImsacTrainer(ScenarioConfig scenario, TrainingConfig config)
        : scenario_((scenario.validate(), std::move(scenario))),
          config_((config.validate(), std::move(config))),
          env_(scenario_),
          rng_(make_stream(config_.seed, 11)),
          online_(Architecture{encoded_width(scenario_), config_.hidden, config_.activation, config_.aggregation},
                  config_.seed),
          target_(online_),
          buffer_(config_.buffer_capacity),
          optimizer_(config_.learning_rate) {}

    const DuelingNet& online() const noexcept { return online_; }
    const DuelingNet& target() const noexcept { return target_; }
    const ReplayBuffer& buffer() const noexcept { return buffer_; }
    std::uint64_t step_count() const noexcept { return step_; }
    std::uint64_t target_syncs() const noexcept { return syncs_; }
    double epsilon() const { return config_.epsilon.at(step_); }
    const Simulator& environment() const noexcept { return env_; }

    /// One iteration of the training loop. Returns the mini-batch cost
    /// (0 until the buffer holds a full batch).
    double step() {
        std::vector<double> s = encode_state(env_.state(), scenario_);
        const Action a = select_action(online_, s, config_.epsilon.at(step_), rng_);
        const Transition tr = env_.step(a);
        buffer_.push({std::move(s), to_int(tr.requested_action), tr.reward, encode_state(tr.next_state, scenario_)});

        double cost = 0.0;
        if (buffer_.size() >= config_.batch_size) cost = learn();
        ++step_;
        if (step_ % config_.target_sync == 0) {
            target_ = online_;
            ++syncs_;
        }
        if (config_.env_reset_interval && step_ % config_.env_reset_interval == 0) {
            ScenarioConfig fresh = scenario_;
            fresh.seed = scenario_.seed + 7919 * (step_ / config_.env_reset_interval);
            env_ = Simulator(fresh);
        }
        return cost;
    }

    MetricsReport evaluate(std::uint64_t arrivals) const {
        ImsacPolicy policy(std::make_shared<DuelingNet>(online_), scenario_);
        return evaluate_policy(evaluation_scenario(scenario_), policy, arrivals);
    }

    /// Runs the remaining iterations, recording an evaluation snapshot at
    /// step 0 and every eval_interval steps.
    TrainingResult run(const std::function<void(const CurvePoint&)>& on_point = {}) {
        TrainingResult out;
        auto snapshot = [&] {
            if (config_.eval_interval == 0 || config_.eval_arrivals == 0) return;
            CurvePoint p{step_, evaluate(config_.eval_arrivals).average_reward, epsilon()};
            if (on_point) on_point(p);
            out.curve.push_back(p);
        };
        if (step_ == 0) snapshot();
        while (step_ < config_.iterations) {
            step();
            if (config_.eval_interval && step_ % config_.eval_interval == 0) snapshot();
        }
        out.network = online_;
        out.target_syncs = syncs_;
        return out;
    }

private:
    double learn() {
        const auto idx = buffer_.sample_indices(config_.batch_size, rng_);
        const auto width = static_cast<Eigen::Index>(encoded_width(scenario_));
        const auto B = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd next(width, B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& e = buffer_[idx[static_cast<std::size_t>(b)]];
            for (Eigen::Index k = 0; k < width; ++k) next(k, b) = e.next_state[static_cast<std::size_t>(k)];
        }
        const Eigen::MatrixXd q_online = online_.q_batch(next);
        const Eigen::MatrixXd q_target = target_.q_batch(next);
        std::vector<TrainingSample> batch;
        batch.reserve(idx.size());
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& e = buffer_[idx[static_cast<std::size_t>(b)]];
            const double h = double_q_target(e.reward, {q_online(0, b), q_online(1, b)}, {q_target(0, b), q_target(1, b)},
                                             config_.gamma);
            batch.push_back({e.state, e.action, h});
        }
        return online_.backward_and_update(batch, optimizer_);
    }

    ScenarioConfig scenario_;
    TrainingConfig config_;
    Simulator env_;
    Rng rng_;
    DuelingNet online_;
    DuelingNet target_;
    ReplayBuffer buffer_;
    SgdOptimizer optimizer_;
    std::uint64_t step_ = 0;
    std::uint64_t syncs_ = 0;
};

inline TrainingResult train(const ScenarioConfig& scenario, const TrainingConfig& config,
                            const std::function<void(const CurvePoint&)>& on_point = {}) {
    ImsacTrainer trainer(scenario, config);
    return trainer.run(on_point);
}

}  // namespace metaslicing
