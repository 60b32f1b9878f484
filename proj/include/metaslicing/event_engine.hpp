#pragma once

// Continuous-time loss-system simulator. Decision epochs are request
// arrivals; departures are processed silently between them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include "metaslicing/errors.hpp"
#include "metaslicing/policies.hpp"
#include "metaslicing/resource_manager.hpp"
#include "metaslicing/reward_metrics.hpp"
#include "metaslicing/scenario.hpp"
#include "metaslicing/similarity.hpp"
#include "metaslicing/state.hpp"

namespace metaslicing {

using Rng = std::mt19937_64;

/// Exponential gap with the given rate (per hour); always > 0.
inline double sample_interarrival(double rate, Rng& rng) {
    if (!(rate > 0.0)) throw InvalidArgument("arrival rate must be > 0");
    std::exponential_distribution<double> dist(rate);
    double t = 0.0;
    while (t <= 0.0) t = dist(rng);
    return t;
}

/// Exponential holding time with mean 1/rate hours.
inline double sample_lifetime(double rate, Rng& rng) {
    if (!(rate > 0.0)) throw InvalidArgument("departure rate must be > 0");
    std::exponential_distribution<double> dist(rate);
    double t = 0.0;
    while (t <= 0.0) t = dist(rng);
    return t;
}

/// Independent RNG streams derived from one seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x4d53u};
    return Rng(seq);
}

/// A request as drawn by the arrival process.
struct Request {
    MetaSliceSpec spec;
    double lifetime = 0.0;  // used only if admitted
};

class Simulator {
public:
    explicit Simulator(ScenarioConfig config)
        : config_((config.validate(), std::move(config))),
          manager_(config_.capacity_vector(), config_.function_types, config_.config_bits, config_.share_limit),
          metrics_(config_.classes()),
          arrival_rng_(make_stream(config_.seed, 1)),
          lifetime_rng_(make_stream(config_.seed, 2)),
          class_dist_(config_.arrival_rates.begin(), config_.arrival_rates.end()) {
        if (!config_.initial_occupancy.empty()) seed_occupancy(config_.initial_occupancy);
        clock_ = sample_interarrival(config_.total_arrival_rate(), arrival_rng_);
        process_departures_until(clock_, /*count_time=*/false);
        draw_request();
    }

    const ScenarioConfig& config() const noexcept { return config_; }
    const SystemState& state() const noexcept { return state_; }
    const Request& pending_request() const noexcept { return request_; }
    const SimilarityReport& pending_report() const noexcept { return report_; }
    const ResourceManager& resources() const noexcept { return manager_; }
    const MetricsAccumulator& metrics() const noexcept { return metrics_; }
    double now() const noexcept { return clock_; }
    std::uint64_t decisions() const noexcept { return decisions_; }
    std::vector<int> occupancy() const { return manager_.occupancy(config_.classes()); }

    Transition step(Policy& policy) { return step(policy.decide(state_)); }

    /// Applies `requested` to the pending request and advances to the next
    /// arrival. An accept that does not fit is executed as a reject.
    Transition step(Action requested) {
        Transition t;
        t.state = state_;
        t.requested_action = requested;
        const int cls = request_.spec.class_index;
        const bool fits = manager_.available().covers(footprint_, ResourceManager::kTolerance);
        if (requested == Action::accept && fits) {
            const auto placed = manager_.place(request_.spec, report_, footprint_);
            departures_.emplace(clock_ + request_.lifetime, placed.slice);
            t.action = Action::accept;
            t.reward = immediate_reward(cls, config_.class_rewards, footprint_, true, config_.resource_weights);
        }
        metrics_.record_decision(cls, t.action == Action::accept, t.reward);
        ++decisions_;

        const double gap = sample_interarrival(config_.total_arrival_rate(), arrival_rng_);
        const double next = clock_ + gap;
        process_departures_until(next, /*count_time=*/true);
        clock_ = next;
        draw_request();
        t.next_state = state_;
        t.sojourn = gap;
        return t;
    }

private:
    void seed_occupancy(const std::vector<int>& counts) {
        for (std::size_t i = 0; i < counts.size(); ++i) {
            for (int n = 0; n < counts[i]; ++n) {
                Request req = make_request(static_cast<int>(i));
                analyze(req.spec);
                if (!manager_.available().covers(footprint_, ResourceManager::kTolerance))
                    throw ConfigError("initial_occupancy", "does not fit in the system capacity");
                const auto placed = manager_.place(req.spec, report_, footprint_);
                departures_.emplace(req.lifetime, placed.slice);
            }
        }
    }

    Request make_request(int cls) {
        Request req;
        req.spec.class_index = cls;
        const std::size_t F = config_.function_types, K = config_.config_bits;
        req.spec.functions = trivial_function_set(F, K);
        req.spec.per_function_resources.assign(F, ResourceVector(config_.resource_types()));
        // Partial Fisher-Yates: functions_per_slice distinct slots.
        std::vector<std::size_t> slots(F);
        for (std::size_t f = 0; f < F; ++f) slots[f] = f;
        for (std::size_t k = 0; k < config_.functions_per_slice; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, F - 1);
            std::swap(slots[k], slots[pick(arrival_rng_)]);
            const std::size_t f = slots[k];
            if (K == 1) {
                req.spec.functions[f] = FunctionConfig{1};
            } else {
                std::uniform_int_distribution<std::uint64_t> bits(1, (std::uint64_t{1} << std::min<std::size_t>(K, 63)) - 1);
                const auto pattern = bits(arrival_rng_);
                FunctionConfig cfg(K);
                for (std::size_t b = 0; b < K && b < 63; ++b) cfg.set(b, (pattern >> b) & 1u);
                req.spec.functions[f] = std::move(cfg);
            }
            req.spec.per_function_resources[f] = ResourceVector(config_.function_resources);
        }
        req.lifetime = sample_lifetime(config_.departure_rates[static_cast<std::size_t>(cls)], lifetime_rng_);
        return req;
    }

    void analyze(const MetaSliceSpec& spec) {
        report_ = config_.sharing_enabled ? manager_.analyze(spec.functions, config_.capacity_aware_similarity)
                                          : SimilarityReport{};
        footprint_ = admission_footprint(spec, report_, config_.sharing_enabled);
    }

    void draw_request() {
        request_ = make_request(class_dist_(arrival_rng_));
        analyze(request_.spec);
        state_.available = manager_.available();
        state_.requested = config_.state_uses_raw_demand ? request_.spec.raw_demand() : footprint_;
        state_.class_index = request_.spec.class_index;
        state_.similarity = report_.j;
    }

    void process_departures_until(double t, bool count_time) {
        double last = clock_;
        while (!departures_.empty() && departures_.top().first < t) {
            const auto [when, id] = departures_.top();
            departures_.pop();
            if (count_time) advance_metrics(when - last);
            last = when;
            manager_.release(id);
        }
        if (count_time) advance_metrics(t - last);
    }

    void advance_metrics(double dt) {
        metrics_.advance(dt, static_cast<double>(manager_.running_slices()),
                         static_cast<double>(manager_.instance_count()));
    }

    using Departure = std::pair<double, SliceId>;
    ScenarioConfig config_;
    ResourceManager manager_;
    MetricsAccumulator metrics_;
    Rng arrival_rng_;
    Rng lifetime_rng_;
    std::discrete_distribution<int> class_dist_;
    std::priority_queue<Departure, std::vector<Departure>, std::greater<>> departures_;
    double clock_ = 0.0;
    std::uint64_t decisions_ = 0;
    Request request_;
    SimilarityReport report_;
    ResourceVector footprint_;
    SystemState state_;
};

struct EpisodeResult {
    std::vector<Transition> transitions;
    MetricsAccumulator metrics;
};

/// Runs `horizon` decision epochs from a fresh simulator. `on_transition`,
/// when given, sees every transition in time order; transitions are only
/// stored when `keep_transitions` is set.
inline EpisodeResult run_episode(const ScenarioConfig& config, Policy& policy, std::uint64_t horizon,
                                 bool keep_transitions = true,
                                 const std::function<void(const Transition&)>& on_transition = {}) {
    Simulator sim(config);
    EpisodeResult out;
    if (keep_transitions) out.transitions.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(horizon, 1u << 22)));
    for (std::uint64_t n = 0; n < horizon; ++n) {
        Transition t = sim.step(policy);
        if (on_transition) on_transition(t);
        if (keep_transitions) out.transitions.push_back(std::move(t));
    }
    out.metrics = sim.metrics();
    return out;
}

/// Metrics only, for long evaluation runs.
inline MetricsReport evaluate_policy(const ScenarioConfig& config, Policy& policy, std::uint64_t horizon) {
    return run_episode(config, policy, horizon, /*keep_transitions=*/false).metrics.finalize();
}

}  // namespace metaslicing
