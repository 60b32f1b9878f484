#pragma once

#include <cstdint>
#include <vector>

#include "metaslicing/resource_vector.hpp"
#include "metaslicing/scenario.hpp"

namespace metaslicing {

enum class Action : std::uint8_t { reject = 0, accept = 1 };

inline int to_int(Action a) noexcept { return static_cast<int>(a); }
inline Action action_from_index(int a) { return a ? Action::accept : Action::reject; }

/// Observation at a decision epoch: what is free, what the pending request
/// would cost, its class (0-based) and its similarity index.
struct SystemState {
    ResourceVector available;
    ResourceVector requested;
    int class_index = 0;
    double similarity = 0.0;

    friend bool operator==(const SystemState&, const SystemState&) = default;
};

struct Transition {
    SystemState state;
    Action action = Action::reject;            // what the environment executed
    Action requested_action = Action::reject;  // what the policy asked for
    double reward = 0.0;
    SystemState next_state;
    double sojourn = 0.0;  // hours until the next decision epoch

    friend bool operator==(const Transition&, const Transition&) = default;
};

/// Network input for a state: available and requested resources scaled by
/// capacity, one-hot class, similarity scaled by its maximum. Width 2D+I+1,
/// every entry in [0, 1].
inline std::vector<double> encode_state(const SystemState& s, const ScenarioConfig& config) {
    const std::size_t D = config.resource_types(), I = config.classes();
    std::vector<double> out;
    out.reserve(2 * D + I + 1);
    auto scaled = [&](double v, std::size_t d) {
        const double cap = config.capacity[d];
        if (cap <= 0.0) return 0.0;
        return std::clamp(v / cap, 0.0, 1.0);
    };
    for (std::size_t d = 0; d < D; ++d) out.push_back(scaled(s.available[d], d));
    for (std::size_t d = 0; d < D; ++d) out.push_back(scaled(s.requested[d], d));
    for (std::size_t i = 0; i < I; ++i) out.push_back(static_cast<int>(i) == s.class_index ? 1.0 : 0.0);
    const double J = config.max_similarity();
    out.push_back(J > 0.0 ? std::clamp(s.similarity / J, 0.0, 1.0) : 0.0);
    return out;
}

inline std::size_t encoded_width(const ScenarioConfig& config) {
    return 2 * config.resource_types() + config.classes() + 1;
}

}  // namespace metaslicing
