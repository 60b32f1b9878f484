#pragma once

// Exact analysis of small loss-system instances (sharing disabled, every
// slice occupying the same footprint): uniformization, the embedded
// decision chain, relative value iteration, stationary analysis and the
// Erlang-B formula. Used as ground truth for the simulator and the agent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <stack>
#include <vector>

#include <Eigen/Dense>

#include "metaslicing/errors.hpp"
#include "metaslicing/scenario.hpp"

namespace metaslicing {

using OccupancyVector = std::vector<int>;

/// Homogeneous multi-class loss system: every running slice takes one of
/// `capacity` identical slots.
struct LossModel {
    std::vector<double> arrival_rates;
    std::vector<double> departure_rates;
    std::vector<double> admit_rewards;  // reward collected when a class-i request is admitted
    int capacity = 0;

    std::size_t classes() const noexcept { return arrival_rates.size(); }

    void validate() const {
        const auto I = arrival_rates.size();
        if (I == 0 || departure_rates.size() != I || admit_rewards.size() != I)
            throw InvalidArgument("loss model needs matching per-class rates and rewards");
        for (double l : arrival_rates)
            if (!(l > 0.0)) throw InvalidArgument("loss model arrival rates must be > 0");
        for (double m : departure_rates)
            if (!(m > 0.0)) throw InvalidArgument("loss model departure rates must be > 0");
        if (capacity < 0) throw InvalidArgument("loss model capacity must be >= 0");
    }
};

/// Upper bound on chain states the oracle will build.
inline constexpr std::size_t kMaxOracleStates = 200000;

/// Number of occupancy vectors with sum <= capacity: C(capacity + I, I).
inline double occupancy_count(std::size_t classes, int capacity) {
    double n = 1.0;
    for (std::size_t k = 1; k <= classes; ++k) n = n * (capacity + static_cast<double>(k)) / static_cast<double>(k);
    return n;
}

inline double estimated_chain_states(std::size_t classes, int capacity) {
    return occupancy_count(classes, capacity) * static_cast<double>(2 * classes + 1);
}

/// Exact model of a scenario, if it is one the oracle can solve.
inline LossModel loss_model_from(const ScenarioConfig& config) {
    config.validate();
    if (config.sharing_enabled) throw InvalidArgument("oracle requires sharing_enabled = false");
    const std::size_t D = config.resource_types();
    std::vector<double> footprint(D);
    double slots = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < D; ++d) {
        footprint[d] = config.function_resources[d] * static_cast<double>(config.functions_per_slice);
        if (footprint[d] > 0.0) slots = std::min(slots, std::floor(config.capacity[d] / footprint[d] + 1e-9));
    }
    if (std::isinf(slots)) throw InvalidArgument("oracle requires a non-zero slice footprint");
    LossModel m;
    m.arrival_rates = config.arrival_rates;
    m.departure_rates = config.departure_rates;
    m.capacity = static_cast<int>(slots);
    double penalty = 0.0;
    for (std::size_t d = 0; d < D; ++d) penalty += config.resource_weights[d] * footprint[d];
    for (double r : config.class_rewards) m.admit_rewards.push_back(r - penalty);
    const double states = estimated_chain_states(m.classes(), m.capacity);
    if (states > static_cast<double>(kMaxOracleStates))
        throw InvalidArgument("scenario too large for the exact oracle: about " + std::to_string(static_cast<long long>(states)) +
                              " chain states (limit " + std::to_string(kMaxOracleStates) + ")");
    return m;
}

/// Simulator configuration equivalent to a loss model: one resource type,
/// one function per slice, `capacity` units.
inline ScenarioConfig scenario_for(const LossModel& m, std::uint64_t seed = 1) {
    m.validate();
    ScenarioConfig c;
    c.capacity = {static_cast<double>(m.capacity)};
    c.function_types = 1;
    c.config_bits = 1;
    c.functions_per_slice = 1;
    c.function_resources = {1.0};
    c.resource_weights = {0.0};
    c.arrival_rates = m.arrival_rates;
    c.departure_rates = m.departure_rates;
    c.class_rewards = m.admit_rewards;
    c.sharing_enabled = false;
    c.share_limit = 1;
    c.seed = seed;
    return c;
}

/// All occupancy vectors with total <= capacity, in lexicographic order.
inline std::vector<OccupancyVector> feasible_occupancies(std::size_t classes, int capacity) {
    std::vector<OccupancyVector> out;
    OccupancyVector x(classes, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
        if (i == classes) {
            out.push_back(x);
            return;
        }
        for (int n = 0; n <= left; ++n) {
            x[i] = n;
            rec(i + 1, left - n);
        }
        x[i] = 0;
    };
    rec(0, capacity);
    return out;
}

struct Uniformization {
    double z = 0.0;
    std::vector<double> z_x;  // per occupancy, same order as the input set
};

/// z_x = sum_i (lambda_i + x_i mu_i) and z = max_x z_x.
inline Uniformization uniformization_rates(std::span<const double> lambda, std::span<const double> mu,
                                           std::span<const OccupancyVector> occupancies) {
    if (occupancies.empty()) throw InvalidArgument("uniformization needs a non-empty occupancy set");
    if (lambda.size() != mu.size()) throw InvalidArgument("uniformization: rate vectors differ in length");
    Uniformization u;
    for (const auto& x : occupancies) {
        if (x.size() != lambda.size()) throw InvalidArgument("uniformization: occupancy length mismatch");
        double zx = 0.0;
        for (std::size_t i = 0; i < lambda.size(); ++i) zx += lambda[i] + x[i] * mu[i];
        u.z_x.push_back(zx);
        u.z = std::max(u.z, zx);
    }
    return u;
}

struct EventDistribution {
    std::vector<double> arrival;    // lambda_i / z
    std::vector<double> departure;  // x_i mu_i / z
    double trivial = 0.0;           // 1 - z_x / z
};

inline EventDistribution event_probabilities(const OccupancyVector& x, std::span<const double> lambda,
                                             std::span<const double> mu, double z) {
    if (!(z > 0.0)) throw InvalidArgument("event_probabilities: z must be > 0");
    EventDistribution e;
    double zx = 0.0;
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        e.arrival.push_back(lambda[i] / z);
        e.departure.push_back(x[i] * mu[i] / z);
        zx += lambda[i] + x[i] * mu[i];
    }
    e.trivial = 1.0 - zx / z;
    if (e.trivial < -1e-12) throw InvalidArgument("event_probabilities: z is below z_x");
    e.trivial = std::max(0.0, e.trivial);
    return e;
}

/// Uniformized admission-control MDP over (occupancy, pending event).
/// Event codes: i in [0,I) arrival of class i, I+i departure of class i,
/// 2I trivial.
class UniformizedMdp {
public:
    struct State {
        std::size_t occupancy = 0;  // index into occupancies()
        int event = 0;
    };
    struct Branch {
        std::size_t next;
        double probability;
    };

    explicit UniformizedMdp(LossModel model) : model_(std::move(model)) {
        model_.validate();
        const std::size_t I = model_.classes();
        occupancies_ = feasible_occupancies(I, model_.capacity);
        for (std::size_t k = 0; k < occupancies_.size(); ++k) occupancy_index_[occupancies_[k]] = k;
        uniform_ = uniformization_rates(model_.arrival_rates, model_.departure_rates, occupancies_);

        state_index_.assign(occupancies_.size(), std::vector<long>(2 * I + 1, -1));
        event_probs_.resize(occupancies_.size());
        for (std::size_t k = 0; k < occupancies_.size(); ++k) {
            const auto e = event_probabilities(occupancies_[k], model_.arrival_rates, model_.departure_rates, uniform_.z);
            auto& probs = event_probs_[k];
            probs.assign(2 * I + 1, 0.0);
            for (std::size_t i = 0; i < I; ++i) {
                probs[i] = e.arrival[i];
                probs[I + i] = e.departure[i];
            }
            probs[2 * I] = e.trivial;
            for (std::size_t ev = 0; ev < probs.size(); ++ev) {
                if (probs[ev] <= 0.0) continue;
                state_index_[k][ev] = static_cast<long>(states_.size());
                states_.push_back({k, static_cast<int>(ev)});
            }
        }
    }

    const LossModel& model() const noexcept { return model_; }
    std::size_t size() const noexcept { return states_.size(); }
    const std::vector<State>& states() const noexcept { return states_; }
    const std::vector<OccupancyVector>& occupancies() const noexcept { return occupancies_; }
    double z() const noexcept { return uniform_.z; }
    const Uniformization& uniformization() const noexcept { return uniform_; }
    std::size_t classes() const noexcept { return model_.classes(); }

    bool is_arrival(std::size_t s) const { return states_[s].event < static_cast<int>(classes()); }
    int arrival_class(std::size_t s) const { return states_[s].event; }
    const OccupancyVector& occupancy_of(std::size_t s) const { return occupancies_[states_[s].occupancy]; }

    /// True where admitting is possible, i.e. where a real choice exists.
    bool can_accept(std::size_t s) const {
        if (!is_arrival(s)) return false;
        const auto& x = occupancy_of(s);
        return std::accumulate(x.begin(), x.end(), 0) < model_.capacity;
    }

    double reward(std::size_t s, bool accept) const {
        return accept && can_accept(s) ? model_.admit_rewards[static_cast<std::size_t>(arrival_class(s))] : 0.0;
    }

    /// Next-state distribution after taking the action at s.
    std::vector<Branch> successors(std::size_t s, bool accept) const {
        const auto& st = states_[s];
        OccupancyVector x = occupancies_[st.occupancy];
        const int I = static_cast<int>(classes());
        if (st.event < I) {
            if (accept && can_accept(s)) ++x[static_cast<std::size_t>(st.event)];
        } else if (st.event < 2 * I) {
            --x[static_cast<std::size_t>(st.event - I)];
        }
        const std::size_t k = occupancy_index_.at(x);
        std::vector<Branch> out;
        for (std::size_t ev = 0; ev < event_probs_[k].size(); ++ev)
            if (state_index_[k][ev] >= 0) out.push_back({static_cast<std::size_t>(state_index_[k][ev]), event_probs_[k][ev]});
        return out;
    }

    /// Decision table for an occupancy/class rule (true = admit).
    std::vector<bool> tabulate(const std::function<bool(const OccupancyVector&, int)>& rule) const {
        std::vector<bool> table(size(), false);
        for (std::size_t s = 0; s < size(); ++s)
            if (can_accept(s)) table[s] = rule(occupancy_of(s), arrival_class(s));
        return table;
    }

    std::vector<bool> greedy_table() const {
        return tabulate([](const OccupancyVector&, int) { return true; });
    }

    /// Decision states, in state order.
    std::vector<std::size_t> decision_states() const {
        std::vector<std::size_t> out;
        for (std::size_t s = 0; s < size(); ++s)
            if (can_accept(s)) out.push_back(s);
        return out;
    }

private:
    LossModel model_;
    std::vector<OccupancyVector> occupancies_;
    std::map<OccupancyVector, std::size_t> occupancy_index_;
    Uniformization uniform_;
    std::vector<std::vector<double>> event_probs_;
    std::vector<std::vector<long>> state_index_;
    std::vector<State> states_;
};

/// Markov chain induced by a fixed decision table.
struct EmbeddedChain {
    Eigen::MatrixXd transition;  // row-stochastic
    Eigen::VectorXd reward;      // expected immediate reward per state
    Eigen::VectorXd sojourn;     // expected hours per step (1/z in the uniformized chain)
};

inline EmbeddedChain embedded_chain(const UniformizedMdp& mdp, const std::vector<bool>& decisions) {
    if (decisions.size() != mdp.size()) throw InvalidArgument("decision table size does not match the chain");
    const auto n = static_cast<Eigen::Index>(mdp.size());
    EmbeddedChain c{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, 1.0 / mdp.z())};
    for (std::size_t s = 0; s < mdp.size(); ++s) {
        const bool a = decisions[s];
        c.reward(static_cast<Eigen::Index>(s)) = mdp.reward(s, a);
        for (const auto& b : mdp.successors(s, a))
            c.transition(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b.next)) += b.probability;
    }
    for (Eigen::Index s = 0; s < n; ++s)
        if (std::abs(c.transition.row(s).sum() - 1.0) > 1e-12) throw std::logic_error("embedded chain row does not sum to 1");
    return c;
}

/// Number of closed communicating classes (recurrent classes) of the chain.
inline std::size_t recurrent_class_count(const Eigen::MatrixXd& P) {
    const auto n = static_cast<std::size_t>(P.rows());
    // Tarjan's SCC, iterative.
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    int counter = 0, comps = 0;
    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        std::vector<std::pair<std::size_t, std::size_t>> work{{root, 0}};
        while (!work.empty()) {
            auto& [v, next] = work.back();
            if (next == 0 && index[v] < 0) {
                index[v] = low[v] = counter++;
                stack.push_back(v);
                on_stack[v] = true;
            }
            bool descended = false;
            while (next < n) {
                const std::size_t w = next++;
                if (P(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) <= 0.0) continue;
                if (index[w] < 0) {
                    work.emplace_back(w, 0);
                    descended = true;
                    break;
                }
                if (on_stack[w]) low[v] = std::min(low[v], index[w]);
            }
            if (descended) continue;
            if (low[v] == index[v]) {
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp[w] = comps;
                } while (w != v);
                ++comps;
            }
            const std::size_t done = v;
            work.pop_back();
            if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[done]);
        }
    }
    std::vector<bool> leaves(static_cast<std::size_t>(comps), false);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t w = 0; w < n; ++w)
            if (P(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) > 0.0 && comp[v] != comp[w])
                leaves[static_cast<std::size_t>(comp[v])] = true;
    return static_cast<std::size_t>(std::count(leaves.begin(), leaves.end(), false));
}

struct StationaryResult {
    Eigen::VectorXd distribution;
    double average_reward = 0.0;  // per hour: sum pi r / sum pi y
};

/// Solves pi P = pi, sum pi = 1. Transient states are allowed and get zero
/// mass; more than one recurrent class makes the long-run average depend on
/// the start state and is rejected.
inline StationaryResult stationary_distribution(const EmbeddedChain& chain) {
    const auto& P = chain.transition;
    const Eigen::Index n = P.rows();
    if (n == 0) throw InvalidArgument("stationary_distribution: empty chain");
    if (recurrent_class_count(P) != 1)
        throw InvalidArgument("stationary_distribution: chain has several recurrent classes");
    Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    StationaryResult out;
    out.distribution = A.fullPivLu().solve(rhs);
    out.average_reward = out.distribution.dot(chain.reward) / out.distribution.dot(chain.sojourn);
    return out;
}

/// Limiting (Cesaro) matrix lim (1/N) sum_{n<N} P^n, obtained as the limit
/// of powers of the lazy chain (I+P)/2, which shares P's invariant measures
/// and is aperiodic. Squared until rows stop changing.
inline Eigen::MatrixXd cesaro_limit(const Eigen::MatrixXd& P, int max_squarings = 200) {
    const Eigen::Index n = P.rows();
    Eigen::MatrixXd M = 0.5 * (Eigen::MatrixXd::Identity(n, n) + P);
    for (int k = 0; k < max_squarings; ++k) {
        Eigen::MatrixXd next = M * M;
        for (Eigen::Index r = 0; r < n; ++r) next.row(r) /= next.row(r).sum();
        const double change = (next - M).cwiseAbs().maxCoeff();
        M = std::move(next);
        if (change < 1e-15 && k > 8) return M;
    }
    throw ConvergenceError("cesaro_limit: powers did not settle");
}

/// Long-run average reward per hour from each start state (reward-to-time ratio
/// with the limiting matrix).
inline Eigen::VectorXd average_reward_by_start(const EmbeddedChain& chain) {
    const Eigen::MatrixXd limit = cesaro_limit(chain.transition);
    return (limit * chain.reward).cwiseQuotient(limit * chain.sojourn);
}

struct RviResult {
    double gain_per_hour = 0.0;
    double gain_per_step = 0.0;
    std::vector<bool> policy;  // admit decisions per state
    Eigen::VectorXd bias;
    int iterations = 0;
};

/// Relative value iteration on the uniformized MDP with the aperiodicity
/// transform h <- (1-t) h + t T h, t = 1/2. Stops when span(Th - h) < tol.
inline RviResult relative_value_iteration(const UniformizedMdp& mdp, double tol = 1e-9, int max_iterations = 2000000) {
    if (!(tol > 0.0)) throw InvalidArgument("relative_value_iteration: tol must be > 0");
    constexpr double mix = 0.5;
    const std::size_t n = mdp.size();
    struct Choice {
        double reward;
        std::vector<UniformizedMdp::Branch> next;
    };
    std::vector<std::vector<Choice>> choices(n);
    for (std::size_t s = 0; s < n; ++s) {
        choices[s].push_back({mdp.reward(s, false), mdp.successors(s, false)});
        if (mdp.can_accept(s)) choices[s].push_back({mdp.reward(s, true), mdp.successors(s, true)});
    }
    Eigen::VectorXd h = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd th(h.size());
    std::vector<bool> policy(n, false);
    RviResult out;
    for (int it = 1; it <= max_iterations; ++it) {
        for (std::size_t s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < choices[s].size(); ++a) {
                double v = choices[s][a].reward;
                for (const auto& b : choices[s][a].next) v += b.probability * h(static_cast<Eigen::Index>(b.next));
                // Prefer reject on exact ties.
                if (v > best + 1e-13) {
                    best = v;
                    policy[s] = a == 1;
                }
            }
            th(static_cast<Eigen::Index>(s)) = (1.0 - mix) * h(static_cast<Eigen::Index>(s)) + mix * best;
        }
        const Eigen::VectorXd diff = th - h;
        const double hi = diff.maxCoeff(), lo = diff.minCoeff();
        h = th.array() - th(0);
        if (hi - lo < tol) {
            out.gain_per_step = 0.5 * (hi + lo) / mix;
            out.gain_per_hour = out.gain_per_step * mdp.z();
            out.policy = policy;
            out.bias = h;
            out.iterations = it;
            return out;
        }
    }
    throw ConvergenceError("relative_value_iteration: no convergence within the iteration cap");
}

struct EnumerationResult {
    double best_average_reward = -std::numeric_limits<double>::infinity();
    std::vector<bool> best_policy;
    std::size_t policies = 0;
};

/// Brute force over every deterministic stationary decision table.
inline EnumerationResult enumerate_policies(const UniformizedMdp& mdp, std::size_t max_decisions = 16) {
    const auto decision = mdp.decision_states();
    if (decision.size() > max_decisions) throw InvalidArgument("enumerate_policies: too many decision states");
    EnumerationResult out;
    const std::uint64_t total = std::uint64_t{1} << decision.size();
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        std::vector<bool> table(mdp.size(), false);
        for (std::size_t k = 0; k < decision.size(); ++k) table[decision[k]] = (mask >> k) & 1u;
        const double g = stationary_distribution(embedded_chain(mdp, table)).average_reward;
        ++out.policies;
        if (g > out.best_average_reward + 1e-12) {
            out.best_average_reward = g;
            out.best_policy = table;
        }
    }
    return out;
}

/// Blocking probability of an M/M/c/c system with offered load a Erlangs.
inline double erlang_b(int servers, double load) {
    if (servers < 0) throw InvalidArgument("erlang_b: servers must be >= 0");
    if (!(load > 0.0)) throw InvalidArgument("erlang_b: offered load must be > 0");
    double b = 1.0;
    for (int k = 1; k <= servers; ++k) b = load * b / (k + load * b);
    return b;
}

struct UniformizedSimulation {
    double acceptance_probability = 0.0;
    double average_reward = 0.0;  // per hour
    std::uint64_t arrivals = 0;
};

/// Discrete-time simulation of the uniformized chain: every step draws an
/// event (arrival, departure or trivial) and lasts 1/z hours on average.
inline UniformizedSimulation simulate_uniformized(const LossModel& model,
                                                  const std::function<bool(const OccupancyVector&, int)>& rule,
                                                  std::uint64_t arrivals, std::uint64_t seed,
                                                  OccupancyVector start = {}) {
    model.validate();
    const std::size_t I = model.classes();
    const auto occ = feasible_occupancies(I, model.capacity);
    const double z = uniformization_rates(model.arrival_rates, model.departure_rates, occ).z;
    OccupancyVector x = start.empty() ? OccupancyVector(I, 0) : std::move(start);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    UniformizedSimulation out;
    std::uint64_t accepted = 0, steps = 0;
    double reward = 0.0;
    while (out.arrivals < arrivals) {
        ++steps;
        double pick = u(rng) * z;
        int total = std::accumulate(x.begin(), x.end(), 0);
        bool done = false;
        for (std::size_t i = 0; i < I && !done; ++i) {
            if (pick < model.arrival_rates[i]) {
                ++out.arrivals;
                if (total < model.capacity && rule(x, static_cast<int>(i))) {
                    ++x[i];
                    ++accepted;
                    reward += model.admit_rewards[i];
                }
                done = true;
            } else {
                pick -= model.arrival_rates[i];
            }
        }
        for (std::size_t i = 0; i < I && !done; ++i) {
            const double rate = x[i] * model.departure_rates[i];
            if (pick < rate) {
                --x[i];
                done = true;
            } else {
                pick -= rate;
            }
        }
    }
    out.acceptance_probability = static_cast<double>(accepted) / static_cast<double>(out.arrivals);
    out.average_reward = reward / (static_cast<double>(steps) / z);
    return out;
}

}  // namespace metaslicing
