// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace metaslicing;
using metaslicing::testing::loss_scenario;
using metaslicing::testing::random_loss_model;
using metaslicing::testing::ThresholdRule;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!pass) ++failures;
}

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

/// Pearson correlation of ranks; NaN when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : NAN;
}

constexpr std::size_t kSeeds = 5;
constexpr std::uint64_t kEvalArrivals = 100000;

/// Trains one agent for seed index k and evaluates it on held-out traffic.
MetricsReport learned(const ScenarioConfig& base, const TrainingConfig& training, std::size_t k) {
    ScenarioConfig s = base;
    s.seed = base.seed + k;
    TrainingConfig t = training;
    t.seed = training.seed + k;
    t.eval_interval = 0;
    auto net = std::make_shared<const DuelingNet>(train(s, t).network);
    ImsacPolicy policy(net, s);
    return evaluate_policy(evaluation_scenario(s), policy, kEvalArrivals);
}

MetricsReport fixed(const ScenarioConfig& base, Policy& policy, std::size_t k) {
    ScenarioConfig s = base;
    s.seed = base.seed + k;
    return evaluate_policy(evaluation_scenario(s), policy, kEvalArrivals);
}

struct SeedMeans {
    double reward = 0.0;
    double acceptance = 0.0;
    std::vector<double> classes;
};

SeedMeans average(const std::vector<MetricsReport>& runs) {
    SeedMeans m;
    m.classes.assign(runs.front().class_acceptance.size(), 0.0);
    for (const auto& r : runs) {
        m.reward += r.average_reward / static_cast<double>(runs.size());
        m.acceptance += r.acceptance_probability / static_cast<double>(runs.size());
        for (std::size_t i = 0; i < m.classes.size(); ++i)
            m.classes[i] += r.class_acceptance[i] / static_cast<double>(runs.size());
    }
    return m;
}

SeedMeans learned_over_seeds(const ScenarioConfig& s, const TrainingConfig& t) {
    std::vector<MetricsReport> runs;
    for (std::size_t k = 0; k < kSeeds; ++k) runs.push_back(learned(s, t, k));
    return average(runs);
}

SeedMeans greedy_over_seeds(const ScenarioConfig& s) {
    GreedyPolicy g;
    std::vector<MetricsReport> runs;
    for (std::size_t k = 0; k < kSeeds; ++k) runs.push_back(fixed(s, g, k));
    return average(runs);
}

ScenarioConfig reference(double capacity_functions, bool sharing) {
    ScenarioConfig c;
    c.set_capacity_in_functions(capacity_functions);
    c.sharing_enabled = sharing;
    return c;
}

void erlang_anchor() {
    Timer timer;
    const ScenarioConfig c = reference(30, false);
    GreedyPolicy g;
    const auto m = evaluate_policy(c, g, kEvalArrivals);
    const double expected = 1.0 - erlang_b(10, c.total_arrival_rate() / 2.0);
    const double err = std::abs(m.acceptance_probability - expected);
    report("erlang_anchor", err <= 0.02 && timer.seconds() < 60.0,
           "acceptance " + fmt(m.acceptance_probability) + " vs 1-B(10,62.5) " + fmt(expected) + ", |diff| " +
               fmt(err) + " <= 0.02, " + fmt(timer.seconds(), 3) + " s < 60 s");
}

void exact_optimality() {
    Timer timer;
    const LossModel model{{2.0}, {1.0}, {1.0}, 2};
    const double g_star = relative_value_iteration(UniformizedMdp(model)).gain_per_hour;
    TrainingConfig t;
    t.iterations = 50000;
    t.epsilon.decay_steps = 20000;
    t.eval_interval = 0;
    const ScenarioConfig s = scenario_for(model, 1);
    auto net = std::make_shared<const DuelingNet>(train(s, t).network);
    ImsacPolicy policy(net, s);
    const auto m = evaluate_policy(evaluation_scenario(s), policy, kEvalArrivals);
    const double rel = std::abs(m.average_reward - g_star) / g_star;
    report("exact_optimality", rel <= 0.05 && t.iterations <= 100000 && timer.seconds() < 600.0,
           "iMSAC " + fmt(m.average_reward) + " vs g* " + fmt(g_star) + ", relative error " + fmt(rel) +
               " <= 0.05, " + std::to_string(t.iterations) + " training steps, " + fmt(timer.seconds(), 3) + " s");
}

void starting_state_independence() {
    std::mt19937_64 rng(2024);
    double worst_analytic = 0.0, worst_simulated = 0.0;
    std::size_t instances = 0, starts = 0;
    for (int n = 0; n < 20; ++n) {
        const LossModel model = random_loss_model(rng, 64);
        const UniformizedMdp mdp(model);
        ThresholdRule rule;
        for (std::size_t i = 0; i < model.classes(); ++i)
            rule.thresholds.push_back(1 + static_cast<int>(rng() % static_cast<unsigned>(model.capacity)));
        const EmbeddedChain chain = embedded_chain(mdp, mdp.tabulate(rule));
        const double g = stationary_distribution(chain).average_reward;
        const Eigen::VectorXd by_start = average_reward_by_start(chain);
        worst_analytic = std::max(worst_analytic, (by_start.array() - g).abs().maxCoeff());
        ++instances;
        if (n >= 4) continue;
        // Continuous-time simulation from every feasible occupancy.
        for (const auto& x : mdp.occupancies()) {
            ScenarioConfig s = scenario_for(model, 11 + starts);
            s.initial_occupancy = x;
            const int cap = model.capacity;
            FunctionPolicy p("threshold", [&](const SystemState& st) {
                const int used = cap - static_cast<int>(std::lround(st.available[0]));
                return used < rule.thresholds[static_cast<std::size_t>(st.class_index)] ? Action::accept : Action::reject;
            });
            const auto m = evaluate_policy(s, p, 200000);
            worst_simulated = std::max(worst_simulated, std::abs(m.average_reward - g) / g);
            ++starts;
        }
    }
    report("starting_state_independence", worst_analytic <= 1e-9 && worst_simulated <= 0.02,
           "analytic max |g(start) - g| " + fmt(worst_analytic) + " <= 1e-9 over " + std::to_string(instances) +
               " instances; simulated max relative error " + fmt(worst_simulated) + " <= 0.02 over " +
               std::to_string(starts) + " starts");
}

void uniformization_equivalence() {
    const LossModel model{{2.0}, {1.0}, {1.0}, 2};
    const auto discrete = simulate_uniformized(model, [](const OccupancyVector&, int) { return true; }, kEvalArrivals, 5);
    GreedyPolicy g;
    const auto continuous = evaluate_policy(scenario_for(model, 5), g, kEvalArrivals);
    const double diff = std::abs(discrete.acceptance_probability - continuous.acceptance_probability);
    report("uniformization_equivalence", diff <= 0.01,
           "uniformized " + fmt(discrete.acceptance_probability) + " vs continuous " +
               fmt(continuous.acceptance_probability) + ", |diff| " + fmt(diff) + " <= 0.01");
}

void gradient_suite() {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_fd = 0.0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const DuelingNet net(Architecture{4, {8, 6}, Activation::tanh, k % 2 ? Aggregation::max : Aggregation::mean}, k);
        std::vector<double> s(4);
        for (double& v : s) v = u(rng);
        worst_fd = std::max(worst_fd, finite_diff_check(net, s, static_cast<int>(k % 2), 1e-5));
    }
    std::normal_distribution<double> n(0.0, 3.0);
    std::size_t argmax_violations = 0;
    for (int k = 0; k < 10000; ++k) {
        const double v = n(rng);
        const std::array<double, 2> y{n(rng), n(rng)};
        const auto qm = aggregate_q(v, y, Aggregation::mean), qx = aggregate_q(v, y, Aggregation::max);
        argmax_violations += greedy_on_q(qm) != greedy_on_q(qx);
    }
    // 1 + 0.9 * Q_target(s', argmax_a Q_online(s', a)) = 1 + 0.9 * 0.4
    const bool double_q = std::abs(double_q_target(1.0, {0.5, 1.0}, {0.2, 0.4}, 0.9) - 1.36) < 1e-15 &&
                          double_q_target(2.5, {0.5, 1.0}, {0.2, 0.4}, 0.0) == 2.5 &&
                          std::abs(double_q_target(0.0, {3.0, 1.0}, {0.2, 0.4}, 0.5) - 0.1) < 1e-15;
    report("gradient_suite", worst_fd <= 1e-4 && argmax_violations == 0 && double_q,
           "max finite-difference relative error " + fmt(worst_fd) + " <= 1e-4 over 100 nets; argmax mismatches " +
               std::to_string(argmax_violations) + "/10000; double-Q targets " + (double_q ? "exact" : "wrong"));
}

void mit_benefit() {
    const TrainingConfig t;
    const auto greedy = greedy_over_seeds(reference(30, false));
    const auto greedy_mit = greedy_over_seeds(reference(30, true));
    const auto imsac = learned_over_seeds(reference(30, false), t);
    const auto imsac_mit = learned_over_seeds(reference(30, true), t);
    const double rg = greedy_mit.reward / greedy.reward, ri = imsac_mit.reward / imsac.reward;
    report("mit_benefit", rg >= 1.5 && ri >= 1.5,
           "Greedy+MiT/Greedy " + fmt(greedy_mit.reward) + "/" + fmt(greedy.reward) + " = " + fmt(rg) +
               " >= 1.5; iMSAC+MiT/iMSAC " + fmt(imsac_mit.reward) + "/" + fmt(imsac.reward) + " = " + fmt(ri) +
               " >= 1.5");
}

void learned_superiority() {
    const TrainingConfig t;
    const auto greedy = greedy_over_seeds(reference(10, true));
    const auto imsac = learned_over_seeds(reference(10, true), t);
    const double ratio = imsac.reward / greedy.reward;
    report("learned_superiority", ratio >= 1.2 && imsac.acceptance > greedy.acceptance,
           "iMSAC+MiT/Greedy+MiT reward " + fmt(imsac.reward) + "/" + fmt(greedy.reward) + " = " + fmt(ratio) +
               " >= 1.2; acceptance " + fmt(imsac.acceptance) + " > " + fmt(greedy.acceptance));
}

void class_discrimination() {
    const TrainingConfig t;
    const auto low = learned_over_seeds(reference(10, false), t);

    TrainingConfig sweep_training;
    sweep_training.iterations = 100000;
    std::vector<double> r3, class3;
    for (double v = 1; v <= 10; ++v) {
        ScenarioConfig s = reference(10, true);
        s.arrival_rates = {60.0, 50.0, 40.0};
        s.class_rewards[2] = v;
        r3.push_back(v);
        class3.push_back(learned(s, sweep_training, 0).class_acceptance[2]);
    }
    const double rho = spearman(r3, class3);
    std::string curve;
    for (double a : class3) curve += (curve.empty() ? "" : " ") + fmt(a, 4);
    report("class_discrimination", low.classes[2] > low.classes[0] && rho > 0.8,
           "iMSAC at 10 functions class-3 " + fmt(low.classes[2]) + " > class-1 " + fmt(low.classes[0]) +
               "; r3 sweep class-3 acceptance [" + curve + "] Spearman " + fmt(rho) + " > 0.8");
}

void invariant_fuzzing() {
    std::uint64_t events = 0, audits = 0;
    std::string failure;
    try {
        for (int share_limit : {1, 3, 15}) {
            ScenarioConfig c = reference(20, true);
            c.share_limit = share_limit;
            c.config_bits = share_limit == 3 ? 2 : 1;
            c.seed = 100 + static_cast<std::uint64_t>(share_limit);
            Simulator sim(c);
            std::mt19937_64 rng(c.seed);
            const ResourceVector cap = c.capacity_vector(), zero(c.resource_types(), 0.0);
            std::uint64_t local = 0;
            while (local < 350000) {
                sim.step(rng() % 2 ? Action::accept : Action::reject);
                const auto& rm = sim.resources();
                const auto acc = sim.metrics().accepts();
                const std::uint64_t admitted = std::accumulate(acc.begin(), acc.end(), std::uint64_t{0});
                // arrivals + departures, departures = admitted - running
                local = sim.decisions() + admitted - rm.running_slices();
                if (!rm.available().covers(zero, ResourceManager::kTolerance) ||
                    !cap.covers(rm.available(), ResourceManager::kTolerance))
                    throw std::logic_error("available resources left [0, capacity]");
                if (sim.decisions() % 16 == 0) {
                    rm.audit();
                    ++audits;
                }
            }
            events += local;
        }
    } catch (const std::exception& e) {
        failure = e.what();
    }
    report("invariant_fuzzing", failure.empty() && events >= 1000000,
           std::to_string(events) + " admit/depart events >= 1e6, " + std::to_string(audits) + " full audits, " +
               (failure.empty() ? "no violations" : "violation: " + failure));
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void()>>> criteria{
        {"erlang_anchor", erlang_anchor},
        {"exact_optimality", exact_optimality},
        {"starting_state_independence", starting_state_independence},
        {"uniformization_equivalence", uniformization_equivalence},
        {"gradient_suite", gradient_suite},
        {"invariant_fuzzing", invariant_fuzzing},
        {"mit_benefit", mit_benefit},
        {"learned_superiority", learned_superiority},
        {"class_discrimination", class_discrimination},
    };
    for (const auto& [name, run] : criteria) {
        try {
            run();
        } catch (const std::exception& e) {
            report(name, false, std::string("error: ") + e.what());
        }
    }
    std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
    return failures ? 1 : 0;
}
