#pragma once

// Experiment plumbing shared by the CLI and the acceptance suite: policy
// construction, parameter sweeps with a checkpoint cache, and CSV output.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "metaslicing/errors.hpp"
#include "metaslicing/event_engine.hpp"
#include "metaslicing/imsac_agent.hpp"
#include "metaslicing/policies.hpp"
#include "metaslicing/reward_metrics.hpp"
#include "metaslicing/scenario.hpp"
#include "metaslicing/smdp_oracle.hpp"

namespace metaslicing {

inline constexpr const char* kMetricsSchema = "# metaslicing-metrics v1";
inline constexpr const char* kCurveSchema = "# metaslicing-curve v1";
inline constexpr const char* kOracleSchema = "# metaslicing-oracle v1";

// ---------------------------------------------------------------- policies

enum class PolicyKind { greedy, greedy_mit, imsac, imsac_mit, always_accept, always_reject };

inline std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::greedy: return "greedy";
        case PolicyKind::greedy_mit: return "greedy+mit";
        case PolicyKind::imsac: return "imsac";
        case PolicyKind::imsac_mit: return "imsac+mit";
        case PolicyKind::always_accept: return "always-accept";
        case PolicyKind::always_reject: return "always-reject";
    }
    return "?";
}

inline PolicyKind policy_from_string(const std::string& s) {
    for (auto k : {PolicyKind::greedy, PolicyKind::greedy_mit, PolicyKind::imsac, PolicyKind::imsac_mit,
                   PolicyKind::always_accept, PolicyKind::always_reject})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown policy '" + s +
                          "' (expected greedy, greedy+mit, imsac, imsac+mit, always-accept or always-reject)");
}

inline bool is_learned(PolicyKind k) { return k == PolicyKind::imsac || k == PolicyKind::imsac_mit; }

/// The scenario a policy runs in: the +mit variants force sharing on, the
/// plain variants force it off, the trivial policies keep the base setting.
inline ScenarioConfig scenario_for_policy(ScenarioConfig base, PolicyKind k) {
    if (k == PolicyKind::greedy || k == PolicyKind::imsac) base.sharing_enabled = false;
    if (k == PolicyKind::greedy_mit || k == PolicyKind::imsac_mit) base.sharing_enabled = true;
    return base;
}

inline std::unique_ptr<Policy> make_policy(PolicyKind k, const ScenarioConfig& scenario,
                                           std::shared_ptr<const DuelingNet> net = nullptr) {
    switch (k) {
        case PolicyKind::greedy:
        case PolicyKind::greedy_mit: return std::make_unique<GreedyPolicy>();
        case PolicyKind::always_accept: return std::make_unique<AlwaysAcceptPolicy>();
        case PolicyKind::always_reject: return std::make_unique<AlwaysRejectPolicy>();
        case PolicyKind::imsac:
        case PolicyKind::imsac_mit: return std::make_unique<ImsacPolicy>(std::move(net), scenario);
    }
    throw InvalidArgument("make_policy: unknown policy");
}

// ------------------------------------------------------------- checkpoints

/// FNV-1a, stable across platforms and runs.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const ScenarioConfig& scenario, const TrainingConfig& training) {
    const nlohmann::json key{{"scenario", scenario.to_json()}, {"training", training.to_json()}};
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(key.dump());
    return os.str();
}

inline void save_checkpoint(const DuelingNet& net, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write-then-rename so concurrent readers never see a partial file.
    const auto tmp = path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream os(tmp);
        if (!os) throw InvalidArgument("cannot write checkpoint '" + tmp + "'");
        net.save(os);
    }
    std::filesystem::rename(tmp, path);
}

inline DuelingNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw NotFound("checkpoint '" + path.string() + "' not found");
    return DuelingNet::load(is);
}

/// Loads the cached network for (scenario, training), training and caching
/// it first when allowed.
inline std::shared_ptr<const DuelingNet> cached_network(const ScenarioConfig& scenario, const TrainingConfig& training,
                                                        const std::filesystem::path& cache_dir, bool train_missing) {
    const auto path = cache_dir / (config_hash(scenario, training) + ".ckpt");
    if (std::filesystem::exists(path)) return std::make_shared<DuelingNet>(load_checkpoint(path));
    if (!train_missing)
        throw NotFound("missing checkpoint for a learned policy: '" + path.string() +
                       "' (enable train_missing or run train first)");
    auto net = std::make_shared<DuelingNet>(train(scenario, training).network);
    save_checkpoint(*net, path);
    return net;
}

// -------------------------------------------------------------------- CSV

/// Formats a finite value with round-trip precision; non-finite cells are
/// an error.
inline std::string csv_number(double v) {
    if (!std::isfinite(v)) throw InvalidArgument("CSV cell is not finite");
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

inline std::vector<double> metrics_csv_values(const MetricsReport& r) {
    std::vector<double> v{static_cast<double>(r.arrivals), r.total_time, r.average_reward, r.reward_per_request,
                          r.acceptance_probability};
    v.insert(v.end(), r.class_acceptance.begin(), r.class_acceptance.end());
    v.push_back(r.avg_running_slices);
    v.push_back(r.avg_instances);
    return v;
}

inline void write_csv_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
    os << '\n';
}

// ------------------------------------------------------------------ sweeps

enum class SweepParameter { capacity, n_limit, r3 };

inline std::string to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::capacity: return "capacity";
        case SweepParameter::n_limit: return "n_limit";
        case SweepParameter::r3: return "r3";
    }
    return "?";
}

inline SweepParameter sweep_parameter_from_string(const std::string& s) {
    if (s == "capacity") return SweepParameter::capacity;
    if (s == "n_limit") return SweepParameter::n_limit;
    if (s == "r3") return SweepParameter::r3;
    throw InvalidArgument("unknown sweep parameter '" + s + "' (expected capacity, n_limit or r3)");
}

/// Scenario at one sweep point. Capacity is counted in functions.
inline ScenarioConfig apply_sweep_point(ScenarioConfig base, SweepParameter p, double value) {
    switch (p) {
        case SweepParameter::capacity:
            if (!(value >= 0.0)) throw ConfigError("values", "capacity points must be >= 0");
            base.set_capacity_in_functions(value);
            break;
        case SweepParameter::n_limit:
            if (value < 1.0 || value != std::floor(value)) throw ConfigError("values", "n_limit points must be integers >= 1");
            base.share_limit = static_cast<int>(value);
            break;
        case SweepParameter::r3:
            if (base.class_rewards.size() < 3) throw ConfigError("scenario.class_rewards", "r3 sweep needs at least 3 classes");
            base.class_rewards[2] = value;
            break;
    }
    base.validate();
    return base;
}

struct SweepSpec {
    ScenarioConfig base;
    TrainingConfig training;
    SweepParameter parameter = SweepParameter::capacity;
    std::vector<double> values;
    std::size_t seeds = 5;
    std::vector<PolicyKind> policies{PolicyKind::greedy, PolicyKind::greedy_mit, PolicyKind::imsac,
                                     PolicyKind::imsac_mit};
    std::uint64_t eval_arrivals = 100000;
    bool train_missing = true;

    void validate() const {
        if (values.empty()) throw ConfigError("values", "must list at least one sweep point");
        if (seeds == 0) throw ConfigError("seeds", "must be >= 1");
        if (policies.empty()) throw ConfigError("policies", "must list at least one policy");
        if (eval_arrivals == 0) throw ConfigError("eval_arrivals", "must be >= 1");
        for (double v : values) apply_sweep_point(base, parameter, v);
    }

    static SweepSpec from_json(const nlohmann::json& j) {
        SweepSpec s;
        config_detail::FieldReader r(j, "");
        if (const auto* sc = r.child("scenario")) {
            s.base = ScenarioConfig::from_json(*sc, "scenario");
            if (sc->contains("training")) s.training = TrainingConfig::from_json(sc->at("training"), "scenario.training");
        }
        if (const auto* tr = r.child("training")) s.training = TrainingConfig::from_json(*tr, "training");
        std::string param = to_string(s.parameter);
        r.read("parameter", param);
        try {
            s.parameter = sweep_parameter_from_string(param);
        } catch (const InvalidArgument& e) {
            throw ConfigError("parameter", e.what());
        }
        r.read("values", s.values);
        r.read("seeds", s.seeds);
        std::vector<std::string> names;
        for (auto k : s.policies) names.push_back(to_string(k));
        r.read("policies", names);
        s.policies.clear();
        for (const auto& n : names) {
            try {
                s.policies.push_back(policy_from_string(n));
            } catch (const InvalidArgument& e) {
                throw ConfigError("policies", e.what());
            }
        }
        r.read("eval_arrivals", s.eval_arrivals);
        r.read("train_missing", s.train_missing);
        r.reject_unknown();
        s.validate();
        return s;
    }
};

struct SweepRow {
    double value = 0.0;
    PolicyKind policy = PolicyKind::greedy;
    std::size_t seed_index = 0;
    std::uint64_t seed = 0;
    MetricsReport metrics;
};

/// Seed of the k-th evaluation run at every sweep point.
inline std::uint64_t evaluation_seed(const ScenarioConfig& base, std::size_t k) {
    return base.seed + 1 + static_cast<std::uint64_t>(k);
}

/// Runs every (point, policy, seed) combination. Each (point, policy) pair
/// is one task; tasks run on `workers` threads (0 = hardware concurrency)
/// and rows come back in (point, policy, seed) order regardless.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::filesystem::path& cache_dir,
                                       unsigned workers = 0,
                                       const std::function<void(const std::string&)>& log = {}) {
    spec.validate();
    struct Task {
        std::size_t point;
        std::size_t policy;
    };
    std::vector<Task> tasks;
    for (std::size_t p = 0; p < spec.values.size(); ++p)
        for (std::size_t k = 0; k < spec.policies.size(); ++k) tasks.push_back({p, k});
    std::vector<std::vector<SweepRow>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto work = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            try {
                const double value = spec.values[tasks[t].point];
                const PolicyKind kind = spec.policies[tasks[t].policy];
                const ScenarioConfig scenario =
                    scenario_for_policy(apply_sweep_point(spec.base, spec.parameter, value), kind);
                std::shared_ptr<const DuelingNet> net;
                if (is_learned(kind)) net = cached_network(scenario, spec.training, cache_dir, spec.train_missing);
                for (std::size_t s = 0; s < spec.seeds; ++s) {
                    ScenarioConfig eval = scenario;
                    eval.seed = evaluation_seed(spec.base, s);
                    auto policy = make_policy(kind, eval, net);
                    results[t].push_back({value, kind, s, eval.seed, evaluate_policy(eval, *policy, spec.eval_arrivals)});
                }
                if (log) {
                    std::lock_guard lock(log_mutex);
                    log(to_string(spec.parameter) + "=" + csv_number(value) + " " + to_string(kind) + " done");
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = tasks.size();
                return;
            }
        }
    };
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(tasks.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<SweepRow> rows;
    for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
    return rows;
}

inline std::vector<std::string> sweep_csv_columns(std::size_t classes) {
    std::vector<std::string> cols{"parameter", "value", "policy", "seed"};
    for (auto& c : metrics_csv_columns(classes)) cols.push_back(c);
    return cols;
}

inline void write_sweep_csv(std::ostream& os, SweepParameter parameter, const std::vector<SweepRow>& rows,
                            std::size_t classes) {
    os << kMetricsSchema << '\n';
    write_csv_line(os, sweep_csv_columns(classes));
    for (const auto& row : rows) {
        std::vector<std::string> cells{to_string(parameter), csv_number(row.value), to_string(row.policy),
                                       std::to_string(row.seed)};
        for (double v : metrics_csv_values(row.metrics)) cells.push_back(csv_number(v));
        write_csv_line(os, cells);
    }
}

/// Mean and sample standard deviation of every metric across seeds, one
/// line per (point, policy).
inline void write_summary_csv(std::ostream& os, SweepParameter parameter, const std::vector<SweepRow>& rows,
                              std::size_t classes) {
    const auto metric_cols = metrics_csv_columns(classes);
    os << kMetricsSchema << '\n';
    std::vector<std::string> header{"parameter", "value", "policy", "seeds"};
    for (const auto& c : metric_cols) {
        header.push_back(c + "_mean");
        header.push_back(c + "_std");
    }
    write_csv_line(os, header);
    std::size_t begin = 0;
    while (begin < rows.size()) {
        std::size_t end = begin;
        while (end < rows.size() && rows[end].value == rows[begin].value && rows[end].policy == rows[begin].policy) ++end;
        const std::size_t n = end - begin;
        std::vector<std::string> cells{to_string(parameter), csv_number(rows[begin].value),
                                       to_string(rows[begin].policy), std::to_string(n)};
        std::vector<std::vector<double>> vals;
        for (std::size_t k = begin; k < end; ++k) vals.push_back(metrics_csv_values(rows[k].metrics));
        for (std::size_t c = 0; c < metric_cols.size(); ++c) {
            double mean = 0.0;
            for (const auto& v : vals) mean += v[c];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (const auto& v : vals) var += (v[c] - mean) * (v[c] - mean);
            const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
            cells.push_back(csv_number(mean));
            cells.push_back(csv_number(sd));
        }
        write_csv_line(os, cells);
        begin = end;
    }
}

// ---------------------------------------------------------- learning curve

inline void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
    os << kCurveSchema << '\n';
    write_csv_line(os, {"step", "eval_average_reward", "epsilon"});
    for (const auto& p : curve)
        write_csv_line(os, {std::to_string(p.step), csv_number(p.eval_average_reward), csv_number(p.epsilon)});
}

/// Snapshots a run of `iterations` steps produces.
inline std::size_t expected_curve_rows(std::uint64_t iterations, std::uint64_t eval_interval) {
    return eval_interval == 0 ? 0 : static_cast<std::size_t>(iterations / eval_interval) + 1;
}

// ------------------------------------------------------------------ oracle

struct OracleReport {
    std::size_t classes = 0;
    int capacity_slices = 0;
    double offered_load = 0.0;
    double erlang_b = 0.0;
    double greedy_acceptance = 0.0;
    double greedy_average_reward = 0.0;  // per hour
    double optimal_average_reward = 0.0;  // per hour
    double optimal_acceptance = 0.0;
    std::size_t chain_states = 0;
    int rvi_iterations = 0;
};

/// Exact results for an oracle-eligible scenario. Blocking under Greedy is
/// the Erlang-B value of the total offered load because every slice takes
/// one identical slot.
inline OracleReport oracle_report(const ScenarioConfig& config) {
    const LossModel model = loss_model_from(config);
    OracleReport out;
    out.classes = model.classes();
    out.capacity_slices = model.capacity;
    for (std::size_t i = 0; i < model.classes(); ++i)
        out.offered_load += model.arrival_rates[i] / model.departure_rates[i];
    out.erlang_b = erlang_b(model.capacity, out.offered_load);
    out.greedy_acceptance = 1.0 - out.erlang_b;
    for (std::size_t i = 0; i < model.classes(); ++i)
        out.greedy_average_reward += model.arrival_rates[i] * out.greedy_acceptance * model.admit_rewards[i];
    const UniformizedMdp mdp(model);
    out.chain_states = mdp.size();
    const RviResult rvi = relative_value_iteration(mdp);
    out.optimal_average_reward = rvi.gain_per_hour;
    out.rvi_iterations = rvi.iterations;
    // Acceptance of the optimal policy by simulating its decision table.
    std::map<std::pair<OccupancyVector, int>, bool> table;
    for (std::size_t s = 0; s < mdp.size(); ++s)
        if (mdp.can_accept(s)) table[{mdp.occupancy_of(s), mdp.arrival_class(s)}] = rvi.policy[s];
    const auto sim = simulate_uniformized(
        model, [&](const OccupancyVector& x, int i) { return table.at({x, i}); }, 200000, config.seed);
    out.optimal_acceptance = sim.acceptance_probability;
    return out;
}

inline void write_oracle_csv(std::ostream& os, const OracleReport& r) {
    os << kOracleSchema << '\n';
    write_csv_line(os, {"classes", "capacity_slices", "offered_load", "erlang_b", "greedy_acceptance",
                        "greedy_average_reward", "optimal_average_reward", "optimal_acceptance", "chain_states",
                        "rvi_iterations"});
    write_csv_line(os, {std::to_string(r.classes), std::to_string(r.capacity_slices), csv_number(r.offered_load),
                        csv_number(r.erlang_b), csv_number(r.greedy_acceptance), csv_number(r.greedy_average_reward),
                        csv_number(r.optimal_average_reward), csv_number(r.optimal_acceptance),
                        std::to_string(r.chain_states), std::to_string(r.rvi_iterations)});
}

}  // namespace metaslicing
