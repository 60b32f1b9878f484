// metaslicing_cli: train agents, evaluate policies, run sweeps and query the
// exact oracle. Every command writes CSV with a schema header comment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "metaslicing.hpp"

namespace fs = std::filesystem;
using namespace metaslicing;

namespace {

struct Options {
    std::string config;
    std::string sweep;
    std::string policy = "imsac+mit";
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::uint64_t> iterations;
    std::optional<std::uint64_t> arrivals;
    std::string checkpoint;
    std::string snapshot;
    unsigned workers = 0;
};

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot write '" + path.string() + "'");
    return os;
}

struct LoadedConfig {
    ScenarioConfig scenario;
    TrainingConfig training;
};

LoadedConfig load_config(const Options& o) {
    const auto j = config_detail::read_json_file(o.config);
    LoadedConfig c{ScenarioConfig::from_json(j), {}};
    if (j.is_object() && j.contains("training")) c.training = TrainingConfig::from_json(j.at("training"));
    if (o.seed) {
        c.scenario.seed = *o.seed;
        c.training.seed = *o.seed;
    }
    if (o.iterations) {
        c.training.iterations = *o.iterations;
        c.training.validate();
    }
    return c;
}

int cmd_train(const Options& o) {
    const PolicyKind kind = policy_from_string(o.policy);
    if (!is_learned(kind)) throw InvalidArgument("train needs a learned policy (imsac or imsac+mit)");
    auto c = load_config(o);
    const ScenarioConfig scenario = scenario_for_policy(c.scenario, kind);
    const fs::path out = o.out.empty() ? fs::path("train_out") : fs::path(o.out);
    const TrainingResult result = train(scenario, c.training, [](const CurvePoint& p) {
        std::cerr << "step " << p.step << " eval_average_reward " << p.eval_average_reward << " epsilon " << p.epsilon
                  << '\n';
    });
    save_checkpoint(result.network, out / "checkpoint.txt");
    auto curve = open_output(out / "learning_curve.csv");
    write_curve_csv(curve, result.curve);
    std::cout << "checkpoint " << (out / "checkpoint.txt").string() << '\n'
              << "curve " << (out / "learning_curve.csv").string() << '\n';
    return 0;
}

int cmd_evaluate(const Options& o) {
    const PolicyKind kind = policy_from_string(o.policy);
    auto c = load_config(o);
    const ScenarioConfig scenario = scenario_for_policy(c.scenario, kind);
    std::shared_ptr<const DuelingNet> net;
    if (is_learned(kind)) {
        if (o.checkpoint.empty()) throw NotFound("evaluating a learned policy needs --checkpoint");
        net = std::make_shared<DuelingNet>(load_checkpoint(o.checkpoint));
    }
    auto policy = make_policy(kind, scenario, net);
    const std::uint64_t horizon = o.arrivals.value_or(scenario.horizon_arrivals);
    Simulator sim(scenario);
    for (std::uint64_t n = 0; n < horizon; ++n) sim.step(*policy);
    const MetricsReport report = sim.metrics().finalize();

    auto write = [&](std::ostream& os) {
        os << kMetricsSchema << '\n';
        std::vector<std::string> header{"policy", "seed"};
        for (auto& col : metrics_csv_columns(scenario.classes())) header.push_back(col);
        write_csv_line(os, header);
        std::vector<std::string> cells{to_string(kind), std::to_string(scenario.seed)};
        for (double v : metrics_csv_values(report)) cells.push_back(csv_number(v));
        write_csv_line(os, cells);
    };
    if (o.out.empty()) {
        write(std::cout);
    } else {
        auto os = open_output(fs::path(o.out) / "evaluation.csv");
        write(os);
    }
    if (!o.snapshot.empty()) {
        auto os = open_output(o.snapshot);
        os << sim.resources().snapshot().dump(2) << '\n';
    }
    return 0;
}

int cmd_sweep(const Options& o) {
    auto spec = SweepSpec::from_json(config_detail::read_json_file(o.sweep));
    if (o.seed) spec.base.seed = *o.seed;
    if (o.iterations) {
        spec.training.iterations = *o.iterations;
        spec.training.validate();
    }
    if (o.arrivals) spec.eval_arrivals = *o.arrivals;
    const fs::path out = o.out.empty() ? fs::path("sweep_out") : fs::path(o.out);
    const auto rows = run_sweep(spec, out / "checkpoints", o.workers, [](const std::string& msg) { std::cerr << msg << '\n'; });
    auto all = open_output(out / "sweep.csv");
    write_sweep_csv(all, spec.parameter, rows, spec.base.classes());
    auto summary = open_output(out / "summary.csv");
    write_summary_csv(summary, spec.parameter, rows, spec.base.classes());
    std::cout << "rows " << rows.size() << '\n'
              << "sweep " << (out / "sweep.csv").string() << '\n'
              << "summary " << (out / "summary.csv").string() << '\n';
    return 0;
}

int cmd_oracle(const Options& o) {
    auto c = load_config(o);
    const OracleReport report = oracle_report(c.scenario);
    if (o.out.empty()) {
        write_oracle_csv(std::cout, report);
    } else {
        auto os = open_output(fs::path(o.out) / "oracle.csv");
        write_oracle_csv(os, report);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MetaSlicing admission control experiments"};
    app.require_subcommand(1);
    Options o;

    auto* train = app.add_subcommand("train", "Train an iMSAC agent; writes checkpoint.txt and learning_curve.csv");
    train->add_option("--config", o.config, "Scenario JSON (optional \"training\" object)")->required()->check(CLI::ExistingFile);
    train->add_option("--policy", o.policy, "imsac or imsac+mit");
    train->add_option("--seed", o.seed, "Overrides scenario and training seeds");
    train->add_option("--out", o.out, "Output directory");
    train->add_option("--iterations", o.iterations, "Training iterations");

    auto* eval = app.add_subcommand("evaluate", "Evaluate one policy; writes one metrics row");
    eval->add_option("--config", o.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--policy", o.policy, "greedy, greedy+mit, imsac, imsac+mit, always-accept, always-reject")->required();
    eval->add_option("--checkpoint", o.checkpoint, "Network checkpoint for learned policies");
    eval->add_option("--seed", o.seed, "Overrides the scenario seed");
    eval->add_option("--arrivals", o.arrivals, "Decision epochs to simulate (default horizon_arrivals)");
    eval->add_option("--out", o.out, "Output directory (default: stdout)");
    eval->add_option("--snapshot", o.snapshot, "Write the final instance/slice state as JSON");

    auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep; writes sweep.csv and summary.csv");
    sweep->add_option("--sweep", o.sweep, "Sweep JSON")->required()->check(CLI::ExistingFile);
    sweep->add_option("--seed", o.seed, "Overrides the base scenario seed");
    sweep->add_option("--iterations", o.iterations, "Training iterations per learned checkpoint");
    sweep->add_option("--arrivals", o.arrivals, "Evaluation decision epochs per run");
    sweep->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
    sweep->add_option("--out", o.out, "Output directory");

    auto* oracle = app.add_subcommand("oracle", "Exact results for a small scenario without sharing");
    oracle->add_option("--config", o.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    oracle->add_option("--seed", o.seed, "Seed for the simulated acceptance of the optimal policy");
    oracle->add_option("--out", o.out, "Output directory (default: stdout)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (train->parsed()) return cmd_train(o);
        if (eval->parsed()) return cmd_evaluate(o);
        if (sweep->parsed()) return cmd_sweep(o);
        if (oracle->parsed()) return cmd_oracle(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: config field '" << e.field() << "': " << e.detail() << '\n';
        return 2;
    } catch (const NotFound& e) {
        std::cerr << "error: not found: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
