#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metaslicing/errors.hpp"
#include "metaslicing/resource_vector.hpp"

namespace metaslicing {

/// Reward for one decision: r_i - sum_d w_d * n_o^d when the request is
/// admitted, 0 otherwise.
inline double immediate_reward(int class_index, std::span<const double> class_rewards, const ResourceVector& occupied,
                               bool accepted, std::span<const double> weights) {
    if (class_index < 0 || static_cast<std::size_t>(class_index) >= class_rewards.size())
        throw InvalidArgument("immediate_reward: unknown class");
    if (!accepted) return 0.0;
    return class_rewards[static_cast<std::size_t>(class_index)] - occupied.dot(weights);
}

struct MetricsReport {
    double average_reward = 0.0;      // per sim-hour
    double reward_per_request = 0.0;  // per decision epoch
    double acceptance_probability = 0.0;
    std::vector<double> class_acceptance;
    double avg_running_slices = 0.0;
    double avg_instances = 0.0;
    double total_time = 0.0;
    std::uint64_t arrivals = 0;
    std::uint64_t accepts = 0;
};

/// Running sums for one or more episodes. Time-weighted integrals are
/// advanced piecewise by the simulator at exact event timestamps.
class MetricsAccumulator {
public:
    MetricsAccumulator() = default;
    explicit MetricsAccumulator(std::size_t classes) : arrivals_(classes, 0), accepts_(classes, 0) {}

    void record_decision(int class_index, bool accepted, double reward) {
        const auto i = static_cast<std::size_t>(class_index);
        if (i >= arrivals_.size()) throw InvalidArgument("record_decision: unknown class");
        ++arrivals_[i];
        if (accepted) ++accepts_[i];
        total_reward_ += reward;
    }

    /// `duration` hours elapsed with the given system population.
    void advance(double duration, double running_slices, double instances) {
        if (duration < 0.0) throw InvalidArgument("advance: negative duration");
        total_time_ += duration;
        running_integral_ += duration * running_slices;
        instance_integral_ += duration * instances;
    }

    void merge(const MetricsAccumulator& other) {
        if (other.arrivals_.size() != arrivals_.size()) throw InvalidArgument("merge: class counts differ");
        for (std::size_t i = 0; i < arrivals_.size(); ++i) {
            arrivals_[i] += other.arrivals_[i];
            accepts_[i] += other.accepts_[i];
        }
        total_reward_ += other.total_reward_;
        total_time_ += other.total_time_;
        running_integral_ += other.running_integral_;
        instance_integral_ += other.instance_integral_;
    }

    double total_reward() const noexcept { return total_reward_; }
    double total_time() const noexcept { return total_time_; }
    std::span<const std::uint64_t> arrivals() const noexcept { return arrivals_; }
    std::span<const std::uint64_t> accepts() const noexcept { return accepts_; }

    MetricsReport finalize() const {
        if (!(total_time_ > 0.0)) throw InvalidArgument("finalize: no simulated time accumulated");
        MetricsReport r;
        r.total_time = total_time_;
        r.average_reward = total_reward_ / total_time_;
        r.class_acceptance.resize(arrivals_.size(), 0.0);
        for (std::size_t i = 0; i < arrivals_.size(); ++i) {
            r.arrivals += arrivals_[i];
            r.accepts += accepts_[i];
            if (arrivals_[i] > 0)
                r.class_acceptance[i] = static_cast<double>(accepts_[i]) / static_cast<double>(arrivals_[i]);
        }
        if (r.arrivals > 0) {
            r.acceptance_probability = static_cast<double>(r.accepts) / static_cast<double>(r.arrivals);
            r.reward_per_request = total_reward_ / static_cast<double>(r.arrivals);
        }
        r.avg_running_slices = running_integral_ / total_time_;
        r.avg_instances = instance_integral_ / total_time_;
        return r;
    }

private:
    std::vector<std::uint64_t> arrivals_;
    std::vector<std::uint64_t> accepts_;
    double total_reward_ = 0.0;
    double total_time_ = 0.0;
    double running_integral_ = 0.0;
    double instance_integral_ = 0.0;
};

/// Metric columns of the results CSV, in order.
inline std::vector<std::string> metrics_csv_columns(std::size_t classes) {
    std::vector<std::string> cols{"arrivals", "total_time", "average_reward", "reward_per_request", "acceptance"};
    for (std::size_t i = 0; i < classes; ++i) cols.push_back("acceptance_class_" + std::to_string(i + 1));
    cols.emplace_back("avg_running_slices");
    cols.emplace_back("avg_instances");
    return cols;
}

}  // namespace metaslicing
