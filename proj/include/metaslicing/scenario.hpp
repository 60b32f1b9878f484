#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaslicing/errors.hpp"
#include "metaslicing/resource_vector.hpp"

namespace metaslicing {

namespace config_detail {

/// Typed field access with diagnostics naming the offending key.
class FieldReader {
public:
    FieldReader(const nlohmann::json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path(key), std::string("wrong type (") + e.what() + ")");
        }
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void reject_unknown() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    const nlohmann::json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<file>", std::string("'") + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace config_detail

/// Everything that defines one simulated system. Defaults reproduce the
/// reference setup: 3 classes at 60/40/25 requests per hour, 30 minute
/// sessions, class rewards 1/2/4, 9 function types, 3 functions per slice,
/// 40 units of each resource per function and 1200 units per type.
struct ScenarioConfig {
    std::vector<double> capacity{1200.0, 1200.0, 1200.0};
    std::size_t function_types = 9;
    std::size_t config_bits = 1;
    std::vector<double> arrival_rates{60.0, 40.0, 25.0};
    std::vector<double> departure_rates{2.0, 2.0, 2.0};
    std::vector<double> class_rewards{1.0, 2.0, 4.0};
    std::vector<double> resource_weights{1.0 / 1200.0, 1.0 / 1200.0, 1.0 / 1200.0};
    std::vector<double> function_resources{40.0, 40.0, 40.0};
    int share_limit = 15;
    std::size_t functions_per_slice = 3;
    std::uint64_t seed = 1;
    bool sharing_enabled = true;
    bool capacity_aware_similarity = true;
    bool state_uses_raw_demand = false;
    std::uint64_t horizon_arrivals = 100000;
    std::vector<int> initial_occupancy;

    std::size_t resource_types() const noexcept { return capacity.size(); }
    std::size_t classes() const noexcept { return arrival_rates.size(); }
    double total_arrival_rate() const {
        double s = 0.0;
        for (double l : arrival_rates) s += l;
        return s;
    }
    /// Largest similarity index a request can reach (J).
    double max_similarity() const {
        return static_cast<double>(functions_per_slice) / static_cast<double>(function_types);
    }
    /// How many function instances fit in the system.
    std::size_t capacity_in_functions() const {
        double best = INFINITY;
        for (std::size_t d = 0; d < capacity.size(); ++d)
            if (function_resources[d] > 0.0) best = std::min(best, std::floor(capacity[d] / function_resources[d] + 1e-9));
        return std::isinf(best) ? 0 : static_cast<std::size_t>(best);
    }
    /// Sets every resource type so that exactly `functions` functions fit.
    void set_capacity_in_functions(double functions) {
        for (std::size_t d = 0; d < capacity.size(); ++d) capacity[d] = functions * function_resources[d];
    }
    ResourceVector capacity_vector() const { return ResourceVector(capacity); }

    void validate() const {
        const std::size_t D = capacity.size(), I = arrival_rates.size();
        if (D == 0) throw ConfigError("capacity", "needs at least one resource type");
        for (double c : capacity)
            if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("capacity", "entries must be finite and >= 0");
        if (I == 0) throw ConfigError("arrival_rates", "needs at least one class");
        if (departure_rates.size() != I) throw ConfigError("departure_rates", "must have one entry per class");
        if (class_rewards.size() != I) throw ConfigError("class_rewards", "must have one entry per class");
        for (double l : arrival_rates)
            if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("arrival_rates", "rates must be > 0");
        for (double m : departure_rates)
            if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("departure_rates", "rates must be > 0");
        for (double r : class_rewards)
            if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("class_rewards", "rewards must be > 0");
        if (resource_weights.size() != D) throw ConfigError("resource_weights", "must have one entry per resource type");
        for (double w : resource_weights)
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("resource_weights", "weights must be >= 0");
        if (function_resources.size() != D)
            throw ConfigError("function_resources", "must have one entry per resource type");
        for (double a : function_resources)
            if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("function_resources", "amounts must be >= 0");
        if (function_types == 0) throw ConfigError("function_types", "must be >= 1");
        if (config_bits == 0) throw ConfigError("config_bits", "must be >= 1");
        if (functions_per_slice == 0 || functions_per_slice > function_types)
            throw ConfigError("functions_per_slice", "must be in [1, function_types]");
        if (share_limit < 1) throw ConfigError("share_limit", "must be >= 1");
        if (!initial_occupancy.empty()) {
            if (initial_occupancy.size() != I) throw ConfigError("initial_occupancy", "must have one entry per class");
            for (int x : initial_occupancy)
                if (x < 0) throw ConfigError("initial_occupancy", "counts must be >= 0");
        }
    }

    static ScenarioConfig from_json(const nlohmann::json& j, const std::string& prefix = "") {
        ScenarioConfig c;
        config_detail::FieldReader r(j, prefix);
        r.read("capacity", c.capacity);
        r.read("function_types", c.function_types);
        r.read("config_bits", c.config_bits);
        r.read("arrival_rates", c.arrival_rates);
        r.read("departure_rates", c.departure_rates);
        r.read("class_rewards", c.class_rewards);
        r.read("resource_weights", c.resource_weights);
        r.read("function_resources", c.function_resources);
        r.read("share_limit", c.share_limit);
        r.read("functions_per_slice", c.functions_per_slice);
        r.read("seed", c.seed);
        r.read("sharing_enabled", c.sharing_enabled);
        r.read("capacity_aware_similarity", c.capacity_aware_similarity);
        r.read("state_uses_raw_demand", c.state_uses_raw_demand);
        r.read("horizon_arrivals", c.horizon_arrivals);
        r.read("initial_occupancy", c.initial_occupancy);
        // Convenience: capacity given as a number of functions.
        if (const auto* cf = r.child("capacity_functions")) {
            if (!cf->is_number() || cf->get<double>() < 0.0)
                throw ConfigError(r.path("capacity_functions"), "must be a non-negative number");
            c.set_capacity_in_functions(cf->get<double>());
        }
        r.child("training");  // owned by the agent's config reader
        r.reject_unknown();
        try {
            c.validate();
        } catch (const ConfigError& e) {
            if (prefix.empty()) throw;
            throw ConfigError(prefix + "." + e.field(), e.detail());
        }
        return c;
    }

    nlohmann::json to_json() const {
        return {{"capacity", capacity},
                {"function_types", function_types},
                {"config_bits", config_bits},
                {"arrival_rates", arrival_rates},
                {"departure_rates", departure_rates},
                {"class_rewards", class_rewards},
                {"resource_weights", resource_weights},
                {"function_resources", function_resources},
                {"share_limit", share_limit},
                {"functions_per_slice", functions_per_slice},
                {"seed", seed},
                {"sharing_enabled", sharing_enabled},
                {"capacity_aware_similarity", capacity_aware_similarity},
                {"state_uses_raw_demand", state_uses_raw_demand},
                {"horizon_arrivals", horizon_arrivals},
                {"initial_occupancy", initial_occupancy}};
    }
};

}  // namespace metaslicing
