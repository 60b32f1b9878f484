#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "metaslicing/errors.hpp"
#include "metaslicing/resource_vector.hpp"
#include "metaslicing/similarity.hpp"

namespace metaslicing {

/// A requested MetaSlice: its class (0-based) and, per function slot, the
/// configuration and the resources a dedicated instance of that function
/// needs. Trivial slots carry no demand.
struct MetaSliceSpec {
    int class_index = 0;
    FunctionSet functions;
    std::vector<ResourceVector> per_function_resources;

    /// Resources if every required function is dedicated to this slice.
    ResourceVector raw_demand() const {
        ResourceVector total(per_function_resources.empty() ? 0 : per_function_resources.front().size());
        for (std::size_t f = 0; f < functions.size(); ++f)
            if (!functions[f].trivial()) total += per_function_resources[f];
        return total;
    }
};

struct FunctionInstanceRecord {
    std::uint64_t id = 0;
    std::size_t slot = 0;
    FunctionConfig config;
    int share_count = 0;
    ResourceVector resources;
};

struct MetaInstance {
    InstanceId id{};
    std::vector<FunctionInstanceRecord> functions;
    std::set<SliceId> members;
};

struct PlacementOutcome {
    SliceId slice{};
    InstanceId instance{};
    bool created_new = false;
};

/// Resources charged to admit `spec`: every required function it cannot
/// join in the matched instance. Without sharing, or without a match, this
/// is the full raw demand.
inline ResourceVector admission_footprint(const MetaSliceSpec& spec, const SimilarityReport& report,
                                          bool sharing_enabled) {
    ResourceVector footprint = spec.raw_demand();
    if (!sharing_enabled || !report.best_instance_id) return footprint;
    for (std::size_t f : report.shareable_slots) {
        if (f >= spec.functions.size()) throw InvalidArgument("shareable slot out of range");
        if (!spec.functions[f].trivial()) footprint -= spec.per_function_resources[f];
    }
    return footprint;
}

/// Owns capacity, running MetaSlices and MetaInstances.
///
/// Accounting is per function instance: whoever creates a function pays
/// for it, sharers join for free, and the resources come back when the last
/// user of the function leaves. Hence at all times
///   available + sum(resources of live function instances) == capacity.
class ResourceManager {
public:
    struct SliceRecord {
        SliceId id{};
        int class_index = 0;
        InstanceId instance{};
        std::vector<std::uint64_t> function_ids;
        ResourceVector charged;
    };

    ResourceManager(ResourceVector capacity, std::size_t function_types, std::size_t config_bits, int share_cap)
        : capacity_(std::move(capacity)),
          available_(capacity_),
          occupied_(capacity_.size()),
          function_types_(function_types),
          config_bits_(config_bits),
          share_cap_(share_cap) {
        if (capacity_.size() == 0) throw InvalidArgument("capacity needs at least one resource type");
        for (double c : capacity_)
            if (!(c >= 0.0)) throw InvalidArgument("capacity entries must be non-negative");
        if (function_types_ == 0 || config_bits_ == 0) throw InvalidArgument("F and K must be at least 1");
        if (share_cap_ < 1) throw InvalidArgument("share cap must be at least 1");
    }

    const ResourceVector& capacity() const noexcept { return capacity_; }
    const ResourceVector& available() const noexcept { return available_; }
    const ResourceVector& occupied() const noexcept { return occupied_; }
    int share_cap() const noexcept { return share_cap_; }
    std::size_t function_types() const noexcept { return function_types_; }
    std::size_t running_slices() const noexcept { return slices_.size(); }
    std::size_t instance_count() const noexcept { return instances_.size(); }
    const std::map<InstanceId, MetaInstance>& instances() const noexcept { return instances_; }
    const std::map<SliceId, SliceRecord>& slices() const noexcept { return slices_; }

    /// Per-class counts of running slices.
    std::vector<int> occupancy(std::size_t classes) const {
        std::vector<int> x(classes, 0);
        for (const auto& [id, s] : slices_) ++x.at(static_cast<std::size_t>(s.class_index));
        return x;
    }

    std::vector<InstanceView> views() const {
        std::vector<InstanceView> out;
        out.reserve(instances_.size());
        for (const auto& [id, inst] : instances_) out.push_back(view_of(inst));
        return out;
    }

    SimilarityReport analyze(const FunctionSet& request, bool capacity_aware = true) const {
        const auto v = views();
        return best_match(request, v, share_cap_, capacity_aware);
    }

    /// Admits `spec` into the instance named by `report` (or a new one) and
    /// charges `footprint`, which must equal what the placement really costs.
    PlacementOutcome place(const MetaSliceSpec& spec, const SimilarityReport& report,
                           const ResourceVector& footprint) {
        validate_spec(spec);
        if (!available_.covers(footprint, kTolerance))
            throw InsufficientResources("place: available resources do not cover the footprint");

        PlacementOutcome outcome;
        outcome.slice = SliceId{next_slice_id_++};

        MetaInstance* target = nullptr;
        if (report.best_instance_id) {
            auto it = instances_.find(*report.best_instance_id);
            if (it == instances_.end()) throw NotFound("place: matched MetaInstance does not exist");
            target = &it->second;
        }

        // Decide which slots are joined before touching any state so a bad
        // footprint leaves the manager unchanged.
        std::vector<std::pair<std::size_t, std::uint64_t>> joins;
        ResourceVector charge(capacity_.size());
        for (std::size_t f = 0; f < spec.functions.size(); ++f) {
            if (spec.functions[f].trivial()) continue;
            std::optional<std::uint64_t> joined;
            if (target && contains(report.shareable_slots, f)) {
                joined = joinable_function(*target, f, spec.functions[f]);
                if (!joined) throw InvalidArgument("place: reported shareable slot has no joinable function");
            }
            if (joined)
                joins.emplace_back(f, *joined);
            else
                charge += spec.per_function_resources[f];
        }
        for (std::size_t d = 0; d < charge.size(); ++d)
            if (std::abs(charge[d] - footprint[d]) > kTolerance)
                throw InvalidArgument("place: footprint does not match the placement cost");

        if (!target) {
            const InstanceId id{next_instance_id_++};
            target = &instances_.emplace(id, MetaInstance{id, {}, {}}).first->second;
            outcome.created_new = true;
        }
        outcome.instance = target->id;

        SliceRecord slice{outcome.slice, spec.class_index, target->id, {}, charge};
        std::size_t next_join = 0;
        for (std::size_t f = 0; f < spec.functions.size(); ++f) {
            if (spec.functions[f].trivial()) continue;
            if (next_join < joins.size() && joins[next_join].first == f) {
                auto& rec = function_by_id(*target, joins[next_join].second);
                ++rec.share_count;
                slice.function_ids.push_back(rec.id);
                ++next_join;
            } else {
                FunctionInstanceRecord rec{next_function_id_++, f, spec.functions[f], 1,
                                           spec.per_function_resources[f]};
                slice.function_ids.push_back(rec.id);
                target->functions.push_back(std::move(rec));
            }
        }
        target->members.insert(outcome.slice);
        available_ -= charge;
        occupied_ += charge;
        slices_.emplace(outcome.slice, std::move(slice));
        check_invariants();
        return outcome;
    }

    /// Removes a running slice. Returns the resources of the functions that
    /// lost their last user.
    ResourceVector release(SliceId id) {
        auto it = slices_.find(id);
        if (it == slices_.end()) throw NotFound("release: MetaSlice is not running");
        SliceRecord slice = std::move(it->second);
        slices_.erase(it);

        auto inst_it = instances_.find(slice.instance);
        if (inst_it == instances_.end()) throw std::logic_error("release: slice points at a missing instance");
        MetaInstance& inst = inst_it->second;

        ResourceVector freed(capacity_.size());
        for (std::uint64_t fid : slice.function_ids) {
            auto& rec = function_by_id(inst, fid);
            if (--rec.share_count == 0) freed += rec.resources;
        }
        std::erase_if(inst.functions, [](const FunctionInstanceRecord& r) { return r.share_count == 0; });
        inst.members.erase(id);
        if (inst.members.empty()) {
            if (!inst.functions.empty()) throw std::logic_error("release: empty instance still runs functions");
            instances_.erase(inst_it);
        }
        available_ += freed;
        occupied_ -= freed;
        check_invariants();
        return freed;
    }

    /// Cheap checks run after every mutation: capacity constraint and
    /// conservation of the running totals.
    void check_invariants() const {
        for (std::size_t d = 0; d < capacity_.size(); ++d) {
            if (available_[d] < -kTolerance || occupied_[d] > capacity_[d] + kTolerance)
                throw std::logic_error("capacity constraint violated");
            if (std::abs(available_[d] + occupied_[d] - capacity_[d]) > kTolerance)
                throw std::logic_error("resource conservation violated");
        }
    }

    /// Full recount from the records: conservation, share-cap bounds,
    /// membership consistency.
    void audit() const {
        check_invariants();
        ResourceVector live(capacity_.size());
        std::unordered_map<std::uint64_t, int> users;
        for (const auto& [sid, s] : slices_)
            for (auto fid : s.function_ids) ++users[fid];
        for (const auto& [iid, inst] : instances_) {
            if (inst.members.empty()) throw std::logic_error("audit: instance without members");
            for (const auto& rec : inst.functions) {
                if (rec.share_count < 1 || rec.share_count > share_cap_)
                    throw std::logic_error("audit: share count outside [1, N_L]");
                if (users[rec.id] != rec.share_count) throw std::logic_error("audit: share count disagrees with users");
                live += rec.resources;
            }
        }
        for (std::size_t d = 0; d < capacity_.size(); ++d)
            if (std::abs(live[d] - occupied_[d]) > kTolerance)
                throw std::logic_error("audit: occupied total disagrees with live functions");
    }

    nlohmann::json snapshot() const {
        nlohmann::json out;
        out["available"] = std::vector<double>(available_.begin(), available_.end());
        out["capacity"] = std::vector<double>(capacity_.begin(), capacity_.end());
        auto& insts = out["instances"] = nlohmann::json::array();
        for (const auto& [iid, inst] : instances_) {
            nlohmann::json j;
            j["id"] = static_cast<std::uint64_t>(iid);
            for (auto m : inst.members) j["members"].push_back(static_cast<std::uint64_t>(m));
            for (const auto& rec : inst.functions) {
                j["functions"].push_back({{"id", rec.id},
                                          {"slot", rec.slot + 1},
                                          {"share_count", rec.share_count},
                                          {"resources", std::vector<double>(rec.resources.begin(), rec.resources.end())}});
            }
            insts.push_back(std::move(j));
        }
        auto& sl = out["slices"] = nlohmann::json::array();
        for (const auto& [sid, s] : slices_) {
            sl.push_back({{"id", static_cast<std::uint64_t>(sid)},
                          {"class", s.class_index + 1},
                          {"instance", static_cast<std::uint64_t>(s.instance)},
                          {"charged", std::vector<double>(s.charged.begin(), s.charged.end())}});
        }
        return out;
    }

    static constexpr double kTolerance = 1e-9;

private:
    static bool contains(const std::vector<std::size_t>& v, std::size_t x) {
        for (auto y : v)
            if (y == x) return true;
        return false;
    }

    void validate_spec(const MetaSliceSpec& spec) const {
        if (spec.functions.size() != function_types_ || spec.per_function_resources.size() != function_types_)
            throw InvalidArgument("MetaSlice spec must describe exactly F function slots");
        for (std::size_t f = 0; f < function_types_; ++f) {
            if (spec.functions[f].size() != config_bits_) throw InvalidArgument("function configuration must have K bits");
            if (spec.per_function_resources[f].size() != capacity_.size())
                throw InvalidArgument("function resources must have D entries");
        }
    }

    // The configuration an instance runs at `slot` is that of its oldest
    // function there; the reported share count is the least loaded function
    // with that configuration.
    InstanceView view_of(const MetaInstance& inst) const {
        InstanceView v{inst.id, trivial_function_set(function_types_, config_bits_),
                       std::vector<int>(function_types_, 0)};
        std::vector<bool> seen(function_types_, false);
        for (const auto& rec : inst.functions) {
            if (!seen[rec.slot]) {
                seen[rec.slot] = true;
                v.functions[rec.slot] = rec.config;
                v.share_counts[rec.slot] = rec.share_count;
            } else if (rec.config == v.functions[rec.slot]) {
                v.share_counts[rec.slot] = std::min(v.share_counts[rec.slot], rec.share_count);
            }
        }
        return v;
    }

    std::optional<std::uint64_t> joinable_function(const MetaInstance& inst, std::size_t slot,
                                                   const FunctionConfig& wanted) const {
        const FunctionConfig* slot_config = nullptr;
        const FunctionInstanceRecord* best = nullptr;
        for (const auto& rec : inst.functions) {
            if (rec.slot != slot) continue;
            if (!slot_config) slot_config = &rec.config;
            if (rec.config != *slot_config || rec.share_count >= share_cap_) continue;
            if (!best || rec.share_count < best->share_count) best = &rec;
        }
        if (!best || jaccard(wanted, best->config) <= 0.0) return std::nullopt;
        return best->id;
    }

    static FunctionInstanceRecord& function_by_id(MetaInstance& inst, std::uint64_t id) {
        for (auto& rec : inst.functions)
            if (rec.id == id) return rec;
        throw std::logic_error("function instance not found in its MetaInstance");
    }

    ResourceVector capacity_;
    ResourceVector available_;
    ResourceVector occupied_;
    std::size_t function_types_;
    std::size_t config_bits_;
    int share_cap_;
    std::map<InstanceId, MetaInstance> instances_;
    std::map<SliceId, SliceRecord> slices_;
    std::uint64_t next_instance_id_ = 1;
    std::uint64_t next_slice_id_ = 1;
    std::uint64_t next_function_id_ = 1;
};

}  // namespace metaslicing
