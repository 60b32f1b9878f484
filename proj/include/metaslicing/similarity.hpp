#pragma once

// MetaSlice analysis: how much of a requested MetaSlice's function
// configuration can be served by functions already running inside a
// MetaInstance.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "metaslicing/errors.hpp"

namespace metaslicing {

enum class InstanceId : std::uint64_t {};
enum class SliceId : std::uint64_t {};

/// K-bit configuration of one function slot. All zeros is the trivial
/// configuration: the function is not required.
class FunctionConfig {
public:
    FunctionConfig() = default;
    explicit FunctionConfig(std::size_t bits) : bits_(bits, 0) {}
    explicit FunctionConfig(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
        for (auto b : bits_)
            if (b > 1) throw InvalidArgument("function configuration entries must be 0 or 1");
    }
    FunctionConfig(std::initializer_list<int> bits) {
        bits_.reserve(bits.size());
        for (int b : bits) {
            if (b != 0 && b != 1) throw InvalidArgument("function configuration entries must be 0 or 1");
            bits_.push_back(static_cast<std::uint8_t>(b));
        }
    }

    static FunctionConfig all_ones(std::size_t bits) { return FunctionConfig(std::vector<std::uint8_t>(bits, 1)); }

    std::size_t size() const noexcept { return bits_.size(); }
    bool operator[](std::size_t k) const { return bits_[k] != 0; }
    void set(std::size_t k, bool on) { bits_[k] = on ? 1 : 0; }
    bool trivial() const noexcept {
        for (auto b : bits_)
            if (b) return false;
        return true;
    }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    friend bool operator==(const FunctionConfig&, const FunctionConfig&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

/// Positional function configuration set: slot f describes function type f.
using FunctionSet = std::vector<FunctionConfig>;

inline FunctionSet trivial_function_set(std::size_t slots, std::size_t bits) {
    return FunctionSet(slots, FunctionConfig(bits));
}

/// Jaccard similarity of two binary vectors, a.b / (|a|^2 + |b|^2 - a.b).
/// Two trivial vectors score 0: a function absent on both sides offers
/// nothing to share.
inline double jaccard(const FunctionConfig& a, const FunctionConfig& b) {
    if (a.size() != b.size()) throw InvalidArgument("jaccard: configuration lengths differ");
    std::size_t dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] && b[k];
        na += a[k];
        nb += b[k];
    }
    const std::size_t denom = na + nb - dot;
    if (denom == 0) return 0.0;
    return static_cast<double>(dot) / static_cast<double>(denom);
}

struct SlotSimilarity {
    double j = 0.0;
    /// 0-based slots of the instance that the request can join.
    std::vector<std::size_t> shareable_slots;
};

/// Similarity index of a request against one instance:
/// j = (1/F) * sum_f jaccard(request_f, instance_f).
///
/// An instance slot only counts when it is running (non-trivial) and has a
/// function below the share cap. With `capacity_aware = false` capped slots
/// still add to j (configuration-only similarity) but are never reported
/// as shareable, since nothing can join them.
inline SlotSimilarity similarity_index(const FunctionSet& request, const FunctionSet& instance,
                                       std::span<const int> share_counts, int share_cap,
                                       bool capacity_aware = true) {
    if (request.size() != instance.size() || share_counts.size() != request.size())
        throw InvalidArgument("similarity_index: function sets and share counts must all have F slots");
    if (request.empty()) throw InvalidArgument("similarity_index: F must be at least 1");
    SlotSimilarity out;
    double sum = 0.0;
    for (std::size_t f = 0; f < request.size(); ++f) {
        if (share_counts[f] < 0) throw InvalidArgument("similarity_index: negative share count");
        if (instance[f].trivial()) continue;
        const bool below_cap = share_counts[f] < share_cap;
        if (capacity_aware && !below_cap) continue;
        const double b = jaccard(request[f], instance[f]);
        sum += b;
        if (below_cap && b > 0.0) out.shareable_slots.push_back(f);
    }
    out.j = sum / static_cast<double>(request.size());
    return out;
}

/// What the analyzer needs to know about a running MetaInstance. For each
/// slot: the configuration the instance runs there (trivial if none) and
/// the lowest share count among its functions of that slot.
struct InstanceView {
    InstanceId id{};
    FunctionSet functions;
    std::vector<int> share_counts;
};

struct SimilarityReport {
    std::optional<InstanceId> best_instance_id;
    double j = 0.0;
    std::vector<std::size_t> shareable_slots;
};

/// Instance with the highest similarity index; ties go to the lowest id.
/// No instances, or nothing similar, yields an empty report with j = 0.
inline SimilarityReport best_match(const FunctionSet& request, std::span<const InstanceView> instances,
                                   int share_cap, bool capacity_aware = true) {
    SimilarityReport best;
    for (const InstanceView& view : instances) {
        SlotSimilarity s = similarity_index(request, view.functions, view.share_counts, share_cap, capacity_aware);
        if (s.j <= 0.0) continue;
        const bool better = !best.best_instance_id || s.j > best.j ||
                            (s.j == best.j && view.id < *best.best_instance_id);
        if (better) {
            best.best_instance_id = view.id;
            best.j = s.j;
            best.shareable_slots = std::move(s.shareable_slots);
        }
    }
    return best;
}

}  // namespace metaslicing
