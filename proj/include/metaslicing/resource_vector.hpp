#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "metaslicing/errors.hpp"

namespace metaslicing {

/// Amounts of each of the D resource types (compute GFLOPS/s, storage GB,
/// bandwidth MHz by default). Arithmetic is elementwise and requires equal
/// lengths.
class ResourceVector {
public:
    ResourceVector() = default;
    explicit ResourceVector(std::size_t types, double fill = 0.0) : amounts_(types, fill) {}
    ResourceVector(std::initializer_list<double> values) : amounts_(values) {}
    explicit ResourceVector(std::vector<double> values) : amounts_(std::move(values)) {}

    std::size_t size() const noexcept { return amounts_.size(); }
    double operator[](std::size_t d) const { return amounts_[d]; }
    double& operator[](std::size_t d) { return amounts_[d]; }
    std::span<const double> values() const noexcept { return amounts_; }
    auto begin() const noexcept { return amounts_.begin(); }
    auto end() const noexcept { return amounts_.end(); }

    ResourceVector& operator+=(const ResourceVector& other) {
        check_shape(other);
        for (std::size_t d = 0; d < amounts_.size(); ++d) amounts_[d] += other.amounts_[d];
        return *this;
    }
    ResourceVector& operator-=(const ResourceVector& other) {
        check_shape(other);
        for (std::size_t d = 0; d < amounts_.size(); ++d) amounts_[d] -= other.amounts_[d];
        return *this;
    }
    ResourceVector& operator*=(double factor) {
        for (double& a : amounts_) a *= factor;
        return *this;
    }

    friend ResourceVector operator+(ResourceVector a, const ResourceVector& b) { return a += b; }
    friend ResourceVector operator-(ResourceVector a, const ResourceVector& b) { return a -= b; }
    friend ResourceVector operator*(ResourceVector a, double k) { return a *= k; }
    friend bool operator==(const ResourceVector&, const ResourceVector&) = default;

    /// True iff every entry of *this is >= the matching entry of `other`.
    bool covers(const ResourceVector& other, double tolerance = 0.0) const {
        check_shape(other);
        for (std::size_t d = 0; d < amounts_.size(); ++d)
            if (amounts_[d] + tolerance < other.amounts_[d]) return false;
        return true;
    }

    bool is_zero() const {
        return std::all_of(amounts_.begin(), amounts_.end(), [](double a) { return a == 0.0; });
    }

    double min() const { return amounts_.empty() ? 0.0 : *std::min_element(amounts_.begin(), amounts_.end()); }

    /// Weighted sum w . n, the resource penalty used in the reward.
    double dot(std::span<const double> weights) const {
        if (weights.size() != amounts_.size())
            throw InvalidArgument("weight vector length does not match resource types");
        return std::inner_product(amounts_.begin(), amounts_.end(), weights.begin(), 0.0);
    }

private:
    void check_shape(const ResourceVector& other) const {
        if (other.amounts_.size() != amounts_.size())
            throw InvalidArgument("resource vectors have different numbers of types");
    }

    std::vector<double> amounts_;
};

inline std::ostream& operator<<(std::ostream& os, const ResourceVector& v) {
    os << '(';
    for (std::size_t d = 0; d < v.size(); ++d) os << (d ? "," : "") << v[d];
    return os << ')';
}

}  // namespace metaslicing
