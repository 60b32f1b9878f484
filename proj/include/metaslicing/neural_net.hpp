#pragma once

// Dense dueling Q-network in double precision with hand-written backprop.
//
//   input -> [dense + activation] x L -> value head V (1 unit)
//                                     -> advantage head Y (2 units)
//   Q(s,a) = V(s) + Y(s,a) - agg_a' Y(s,a')      agg = mean (default) or max

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "metaslicing/errors.hpp"

namespace metaslicing {

enum class Activation { relu, linear, tanh };
enum class Aggregation { mean, max };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::linear: return "linear";
        case Activation::tanh: return "tanh";
    }
    return "?";
}
inline const char* to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "max"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "linear") return Activation::linear;
    if (s == "tanh") return Activation::tanh;
    throw InvalidArgument("unknown activation '" + s + "'");
}
inline Aggregation aggregation_from_string(const std::string& s) {
    if (s == "mean") return Aggregation::mean;
    if (s == "max") return Aggregation::max;
    throw InvalidArgument("unknown aggregation '" + s + "'");
}

inline constexpr std::size_t kActions = 2;

/// Combines a state value with advantages into Q-values.
inline std::array<double, kActions> aggregate_q(double value, const std::array<double, kActions>& adv,
                                                Aggregation agg) {
    const double center = agg == Aggregation::mean ? (adv[0] + adv[1]) / 2.0 : std::max(adv[0], adv[1]);
    return {value + adv[0] - center, value + adv[1] - center};
}

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out

    std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
    friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
        return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
               a.weights == b.weights && a.bias == b.bias;
    }
};

struct Architecture {
    std::size_t input = 0;
    std::vector<std::size_t> hidden{64, 64};
    Activation activation = Activation::relu;
    Aggregation aggregation = Aggregation::mean;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// One training example: the target H for the Q-value of `action` at `state`.
struct TrainingSample {
    std::span<const double> state;
    int action = 0;
    double target = 0.0;
};

/// Updates parameters in place from gradients of matching shape.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) = 0;
};

/// phi <- phi - alpha * grad
class SgdOptimizer final : public Optimizer {
public:
    explicit SgdOptimizer(double step_size) : step_size_(step_size) {
        if (!(step_size > 0.0)) throw InvalidArgument("SGD step size must be > 0");
    }
    void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) override {
        for (std::size_t b = 0; b < params.size(); ++b)
            for (std::size_t k = 0; k < params[b].size(); ++k) params[b][k] -= step_size_ * grads[b][k];
    }
    double step_size() const noexcept { return step_size_; }

private:
    double step_size_;
};

class DuelingNet {
public:
    struct Output {
        double value = 0.0;
        std::array<double, kActions> advantage{};
        std::array<double, kActions> q{};
    };

    /// Gradients laid out like the network's layers.
    struct Gradients {
        std::vector<DenseLayer> trunk;
        DenseLayer value;
        DenseLayer advantage;
        double cost = 0.0;
    };

    DuelingNet() = default;

    /// Glorot-uniform weights, zero biases.
    DuelingNet(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
        if (arch_.input == 0) throw InvalidArgument("network input width must be >= 1");
        for (auto h : arch_.hidden)
            if (h == 0) throw InvalidArgument("hidden layer widths must be >= 1");
        std::mt19937_64 rng(seed);
        std::size_t prev = arch_.input;
        for (auto h : arch_.hidden) {
            trunk_.push_back(glorot(h, prev, rng));
            prev = h;
        }
        value_ = glorot(1, prev, rng);
        advantage_ = glorot(kActions, prev, rng);
    }

    const Architecture& architecture() const noexcept { return arch_; }
    std::size_t input_width() const noexcept { return arch_.input; }
    void set_aggregation(Aggregation agg) noexcept { arch_.aggregation = agg; }

    std::vector<DenseLayer>& trunk() noexcept { return trunk_; }
    const std::vector<DenseLayer>& trunk() const noexcept { return trunk_; }
    DenseLayer& value_head() noexcept { return value_; }
    const DenseLayer& value_head() const noexcept { return value_; }
    DenseLayer& advantage_head() noexcept { return advantage_; }
    const DenseLayer& advantage_head() const noexcept { return advantage_; }

    Output forward(std::span<const double> state) const {
        check_width(state.size());
        Eigen::Map<const Eigen::MatrixXd> x(state.data(), static_cast<Eigen::Index>(state.size()), 1);
        Pass p = run(x);
        Output out;
        out.value = p.value(0, 0);
        out.advantage = {p.adv(0, 0), p.adv(1, 0)};
        out.q = {p.q(0, 0), p.q(1, 0)};
        return out;
    }

    std::array<double, kActions> q_values(std::span<const double> state) const { return forward(state).q; }

    /// Q-values for a batch stored column-wise (input x B). Returns 2 x B.
    Eigen::MatrixXd q_batch(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
        if (static_cast<std::size_t>(states.rows()) != arch_.input)
            throw InvalidArgument("state encoding width does not match the network input");
        return run(states).q;
    }

    /// J = (1/|D|) * sum (H - Q(s,a))^2 and its gradient. Only the taken
    /// action's Q-value receives gradient.
    Gradients gradients(std::span<const TrainingSample> batch) const {
        if (batch.empty()) throw InvalidArgument("training batch is empty");
        const auto B = static_cast<Eigen::Index>(batch.size());
        Eigen::MatrixXd x(static_cast<Eigen::Index>(arch_.input), B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& s = batch[static_cast<std::size_t>(b)];
            check_width(s.state.size());
            if (!std::isfinite(s.target)) throw InvalidArgument("training target is not finite");
            if (s.action < 0 || s.action >= static_cast<int>(kActions)) throw InvalidArgument("action out of range");
            for (Eigen::Index k = 0; k < x.rows(); ++k) x(k, b) = s.state[static_cast<std::size_t>(k)];
        }
        Pass p = run(x);
        Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(kActions, B);
        double cost = 0.0;
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& s = batch[static_cast<std::size_t>(b)];
            const double diff = p.q(s.action, b) - s.target;
            cost += diff * diff;
            upstream(s.action, b) = 2.0 * diff / static_cast<double>(B);
        }
        Gradients g = backward(p, upstream);
        g.cost = cost / static_cast<double>(B);
        return g;
    }

    /// dQ(s,a)/dphi for a single state.
    Gradients q_gradient(std::span<const double> state, int action) const {
        check_width(state.size());
        Eigen::Map<const Eigen::MatrixXd> x(state.data(), static_cast<Eigen::Index>(state.size()), 1);
        Pass p = run(x);
        Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(kActions, 1);
        upstream(action, 0) = 1.0;
        return backward(p, upstream);
    }

    void apply(const Gradients& g, Optimizer& opt) {
        auto params = parameter_blocks();
        std::vector<std::span<const double>> grads;
        for (const auto& l : g.trunk) append_blocks(grads, l);
        append_blocks(grads, g.value);
        append_blocks(grads, g.advantage);
        if (grads.size() != params.size()) throw InvalidArgument("gradient shape does not match the network");
        opt.step(params, grads);
        for (const auto& blk : params)
            for (double v : blk)
                if (!std::isfinite(v)) throw std::runtime_error("network parameters became non-finite");
    }

    /// Cost before the update, then one optimizer step.
    double backward_and_update(std::span<const TrainingSample> batch, Optimizer& opt) {
        Gradients g = gradients(batch);
        apply(g, opt);
        return g.cost;
    }

    double backward_and_update(std::span<const TrainingSample> batch, double step_size) {
        SgdOptimizer sgd(step_size);
        return backward_and_update(batch, sgd);
    }

    /// Contiguous views over every parameter array, in a fixed order:
    /// trunk layers (weights, bias), value head, advantage head.
    std::vector<std::span<double>> parameter_blocks() {
        std::vector<std::span<double>> out;
        auto add = [&](DenseLayer& l) {
            out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
            out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        };
        for (auto& l : trunk_) add(l);
        add(value_);
        add(advantage_);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        auto add = [&](const DenseLayer& l) { n += static_cast<std::size_t>(l.weights.size() + l.bias.size()); };
        for (const auto& l : trunk_) add(l);
        add(value_);
        add(advantage_);
        return n;
    }

    bool all_finite() const {
        auto fin = [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); };
        return std::all_of(trunk_.begin(), trunk_.end(), fin) && fin(value_) && fin(advantage_);
    }

    friend bool operator==(const DuelingNet& a, const DuelingNet& b) {
        return a.arch_ == b.arch_ && a.trunk_ == b.trunk_ && a.value_ == b.value_ && a.advantage_ == b.advantage_;
    }

    // Checkpoint format (text, version 1):
    //   metaslicing-dueling-net 1
    //   input <n>
    //   hidden <w1> <w2> ...
    //   activation <relu|linear|tanh>
    //   aggregation <mean|max>
    //   layer <name> <rows> <cols>
    //   <rows*cols weights, row-major>
    //   <rows biases>
    //   ... one block per trunk layer, then "value", then "advantage"
    //   end
    // Values are written with 17 significant digits so a reload is exact.
    void save(std::ostream& os) const {
        os << "metaslicing-dueling-net " << kCheckpointVersion << '\n';
        os << "input " << arch_.input << '\n' << "hidden";
        for (auto h : arch_.hidden) os << ' ' << h;
        os << '\n' << "activation " << to_string(arch_.activation) << '\n';
        os << "aggregation " << to_string(arch_.aggregation) << '\n';
        const auto old_precision = os.precision(17);
        for (std::size_t i = 0; i < trunk_.size(); ++i) write_layer(os, "trunk" + std::to_string(i), trunk_[i]);
        write_layer(os, "value", value_);
        write_layer(os, "advantage", advantage_);
        os.precision(old_precision);
        os << "end\n";
    }

    static DuelingNet load(std::istream& is) {
        auto fail = [](const std::string& why) -> DuelingNet { throw InvalidArgument("checkpoint: " + why); };
        std::string tag, line;
        int version = 0;
        if (!(is >> tag >> version) || tag != "metaslicing-dueling-net") return fail("missing header");
        if (version != kCheckpointVersion) return fail("unsupported version " + std::to_string(version));
        DuelingNet net;
        if (!(is >> tag >> net.arch_.input) || tag != "input") return fail("missing input width");
        if (!(is >> tag) || tag != "hidden") return fail("missing hidden widths");
        std::getline(is, line);
        net.arch_.hidden.clear();
        std::istringstream hs(line);
        for (std::size_t h; hs >> h;) net.arch_.hidden.push_back(h);
        if (!(is >> tag >> line) || tag != "activation") return fail("missing activation");
        net.arch_.activation = activation_from_string(line);
        if (!(is >> tag >> line) || tag != "aggregation") return fail("missing aggregation");
        net.arch_.aggregation = aggregation_from_string(line);
        std::size_t prev = net.arch_.input;
        for (std::size_t i = 0; i < net.arch_.hidden.size(); ++i) {
            net.trunk_.push_back(read_layer(is, "trunk" + std::to_string(i), net.arch_.hidden[i], prev));
            prev = net.arch_.hidden[i];
        }
        net.value_ = read_layer(is, "value", 1, prev);
        net.advantage_ = read_layer(is, "advantage", kActions, prev);
        if (!(is >> tag) || tag != "end") return fail("missing end marker");
        if (!net.all_finite()) return fail("non-finite parameters");
        return net;
    }

    static constexpr int kCheckpointVersion = 1;

private:
    struct Pass {
        std::vector<Eigen::MatrixXd> pre;   // per trunk layer
        std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = act(pre[l])
        Eigen::MatrixXd value, adv, q;
    };

    static DenseLayer glorot(std::size_t out, std::size_t in, std::mt19937_64& rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        DenseLayer l{Eigen::MatrixXd(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                     Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = u(rng);
        return l;
    }

    void check_width(std::size_t w) const {
        if (w != arch_.input) throw InvalidArgument("state encoding width does not match the network input");
    }

    Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
        switch (arch_.activation) {
            case Activation::relu: return z.cwiseMax(0.0);
            case Activation::tanh: return z.array().tanh().matrix();
            case Activation::linear: break;
        }
        return z;
    }

    Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a) const {
        switch (arch_.activation) {
            case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
            case Activation::tanh: return (1.0 - a.array().square()).matrix();
            case Activation::linear: break;
        }
        return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    }

    Pass run(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        Pass p;
        p.post.reserve(trunk_.size() + 1);
        p.post.emplace_back(x);
        for (const auto& l : trunk_) {
            p.pre.push_back((l.weights * p.post.back()).colwise() + l.bias);
            p.post.push_back(activate(p.pre.back()));
        }
        const auto& h = p.post.back();
        p.value = (value_.weights * h).colwise() + value_.bias;
        p.adv = (advantage_.weights * h).colwise() + advantage_.bias;
        p.q.resize(kActions, x.cols());
        for (Eigen::Index b = 0; b < x.cols(); ++b) {
            const auto q = aggregate_q(p.value(0, b), {p.adv(0, b), p.adv(1, b)}, arch_.aggregation);
            p.q(0, b) = q[0];
            p.q(1, b) = q[1];
        }
        return p;
    }

    // `upstream` holds dLoss/dQ (2 x B).
    Gradients backward(const Pass& p, const Eigen::MatrixXd& upstream) const {
        const Eigen::Index B = upstream.cols();
        Eigen::MatrixXd g_value(1, B), g_adv(kActions, B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const double total = upstream(0, b) + upstream(1, b);
            g_value(0, b) = total;
            if (arch_.aggregation == Aggregation::mean) {
                g_adv(0, b) = upstream(0, b) - total / 2.0;
                g_adv(1, b) = upstream(1, b) - total / 2.0;
            } else {
                const Eigen::Index top = p.adv(1, b) > p.adv(0, b) ? 1 : 0;
                g_adv(0, b) = upstream(0, b) - (top == 0 ? total : 0.0);
                g_adv(1, b) = upstream(1, b) - (top == 1 ? total : 0.0);
            }
        }
        Gradients g;
        const auto& h = p.post.back();
        g.value = {g_value * h.transpose(), g_value.rowwise().sum()};
        g.advantage = {g_adv * h.transpose(), g_adv.rowwise().sum()};
        Eigen::MatrixXd delta = value_.weights.transpose() * g_value + advantage_.weights.transpose() * g_adv;
        g.trunk.resize(trunk_.size());
        for (std::size_t l = trunk_.size(); l-- > 0;) {
            const Eigen::MatrixXd dz = delta.cwiseProduct(activation_slope(p.pre[l], p.post[l + 1]));
            g.trunk[l] = {dz * p.post[l].transpose(), dz.rowwise().sum()};
            if (l > 0) delta = trunk_[l].weights.transpose() * dz;
        }
        return g;
    }

    static void append_blocks(std::vector<std::span<const double>>& out, const DenseLayer& l) {
        out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
        out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }

    static void write_layer(std::ostream& os, const std::string& name, const DenseLayer& l) {
        os << "layer " << name << ' ' << l.weights.rows() << ' ' << l.weights.cols() << '\n';
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) os << l.weights(r, c) << (c + 1 == l.weights.cols() ? '\n' : ' ');
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) os << l.bias(r) << (r + 1 == l.bias.size() ? '\n' : ' ');
    }

    static DenseLayer read_layer(std::istream& is, const std::string& name, std::size_t rows, std::size_t cols) {
        std::string tag, got;
        std::size_t r = 0, c = 0;
        if (!(is >> tag >> got >> r >> c) || tag != "layer" || got != name)
            throw InvalidArgument("checkpoint: expected layer '" + name + "'");
        if (r != rows || c != cols) throw InvalidArgument("checkpoint: layer '" + name + "' has the wrong shape");
        DenseLayer l{Eigen::MatrixXd(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)),
                     Eigen::VectorXd(static_cast<Eigen::Index>(r))};
        for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
            for (Eigen::Index j = 0; j < l.weights.cols(); ++j)
                if (!(is >> l.weights(i, j))) throw InvalidArgument("checkpoint: truncated layer '" + name + "'");
        for (Eigen::Index i = 0; i < l.bias.size(); ++i)
            if (!(is >> l.bias(i))) throw InvalidArgument("checkpoint: truncated layer '" + name + "'");
        return l;
    }

    Architecture arch_;
    std::vector<DenseLayer> trunk_;
    DenseLayer value_;
    DenseLayer advantage_;
};

/// Central-difference check of dQ(s,a)/dphi against backprop. Returns the
/// largest relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
/// over every parameter.
inline double finite_diff_check(const DuelingNet& net, std::span<const double> state, int action, double eps) {
    if (!(eps >= 1e-6 && eps <= 1e-3)) throw InvalidArgument("finite_diff_check: eps must be in [1e-6, 1e-3]");
    const DuelingNet::Gradients analytic = net.q_gradient(state, action);
    std::vector<std::span<const double>> grads;
    auto add = [&](const DenseLayer& l) {
        grads.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
        grads.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    };
    for (const auto& l : analytic.trunk) add(l);
    add(analytic.value);
    add(analytic.advantage);

    DuelingNet probe = net;
    auto params = probe.parameter_blocks();
    double worst = 0.0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t k = 0; k < params[b].size(); ++k) {
            const double saved = params[b][k];
            params[b][k] = saved + eps;
            const double up = probe.q_values(state)[static_cast<std::size_t>(action)];
            params[b][k] = saved - eps;
            const double down = probe.q_values(state)[static_cast<std::size_t>(action)];
            params[b][k] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = grads[b][k];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace metaslicing
