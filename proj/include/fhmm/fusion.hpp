#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fhmm/error.hpp"
#include "fhmm/linalg.hpp"
#include "fhmm/sequence.hpp"

namespace fhmm {

/// Output layer and loss. `linear` is a linear read-out trained on the
/// quadratic cost; `softmax` trains softmax probabilities on cross-entropy.
enum class FusionOutput { linear, softmax };

inline std::string to_string(FusionOutput o) { return o == FusionOutput::linear ? "linear" : "softmax"; }

inline FusionOutput fusion_output_from_string(const std::string& s) {
    if (s == "linear") return FusionOutput::linear;
    if (s == "softmax") return FusionOutput::softmax;
    throw DomainError("unknown fusion output mode '" + s + "' (expected linear or softmax)");
}

struct FusionHyper {
    std::size_t hidden = 60;
    double lr = 0.01;
    double l2 = 1e-4;
    std::size_t epochs = 50;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    FusionOutput output = FusionOutput::linear;
};

/// The K per-model predictions at one time step plus the normalized position.
struct FusionInput {
    std::vector<Symbol> hmm_preds;
    double count = 0.0;  // in [0, 1]
};

struct FusionExample {
    FusionInput input;
    Symbol target = 0;
};

/// One hidden ReLU layer: scores = w^T max(0, W^T x + c) + b.
struct FusionNetwork {
    std::size_t n_models = 0;  // K
    std::size_t n_obs = 0;     // M
    std::size_t hidden = 0;    // H
    Matrix W;                  // (K*M + 1) x H
    std::vector<double> c;     // H
    Matrix w;                  // H x M
    std::vector<double> b;     // M
    double l2 = 0.0;
    double lr = 0.0;
    FusionOutput output = FusionOutput::linear;

    std::size_t input_dim() const noexcept { return n_models * n_obs + 1; }

    friend bool operator==(const FusionNetwork&, const FusionNetwork&) = default;
};

inline void validate_input(const FusionInput& in, std::size_t k, std::size_t n_obs) {
    if (in.hmm_preds.size() != k)
        throw DomainError("fusion input has " + std::to_string(in.hmm_preds.size()) + " predictions, expected " +
                          std::to_string(k));
    for (Symbol s : in.hmm_preds)
        if (s < 0 || static_cast<std::size_t>(s) >= n_obs)
            throw DomainError("fusion input symbol " + std::to_string(s) + " outside [0, " + std::to_string(n_obs) + ")");
    if (!(in.count >= 0.0 && in.count <= 1.0)) throw DomainError("fusion count feature outside [0, 1]");
}

/// K one-hot blocks of width M followed by the count feature.
inline std::vector<double> encode(const FusionInput& in, std::size_t k, std::size_t n_obs) {
    validate_input(in, k, n_obs);
    std::vector<double> x(k * n_obs + 1, 0.0);
    for (std::size_t i = 0; i < k; ++i) x[i * n_obs + static_cast<std::size_t>(in.hmm_preds[i])] = 1.0;
    x.back() = in.count;
    return x;
}

/// Inverse of encode on the one-hot blocks: argmax of each block.
inline FusionInput decode(std::span<const double> x, std::size_t k, std::size_t n_obs) {
    if (x.size() != k * n_obs + 1) throw DomainError("feature vector dimension mismatch");
    FusionInput in;
    for (std::size_t i = 0; i < k; ++i) in.hmm_preds.push_back(static_cast<Symbol>(argmax(x.subspan(i * n_obs, n_obs))));
    in.count = x.back();
    return in;
}

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
inline FusionNetwork init_fusion(std::size_t k, std::size_t n_obs, const FusionHyper& hyper) {
    if (k == 0 || n_obs == 0) throw DomainError("fusion network needs k >= 1 and n_obs >= 1");
    if (hyper.hidden == 0) throw DomainError("fusion hidden width must be at least 1");
    FusionNetwork net;
    net.n_models = k;
    net.n_obs = n_obs;
    net.hidden = hyper.hidden;
    net.W = Matrix(net.input_dim(), hyper.hidden);
    net.c.assign(hyper.hidden, 0.0);
    net.w = Matrix(hyper.hidden, n_obs);
    net.b.assign(n_obs, 0.0);
    net.l2 = hyper.l2;
    net.lr = hyper.lr;
    net.output = hyper.output;

    Rng rng(hyper.seed);
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(net.input_dim()));
    for (double& v : net.W.data()) v = rng.uniform(-in_scale, in_scale);
    const double hid_scale = 1.0 / std::sqrt(static_cast<double>(hyper.hidden));
    for (double& v : net.w.data()) v = rng.uniform(-hid_scale, hid_scale);
    return net;
}

struct FusionResult {
    std::vector<double> scores;
    Symbol prediction = 0;
};

namespace detail {

// Forward pass keeping the pre-activations; `active` lists (input index, value) of non-zero inputs.
struct Activations {
    std::vector<double> z;
    std::vector<double> h;
    std::vector<double> y;
};

inline void forward_sparse(const FusionNetwork& net, std::span<const std::pair<std::size_t, double>> active,
                           Activations& act) {
    act.z.assign(net.c.begin(), net.c.end());
    for (const auto& [idx, v] : active) {
        const auto row = net.W.row(idx);
        for (std::size_t j = 0; j < net.hidden; ++j) act.z[j] += row[j] * v;
    }
    act.h.resize(net.hidden);
    for (std::size_t j = 0; j < net.hidden; ++j) act.h[j] = act.z[j] > 0.0 ? act.z[j] : 0.0;
    act.y.assign(net.b.begin(), net.b.end());
    for (std::size_t j = 0; j < net.hidden; ++j) {
        if (act.h[j] == 0.0) continue;
        const auto row = net.w.row(j);
        for (std::size_t m = 0; m < net.n_obs; ++m) act.y[m] += row[m] * act.h[j];
    }
}

inline std::vector<std::pair<std::size_t, double>> active_of(std::span<const double> x) {
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) out.emplace_back(i, x[i]);
    return out;
}

inline void active_of(const FusionInput& in, std::size_t n_obs, std::vector<std::pair<std::size_t, double>>& out) {
    out.clear();
    for (std::size_t i = 0; i < in.hmm_preds.size(); ++i)
        out.emplace_back(i * n_obs + static_cast<std::size_t>(in.hmm_preds[i]), 1.0);
    if (in.count != 0.0) out.emplace_back(in.hmm_preds.size() * n_obs, in.count);
}

inline void softmax_inplace(std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        total += x;
    }
    for (double& x : v) x /= total;
}

// Per-example loss; fills dy with dLoss/dy.
inline double loss_and_delta(const FusionNetwork& net, const std::vector<double>& y, Symbol target,
                             std::vector<double>& dy) {
    dy.resize(net.n_obs);
    const auto t = static_cast<std::size_t>(target);
    if (net.output == FusionOutput::linear) {
        double cost = 0.0;
        for (std::size_t m = 0; m < net.n_obs; ++m) {
            const double d = y[m] - (m == t ? 1.0 : 0.0);
            dy[m] = d;
            cost += d * d;
        }
        return 0.5 * cost;
    }
    std::vector<double> p = y;
    softmax_inplace(p);
    for (std::size_t m = 0; m < net.n_obs; ++m) dy[m] = p[m] - (m == t ? 1.0 : 0.0);
    return -std::log(std::max(p[t], 1e-300));
}

}  // namespace detail

/// Dense forward pass on an encoded feature vector.
inline FusionResult forward(const FusionNetwork& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw DomainError("feature vector has dimension " + std::to_string(x.size()) + ", network expects " +
                          std::to_string(net.input_dim()));
    detail::Activations act;
    const auto active = detail::active_of(x);
    detail::forward_sparse(net, active, act);
    return {act.y, static_cast<Symbol>(argmax(act.y))};
}

inline FusionResult forward(const FusionNetwork& net, const FusionInput& in) {
    validate_input(in, net.n_models, net.n_obs);
    detail::Activations act;
    std::vector<std::pair<std::size_t, double>> active;
    detail::active_of(in, net.n_obs, active);
    detail::forward_sparse(net, active, act);
    return {act.y, static_cast<Symbol>(argmax(act.y))};
}

/// Gradient of the data loss, same shapes as the network parameters.
struct FusionGradients {
    Matrix W;
    std::vector<double> c;
    Matrix w;
    std::vector<double> b;

    explicit FusionGradients(const FusionNetwork& net)
        : W(net.input_dim(), net.hidden), c(net.hidden, 0.0), w(net.hidden, net.n_obs), b(net.n_obs, 0.0) {}
};

/// Adds the gradient of one example's loss to `grads` and returns that loss.
inline double backprop(const FusionNetwork& net, std::span<const double> x, Symbol target, FusionGradients& grads) {
    detail::Activations act;
    const auto active = detail::active_of(x);
    detail::forward_sparse(net, active, act);
    std::vector<double> dy;
    const double cost = detail::loss_and_delta(net, act.y, target, dy);

    std::vector<double> dz(net.hidden, 0.0);
    for (std::size_t j = 0; j < net.hidden; ++j) {
        double dh = 0.0;
        const auto row = net.w.row(j);
        auto grow = grads.w.row(j);
        for (std::size_t m = 0; m < net.n_obs; ++m) {
            grow[m] += act.h[j] * dy[m];
            dh += row[m] * dy[m];
        }
        dz[j] = act.z[j] > 0.0 ? dh : 0.0;
    }
    for (std::size_t m = 0; m < net.n_obs; ++m) grads.b[m] += dy[m];
    for (std::size_t j = 0; j < net.hidden; ++j) grads.c[j] += dz[j];
    for (const auto& [idx, v] : active) {
        auto grow = grads.W.row(idx);
        for (std::size_t j = 0; j < net.hidden; ++j) grow[j] += v * dz[j];
    }
    return cost;
}

/// Mean example loss plus (l2/2)(|W|^2 + |w|^2).
inline double objective(const FusionNetwork& net, std::span<const std::vector<double>> xs,
                        std::span<const Symbol> targets) {
    double total = 0.0;
    detail::Activations act;
    std::vector<double> dy;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        detail::forward_sparse(net, detail::active_of(xs[i]), act);
        total += detail::loss_and_delta(net, act.y, targets[i], dy);
    }
    double sq = 0.0;
    for (double v : net.W.data()) sq += v * v;
    for (double v : net.w.data()) sq += v * v;
    return total / static_cast<double>(xs.size()) + 0.5 * net.l2 * sq;
}

/// Gradient of `objective` (data term averaged, plus the L2 term).
inline FusionGradients objective_gradient(const FusionNetwork& net, std::span<const std::vector<double>> xs,
                                          std::span<const Symbol> targets) {
    FusionGradients g(net);
    for (std::size_t i = 0; i < xs.size(); ++i) backprop(net, xs[i], targets[i], g);
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < g.W.data().size(); ++i) g.W.data()[i] = g.W.data()[i] * inv + net.l2 * net.W.data()[i];
    for (std::size_t i = 0; i < g.w.data().size(); ++i) g.w.data()[i] = g.w.data()[i] * inv + net.l2 * net.w.data()[i];
    for (double& v : g.c) v *= inv;
    for (double& v : g.b) v *= inv;
    return g;
}

struct FusionTraining {
    FusionNetwork net;
    std::vector<double> cost_trace;  // mean per-example loss over each epoch
};

/// Mini-batch gradient descent with L2 weight decay on W and w.
///
/// Examples are reshuffled every epoch from a generator seeded by
/// `hyper.seed`, so a fixed seed reproduces the weights bit for bit.
inline FusionTraining train_fusion(std::span<const FusionExample> examples, std::size_t k, std::size_t n_obs,
                                   const FusionHyper& hyper) {
    if (examples.empty()) throw DomainError("fusion training needs at least one example");
    if (hyper.batch == 0) throw DomainError("batch size must be at least 1");
    if (!(hyper.lr > 0.0)) throw DomainError("learning rate must be positive");
    if (!(hyper.l2 >= 0.0)) throw DomainError("l2 must be non-negative");
    for (const auto& ex : examples) {
        validate_input(ex.input, k, n_obs);
        if (ex.target < 0 || static_cast<std::size_t>(ex.target) >= n_obs)
            throw DomainError("fusion target " + std::to_string(ex.target) + " outside [0, " + std::to_string(n_obs) + ")");
    }

    FusionTraining out{init_fusion(k, n_obs, hyper), {}};
    FusionNetwork& net = out.net;
    Rng rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // Data-term gradients accumulate sparsely; touched rows of W are tracked so they can be reset cheaply.
    FusionGradients g(net);
    std::vector<char> row_touched(net.input_dim(), 0);
    std::vector<std::size_t> touched_rows;
    std::vector<std::pair<std::size_t, double>> active;
    detail::Activations act;
    std::vector<double> dy, dz(net.hidden);

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_cost = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
            const std::size_t stop = std::min(order.size(), start + hyper.batch);
            for (std::size_t pos = start; pos < stop; ++pos) {
                const auto& ex = examples[order[pos]];
                detail::active_of(ex.input, n_obs, active);
                detail::forward_sparse(net, active, act);
                epoch_cost += detail::loss_and_delta(net, act.y, ex.target, dy);
                for (std::size_t j = 0; j < net.hidden; ++j) {
                    double dh = 0.0;
                    const auto row = net.w.row(j);
                    auto grow = g.w.row(j);
                    for (std::size_t m = 0; m < n_obs; ++m) {
                        grow[m] += act.h[j] * dy[m];
                        dh += row[m] * dy[m];
                    }
                    dz[j] = act.z[j] > 0.0 ? dh : 0.0;
                }
                for (std::size_t m = 0; m < n_obs; ++m) g.b[m] += dy[m];
                for (std::size_t j = 0; j < net.hidden; ++j) g.c[j] += dz[j];
                for (const auto& [idx, v] : active) {
                    if (!row_touched[idx]) {
                        row_touched[idx] = 1;
                        touched_rows.push_back(idx);
                    }
                    auto grow = g.W.row(idx);
                    for (std::size_t j = 0; j < net.hidden; ++j) grow[j] += v * dz[j];
                }
            }
            if (!std::isfinite(epoch_cost)) throw DivergenceError(epoch, "fusion training produced a non-finite cost");

            const double step = hyper.lr / static_cast<double>(stop - start);
            const double decay = 1.0 - hyper.lr * hyper.l2;
            for (double& v : net.W.data()) v *= decay;
            for (std::size_t idx : touched_rows) {
                auto row = net.W.row(idx);
                auto grow = g.W.row(idx);
                for (std::size_t j = 0; j < net.hidden; ++j) {
                    row[j] -= step * grow[j];
                    grow[j] = 0.0;
                }
                row_touched[idx] = 0;
            }
            touched_rows.clear();
            for (std::size_t i = 0; i < net.w.data().size(); ++i) {
                net.w.data()[i] = net.w.data()[i] * decay - step * g.w.data()[i];
                g.w.data()[i] = 0.0;
            }
            for (std::size_t j = 0; j < net.hidden; ++j) {
                net.c[j] -= step * g.c[j];
                g.c[j] = 0.0;
            }
            for (std::size_t m = 0; m < n_obs; ++m) {
                net.b[m] -= step * g.b[m];
                g.b[m] = 0.0;
            }
        }
        const double mean_cost = epoch_cost / static_cast<double>(examples.size());
        if (!std::isfinite(mean_cost)) throw DivergenceError(epoch, "fusion training produced a non-finite cost");
        out.cost_trace.push_back(mean_cost);
    }
    return out;
}

/// Mean absolute input-to-hidden weight mass of one input block.
///
/// Block i < K covers the M one-hot rows of model i; block K is the count
/// row. Mass is the sum over hidden units of |W|, averaged over the block's rows.
inline double block_weight_mass(const FusionNetwork& net, std::size_t block) {
    const std::size_t first = block < net.n_models ? block * net.n_obs : net.input_dim() - 1;
    const std::size_t rows = block < net.n_models ? net.n_obs : 1;
    double total = 0.0;
    for (std::size_t r = first; r < first + rows; ++r)
        for (double v : net.W.row(r)) total += std::abs(v);
    return total / static_cast<double>(rows);
}

struct FeatureImportance {
    std::string feature;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Block weight mass averaged over several trained networks (sample std),
/// sorted by descending mean. `model_names` label the K model blocks.
inline std::vector<FeatureImportance> feature_importance(std::span<const FusionNetwork> nets,
                                                         std::span<const std::string> model_names) {
    if (nets.empty()) throw DomainError("feature importance needs at least one network");
    const std::size_t K = nets.front().n_models;
    if (model_names.size() != K) throw DomainError("one feature name per model block is required");
    std::vector<FeatureImportance> rows;
    for (std::size_t block = 0; block <= K; ++block) {
        std::vector<double> v;
        for (const auto& net : nets) v.push_back(block_weight_mass(net, block));
        const double mean = sum(v) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        rows.push_back({block < K ? model_names[block] : std::string("count"), mean, sd});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.mean > b.mean; });
    return rows;
}

}  // namespace fhmm
