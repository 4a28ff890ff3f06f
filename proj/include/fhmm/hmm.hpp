#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fhmm/error.hpp"
#include "fhmm/linalg.hpp"
#include "fhmm/sequence.hpp"

namespace fhmm {

inline constexpr double kStochasticTolerance = 1e-9;
inline constexpr double kEmissionFloor = 1e-10;

/// Discrete-observation HMM: transition A (N x N), emission B (N x M), prior pi (N).
struct HmmModel {
    std::size_t n_hidden = 0;
    std::size_t n_obs = 0;
    Matrix A;
    Matrix B;
    std::vector<double> pi;
    std::uint64_t seed = 0;

    friend bool operator==(const HmmModel&, const HmmModel&) = default;
};

namespace detail {

inline void check_distribution(std::span<const double> row, const std::string& what) {
    double total = 0.0;
    for (double x : row) {
        if (!std::isfinite(x) || x < 0.0) throw DomainError(what + " has a negative or non-finite entry");
        total += x;
    }
    if (std::abs(total - 1.0) > kStochasticTolerance)
        throw DomainError(what + " sums to " + std::to_string(total) + ", expected 1");
}

}  // namespace detail

/// Throws DomainError unless shapes agree and every row is a probability distribution.
inline void validate(const HmmModel& m) {
    if (m.n_hidden == 0 || m.n_obs == 0) throw DomainError("HMM needs at least one hidden state and one symbol");
    if (m.A.rows() != m.n_hidden || m.A.cols() != m.n_hidden) throw DomainError("transition matrix shape mismatch");
    if (m.B.rows() != m.n_hidden || m.B.cols() != m.n_obs) throw DomainError("emission matrix shape mismatch");
    if (m.pi.size() != m.n_hidden) throw DomainError("prior length mismatch");
    for (std::size_t i = 0; i < m.n_hidden; ++i) {
        detail::check_distribution(m.A.row(i), "transition row " + std::to_string(i));
        detail::check_distribution(m.B.row(i), "emission row " + std::to_string(i));
    }
    detail::check_distribution(m.pi, "prior");
}

inline HmmModel make_hmm(Matrix A, Matrix B, std::vector<double> pi, std::uint64_t seed = 0) {
    HmmModel m{A.rows(), B.cols(), std::move(A), std::move(B), std::move(pi), seed};
    validate(m);
    return m;
}

/// Every row of A and B, and pi, drawn from a symmetric Dirichlet(1).
inline HmmModel random_hmm(std::size_t n_hidden, std::size_t n_obs, std::uint64_t seed) {
    if (n_hidden == 0 || n_obs == 0) throw DomainError("HMM needs at least one hidden state and one symbol");
    Rng rng(seed);
    HmmModel m{n_hidden, n_obs, Matrix(n_hidden, n_hidden), Matrix(n_hidden, n_obs),
               std::vector<double>(n_hidden), seed};
    rng.dirichlet_one(m.pi);
    for (std::size_t i = 0; i < n_hidden; ++i) rng.dirichlet_one(m.A.row(i));
    for (std::size_t i = 0; i < n_hidden; ++i) rng.dirichlet_one(m.B.row(i));
    return m;
}

/// Scaled forward-backward results for one sequence.
///
/// scale[t] is the reciprocal of the unscaled forward row sum at t, so
/// log P(O | model) = -sum_t log(scale[t]). Beta uses the same factors.
struct ForwardBackwardWorkspace {
    Matrix alpha;
    Matrix beta;
    std::vector<double> scale;
    Matrix gamma;
    std::vector<double> digamma;  // (T-1) x N x N, row-major
    double log_likelihood = 0.0;

    std::size_t length() const noexcept { return scale.size(); }
    std::size_t n_hidden() const noexcept { return alpha.cols(); }

    double digamma_at(std::size_t t, std::size_t i, std::size_t j) const {
        const std::size_t n = n_hidden();
        return digamma[(t * n + i) * n + j];
    }
};

namespace detail {

inline void ensure_shape(Matrix& m, std::size_t rows, std::size_t cols) {
    if (m.rows() != rows || m.cols() != cols) m = Matrix(rows, cols);
}

// Forward pass only; fills alpha and scale and returns log-likelihood.
inline double forward_into(const HmmModel& m, std::span<const Symbol> obs, Matrix& alpha,
                           std::vector<double>& scale) {
    const std::size_t T = obs.size();
    const std::size_t N = m.n_hidden;
    ensure_shape(alpha, T, N);
    scale.assign(T, 0.0);

    double log_lik = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const auto o = static_cast<std::size_t>(obs[t]);
        double total = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            double a;
            if (t == 0) {
                a = m.pi[j];
            } else {
                a = 0.0;
                for (std::size_t i = 0; i < N; ++i) a += alpha(t - 1, i) * m.A(i, j);
            }
            a *= m.B(j, o);
            alpha(t, j) = a;
            total += a;
        }
        if (!(total > 0.0) || !std::isfinite(total))
            throw DegenerateSequenceError(t, "observation sequence has zero probability under the model");
        const double c = 1.0 / total;
        scale[t] = c;
        for (std::size_t j = 0; j < N; ++j) alpha(t, j) *= c;
        log_lik -= std::log(c);
    }
    return log_lik;
}

inline void forward_backward_into(const HmmModel& m, std::span<const Symbol> obs, ForwardBackwardWorkspace& ws) {
    const std::size_t T = obs.size();
    const std::size_t N = m.n_hidden;
    ws.log_likelihood = forward_into(m, obs, ws.alpha, ws.scale);

    ensure_shape(ws.beta, T, N);
    for (std::size_t i = 0; i < N; ++i) ws.beta(T - 1, i) = ws.scale[T - 1];
    for (std::size_t t = T - 1; t-- > 0;) {
        const auto o_next = static_cast<std::size_t>(obs[t + 1]);
        for (std::size_t i = 0; i < N; ++i) {
            double b = 0.0;
            for (std::size_t j = 0; j < N; ++j) b += m.A(i, j) * m.B(j, o_next) * ws.beta(t + 1, j);
            ws.beta(t, i) = ws.scale[t] * b;
        }
    }

    ensure_shape(ws.gamma, T, N);
    ws.digamma.assign(T > 0 ? (T - 1) * N * N : 0, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double g = ws.alpha(t, i) * ws.beta(t, i) / ws.scale[t];
            ws.gamma(t, i) = g;
            total += g;
        }
        for (std::size_t i = 0; i < N; ++i) ws.gamma(t, i) /= total;

        if (t + 1 == T) break;
        const auto o_next = static_cast<std::size_t>(obs[t + 1]);
        double* slice = ws.digamma.data() + t * N * N;
        double slice_total = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                const double d = ws.alpha(t, i) * m.A(i, j) * m.B(j, o_next) * ws.beta(t + 1, j);
                slice[i * N + j] = d;
                slice_total += d;
            }
        for (std::size_t k = 0; k < N * N; ++k) slice[k] /= slice_total;
    }
}

}  // namespace detail

inline ForwardBackwardWorkspace forward_backward(const HmmModel& model, std::span<const Symbol> obs) {
    check_symbols(obs, model.n_obs);
    ForwardBackwardWorkspace ws;
    detail::forward_backward_into(model, obs, ws);
    return ws;
}

inline ForwardBackwardWorkspace forward_backward(const HmmModel& model, const StateSequence& seq) {
    return forward_backward(model, std::span<const Symbol>(seq.symbols));
}

/// log P(obs | model) from the scaled forward pass alone.
inline double log_likelihood(const HmmModel& model, std::span<const Symbol> obs) {
    check_symbols(obs, model.n_obs);
    Matrix alpha;
    std::vector<double> scale;
    return detail::forward_into(model, obs, alpha, scale);
}

struct BaumWelchOptions {
    double tol = 1e-6;
    std::size_t max_iters = 200;
};

struct FitResult {
    HmmModel model;
    // Total log-likelihood of the training set: entry 0 for the random
    // initialization, then one entry per re-estimation.
    std::vector<double> trace;
    bool converged = false;
    std::size_t iterations = 0;
};

namespace detail {

// Clamp tiny entries and renormalize, row by row.
inline void floor_rows(Matrix& m, double floor) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        bool touched = false;
        for (double& x : row)
            if (x < floor) {
                x = floor;
                touched = true;
            }
        if (!touched) continue;
        const double total = sum(row);
        for (double& x : row) x /= total;
    }
}

struct SufficientStats {
    Matrix trans;
    Matrix emit;
    std::vector<double> prior;
    double log_likelihood = 0.0;

    SufficientStats(std::size_t n, std::size_t m) : trans(n, n), emit(n, m), prior(n, 0.0) {}
};

inline SufficientStats expectation(const HmmModel& m, std::span<const StateSequence> sequences,
                                   ForwardBackwardWorkspace& ws) {
    const std::size_t N = m.n_hidden;
    SufficientStats stats(N, m.n_obs);
    for (const auto& seq : sequences) {
        forward_backward_into(m, seq.symbols, ws);
        stats.log_likelihood += ws.log_likelihood;
        const std::size_t T = seq.size();
        for (std::size_t i = 0; i < N; ++i) stats.prior[i] += ws.gamma(0, i);
        for (std::size_t t = 0; t < T; ++t) {
            const auto o = static_cast<std::size_t>(seq.symbols[t]);
            for (std::size_t i = 0; i < N; ++i) stats.emit(i, o) += ws.gamma(t, i);
        }
        for (std::size_t t = 0; t + 1 < T; ++t) {
            const double* slice = ws.digamma.data() + t * N * N;
            for (std::size_t k = 0; k < N * N; ++k) stats.trans.data()[k] += slice[k];
        }
    }
    return stats;
}

// Rows with no expected counts keep their previous values.
inline void normalize_rows_into(const Matrix& counts, Matrix& target) {
    for (std::size_t r = 0; r < counts.rows(); ++r) {
        const double total = sum(counts.row(r));
        if (!(total > 0.0)) continue;
        for (std::size_t c = 0; c < counts.cols(); ++c) target(r, c) = counts(r, c) / total;
    }
}

inline void maximization(const SufficientStats& stats, HmmModel& m) {
    normalize_rows_into(stats.trans, m.A);
    normalize_rows_into(stats.emit, m.B);
    const double total = sum(stats.prior);
    for (std::size_t i = 0; i < m.n_hidden; ++i) m.pi[i] = stats.prior[i] / total;
    floor_rows(m.B, kEmissionFloor);
}

}  // namespace detail

/// Batch Baum-Welch over many sequences from a seeded Dirichlet(1) start.
///
/// Statistics from every sequence are pooled before each re-estimation.
/// Stops when the total log-likelihood improves by less than `tol`
/// (equality counts as converged) or after `max_iters` re-estimations.
inline FitResult baum_welch_fit(std::span<const StateSequence> sequences, std::size_t n_hidden,
                                std::size_t n_obs, std::uint64_t seed, const BaumWelchOptions& opts = {}) {
    if (sequences.empty()) throw DomainError("Baum-Welch needs at least one sequence");
    if (n_hidden == 0) throw DomainError("n_hidden must be at least 1");
    if (!(opts.tol >= 0.0)) throw DomainError("tolerance must be non-negative");
    for (const auto& seq : sequences) check_sequence(seq, n_obs);

    FitResult result{random_hmm(n_hidden, n_obs, seed), {}, false, 0};
    HmmModel& model = result.model;
    ForwardBackwardWorkspace ws;

    auto stats = detail::expectation(model, sequences, ws);
    result.trace.push_back(stats.log_likelihood);
    for (std::size_t iter = 1; iter <= opts.max_iters; ++iter) {
        detail::maximization(stats, model);
        stats = detail::expectation(model, sequences, ws);
        result.trace.push_back(stats.log_likelihood);
        result.iterations = iter;
        if (stats.log_likelihood - result.trace[iter - 1] < opts.tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

/// Incremental scaled forward filter over a growing prefix.
///
/// Feeding symbols one at a time yields, at every step, the same
/// log-likelihood and next-symbol scores as rescoring the whole prefix.
/// The model must outlive the filter.
class ForwardFilter {
public:
    explicit ForwardFilter(const HmmModel& model)
        : model_(&model), alpha_(model.n_hidden), scratch_(model.n_hidden) {}

    void reset() {
        length_ = 0;
        log_likelihood_ = 0.0;
    }

    void observe(Symbol s) {
        const HmmModel& m = *model_;
        if (s < 0 || static_cast<std::size_t>(s) >= m.n_obs)
            throw DomainError("symbol " + std::to_string(s) + " outside [0, " + std::to_string(m.n_obs) + ")");
        const auto o = static_cast<std::size_t>(s);
        const std::size_t N = m.n_hidden;
        double total = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            double a;
            if (length_ == 0) {
                a = m.pi[j];
            } else {
                a = 0.0;
                for (std::size_t i = 0; i < N; ++i) a += alpha_[i] * m.A(i, j);
            }
            a *= m.B(j, o);
            scratch_[j] = a;
            total += a;
        }
        if (!(total > 0.0) || !std::isfinite(total))
            throw DegenerateSequenceError(length_, "observation sequence has zero probability under the model");
        const double c = 1.0 / total;
        for (std::size_t j = 0; j < N; ++j) alpha_[j] = scratch_[j] * c;
        log_likelihood_ -= std::log(c);
        ++length_;
    }

    std::size_t length() const noexcept { return length_; }
    double log_likelihood() const noexcept { return log_likelihood_; }

    /// out[k] = log P(prefix + k | model). Requires at least one observed symbol.
    void next_scores(std::span<double> out) const {
        const HmmModel& m = *model_;
        if (length_ == 0) throw DomainError("prediction needs a prefix of length >= 1");
        if (out.size() != m.n_obs) throw DomainError("score buffer size mismatch");
        const std::size_t N = m.n_hidden;
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t j = 0; j < N; ++j) {
            double p = 0.0;
            for (std::size_t i = 0; i < N; ++i) p += alpha_[i] * m.A(i, j);
            const auto emit = m.B.row(j);
            for (std::size_t k = 0; k < m.n_obs; ++k) out[k] += p * emit[k];
        }
        for (double& x : out) x = log_likelihood_ + std::log(x);
    }

    std::vector<double> next_scores() const {
        std::vector<double> out(model_->n_obs);
        next_scores(out);
        return out;
    }

    Symbol predict() const {
        thread_local std::vector<double> buf;
        buf.resize(model_->n_obs);
        next_scores(buf);
        return static_cast<Symbol>(argmax(buf));
    }

private:
    const HmmModel* model_;
    std::vector<double> alpha_;
    std::vector<double> scratch_;
    std::size_t length_ = 0;
    double log_likelihood_ = 0.0;
};

struct NextSymbolPrediction {
    Symbol symbol = 0;
    std::vector<double> scores;  // log P(prefix + k | model), k in [0, M)
};

/// Most likely next symbol: argmax_k P(prefix + k), lowest index on ties.
inline NextSymbolPrediction predict_next(const HmmModel& model, std::span<const Symbol> prefix) {
    check_symbols(prefix, model.n_obs);
    ForwardFilter filter(model);
    for (Symbol s : prefix) filter.observe(s);
    NextSymbolPrediction out;
    out.scores = filter.next_scores();
    out.symbol = static_cast<Symbol>(argmax(out.scores));
    return out;
}

inline NextSymbolPrediction predict_next(const HmmModel& model, const StateSequence& prefix) {
    return predict_next(model, std::span<const Symbol>(prefix.symbols));
}

/// Draws one sequence from the model's generative process using `rng`.
inline StateSequence sample(const HmmModel& model, std::size_t length, Rng& rng) {
    if (length == 0) throw DomainError("sample length must be at least 1");
    StateSequence seq;
    seq.symbols.reserve(length);
    std::size_t state = rng.categorical(model.pi);
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) state = rng.categorical(model.A.row(state));
        seq.symbols.push_back(static_cast<Symbol>(rng.categorical(model.B.row(state))));
    }
    return seq;
}

inline StateSequence sample(const HmmModel& model, std::size_t length, std::uint64_t seed) {
    validate(model);
    Rng rng(seed);
    return sample(model, length, rng);
}

}  // namespace fhmm
