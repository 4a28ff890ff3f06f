#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fhmm/error.hpp"
#include "fhmm/fusion.hpp"
#include "fhmm/hmm.hpp"
#include "fhmm/linalg.hpp"
#include "fhmm/markov.hpp"
#include "fhmm/partition.hpp"
#include "fhmm/sequence.hpp"

namespace fhmm {

struct EnsembleConfig {
    std::size_t k = kDefaultK;
    std::size_t n_hidden = 5;
    std::size_t min_support = kDefaultMinSupport;
    BaumWelchOptions hmm;
    FusionHyper fusion;  // fusion.seed is replaced by base_seed
    std::uint64_t base_seed = 0;
    bool parallel = false;
    std::size_t workers = 0;  // 0 = hardware concurrency
    std::size_t stride = 1;
    std::size_t max_len = 0;  // count normalizer; 0 = longest training session
};

inline void validate(const EnsembleConfig& c) {
    if (c.k == 0) throw DomainError("k must be at least 1");
    if (c.n_hidden == 0) throw DomainError("n_hidden must be at least 1");
    if (c.min_support == 0) throw DomainError("min_support must be at least 1");
    if (c.stride == 0) throw DomainError("stride must be at least 1");
    if (!(c.hmm.tol >= 0.0)) throw DomainError("hmm tolerance must be non-negative");
    if (c.hmm.max_iters == 0) throw DomainError("hmm max_iters must be at least 1");
    if (c.fusion.hidden == 0 || c.fusion.batch == 0) throw DomainError("fusion hidden and batch must be at least 1");
    if (!(c.fusion.lr > 0.0) || !(c.fusion.l2 >= 0.0)) throw DomainError("fusion lr must be > 0 and l2 >= 0");
}

struct StageTime {
    std::string stage;
    double seconds = 0.0;
};

/// The deployable FHMM: plan, one HMM per selected length (in selection
/// order), the fusion network and the alphabet.
struct EnsembleModel {
    PartitionPlan plan;
    std::vector<std::size_t> lengths;  // == plan.selected_lengths
    std::vector<HmmModel> models;      // parallel to lengths
    FusionNetwork fusion;
    std::size_t n_obs = 0;
    std::vector<std::string> alphabet;
    std::uint64_t base_seed = 0;
    std::size_t max_len = 1;
    std::vector<std::string> warnings;
    std::vector<StageTime> timings;  // not part of the serialized artifact

    std::size_t k() const noexcept { return models.size(); }

    const HmmModel& model_for(std::size_t length) const {
        for (std::size_t i = 0; i < lengths.size(); ++i)
            if (lengths[i] == length) return models[i];
        throw DomainError("ensemble has no model for length " + std::to_string(length));
    }

    std::vector<std::string> model_names() const {
        std::vector<std::string> out;
        for (std::size_t len : lengths) out.push_back("hmm_" + std::to_string(len));
        return out;
    }
};

inline void check_invariants(const EnsembleModel& m) {
    if (m.lengths != m.plan.selected_lengths) throw DomainError("ensemble model lengths differ from the plan selection");
    if (m.models.size() != m.lengths.size()) throw DomainError("ensemble model count differs from its length list");
    for (const auto& h : m.models)
        if (h.n_obs != m.n_obs) throw DomainError("ensemble members disagree on n_obs");
    if (m.fusion.n_models != m.models.size() || m.fusion.n_obs != m.n_obs)
        throw DomainError("fusion network shape does not match the ensemble");
    if (!m.alphabet.empty() && m.alphabet.size() != m.n_obs) throw DomainError("alphabet size differs from n_obs");
    if (m.max_len == 0) throw DomainError("ensemble max_len must be positive");
}

// ---------------------------------------------------------------------------
// Work distribution

inline std::size_t resolve_workers(bool parallel, std::size_t workers) {
    if (!parallel) return 1;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    return workers;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled exactly once; callers write results by index, so the outcome
/// does not depend on scheduling. The first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Stage-2 data

inline double count_feature(std::size_t t, std::size_t max_len) {
    return std::min(1.0, static_cast<double>(t) / static_cast<double>(max_len));
}

/// Prediction points of a session of length T: t = 1, 1 + stride, ... <= T - 1.
inline std::size_t prediction_points(std::size_t T, std::size_t stride) {
    return T < 2 ? 0 : (T - 2) / stride + 1;
}

namespace detail {

// Per-model next-symbol predictions at every prediction point of one session.
// Layout: preds[p * K + i] for point p and model i.
inline void session_predictions(std::span<const HmmModel> models, const StateSequence& seq, std::size_t stride,
                                std::vector<Symbol>& preds) {
    const std::size_t K = models.size();
    const std::size_t P = prediction_points(seq.size(), stride);
    preds.assign(P * K, 0);
    for (std::size_t i = 0; i < K; ++i) {
        ForwardFilter f(models[i]);
        std::size_t p = 0;
        for (std::size_t t = 1; t < seq.size() && p < P; ++t) {
            f.observe(seq.symbols[t - 1]);
            if ((t - 1) % stride == 0) preds[p++ * K + i] = f.predict();
        }
    }
}

struct Stage2Table {
    std::size_t k = 0;
    std::vector<Symbol> preds;  // row-major points x k
    std::vector<double> counts;
    std::vector<Symbol> targets;

    std::size_t size() const noexcept { return targets.size(); }
};

inline Stage2Table stage2_table(std::span<const HmmModel> models, std::span<const StateSequence> sessions,
                                std::size_t stride, std::size_t max_len, std::size_t workers) {
    if (stride == 0) throw DomainError("stride must be at least 1");
    if (max_len == 0) throw DomainError("max_len must be positive");
    std::vector<std::vector<Symbol>> per_session(sessions.size());
    parallel_for(sessions.size(), workers,
                 [&](std::size_t s) { session_predictions(models, sessions[s], stride, per_session[s]); });
    Stage2Table table;
    table.k = models.size();
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        const auto& seq = sessions[s];
        table.preds.insert(table.preds.end(), per_session[s].begin(), per_session[s].end());
        for (std::size_t t = 1; t < seq.size(); t += stride) {
            table.counts.push_back(count_feature(t, max_len));
            table.targets.push_back(seq.symbols[t]);
        }
    }
    return table;
}

// Examples using only the first `k` model columns of the table.
inline std::vector<FusionExample> stage2_examples(const Stage2Table& table, std::size_t k) {
    std::vector<FusionExample> out(table.size());
    for (std::size_t p = 0; p < table.size(); ++p) {
        const auto row = table.preds.begin() + static_cast<std::ptrdiff_t>(p * table.k);
        out[p].input.hmm_preds.assign(row, row + static_cast<std::ptrdiff_t>(k));
        out[p].input.count = table.counts[p];
        out[p].target = table.targets[p];
    }
    return out;
}

}  // namespace detail

/// Second-stage training examples: at every `stride`-th position t in
/// [1, T-1] of each session, every model's prediction from the prefix
/// [0, t), the count feature t / max_len (clamped to 1) and target seq[t].
inline std::vector<FusionExample> collect_stage2(std::span<const HmmModel> models, std::span<const StateSequence> sessions,
                                                 std::size_t stride, std::size_t max_len, std::size_t workers = 1) {
    if (models.empty()) throw DomainError("stage-2 collection needs at least one model");
    for (const auto& s : sessions) {
        if (s.size() < 2) throw DomainError("stage-2 sessions must have length >= 2 (session " + s.session_id + ")");
        check_sequence(s, models.front().n_obs);
    }
    const auto table = detail::stage2_table(models, sessions, stride, max_len, workers);
    return detail::stage2_examples(table, models.size());
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::size_t resolve_max_len(const EnsembleConfig& c, std::span<const StateSequence> sessions) {
    return c.max_len ? c.max_len : std::max<std::size_t>(1, max_length(sessions));
}

/// HMMs for the first `k_max` ranked lengths plus their stage-2 table.
/// Smaller ensembles reuse a prefix of both: selections nest and member
/// seeds depend only on the length.
struct TrainedMembers {
    PartitionPlan base;  // groups and distances, no selection
    std::vector<std::size_t> lengths;
    std::vector<HmmModel> models;
    std::vector<std::string> warnings;  // parallel to models, empty when converged
    Stage2Table stage2;
    std::size_t max_len = 1;
    std::vector<StageTime> timings;
};

inline TrainedMembers train_members(std::span<const StateSequence> sessions, std::size_t n_obs, std::size_t k_max,
                                    const EnsembleConfig& c) {
    validate(c);
    if (sessions.empty()) throw DomainError("ensemble training needs at least one session");
    for (const auto& s : sessions) check_sequence(s, n_obs);
    const std::size_t workers = resolve_workers(c.parallel, c.workers);

    TrainedMembers out;
    auto t0 = std::chrono::steady_clock::now();
    out.base = build_partition(sessions, n_obs);
    const PartitionPlan sel = select_k(out.base, k_max, c.min_support);
    out.lengths = sel.selected_lengths;
    out.timings.push_back({"partition", seconds_since(t0)});

    t0 = std::chrono::steady_clock::now();
    out.models.resize(k_max);
    out.warnings.resize(k_max);
    parallel_for(k_max, workers, [&](std::size_t i) {
        const std::size_t len = out.lengths[i];
        const auto data = group_sessions(out.base, sessions, len);
        auto fit = baum_welch_fit(data, c.n_hidden, n_obs, c.base_seed ^ static_cast<std::uint64_t>(len), c.hmm);
        if (!fit.converged)
            out.warnings[i] = "hmm_" + std::to_string(len) + " did not converge within " +
                              std::to_string(c.hmm.max_iters) + " iterations";
        out.models[i] = std::move(fit.model);
    });
    out.timings.push_back({"hmm_training", seconds_since(t0)});

    t0 = std::chrono::steady_clock::now();
    out.max_len = resolve_max_len(c, sessions);
    std::vector<StateSequence> usable;
    for (const auto& s : sessions)
        if (s.size() >= 2) usable.push_back(s);
    out.stage2 = stage2_table(out.models, usable, c.stride, out.max_len, workers);
    out.timings.push_back({"stage2_collection", seconds_since(t0)});
    return out;
}

inline EnsembleModel assemble(const TrainedMembers& members, std::size_t k, const EnsembleConfig& c,
                              const std::vector<std::string>& alphabet) {
    if (k == 0 || k > members.models.size()) throw DomainError("requested k outside the trained member set");
    EnsembleModel m;
    m.plan = select_k(members.base, k, c.min_support);
    m.lengths.assign(members.lengths.begin(), members.lengths.begin() + static_cast<std::ptrdiff_t>(k));
    m.models.assign(members.models.begin(), members.models.begin() + static_cast<std::ptrdiff_t>(k));
    m.n_obs = members.base.n_obs;
    m.alphabet = alphabet;
    m.base_seed = c.base_seed;
    m.max_len = members.max_len;
    m.warnings = m.plan.warnings;
    for (std::size_t i = 0; i < k; ++i)
        if (!members.warnings[i].empty()) m.warnings.push_back(members.warnings[i]);
    m.timings = members.timings;

    const auto t0 = std::chrono::steady_clock::now();
    if (members.stage2.size() == 0) throw DomainError("no session of length >= 2 to train the fusion network on");
    const auto examples = stage2_examples(members.stage2, k);
    FusionHyper hyper = c.fusion;
    hyper.seed = c.base_seed;
    m.fusion = train_fusion(examples, k, m.n_obs, hyper).net;
    m.timings.push_back({"fusion_training", seconds_since(t0)});
    check_invariants(m);
    return m;
}

}  // namespace detail

/// Partition, fit one HMM per selected length (seed = base_seed ^ length),
/// collect stage-2 data over all training sessions and train the fusion
/// network. Parallel and sequential runs yield identical models.
inline EnsembleModel train_ensemble(std::span<const StateSequence> sessions, std::size_t n_obs, const EnsembleConfig& c,
                                    std::vector<std::string> alphabet = {}) {
    const auto members = detail::train_members(sessions, n_obs, c.k, c);
    return detail::assemble(members, c.k, c, alphabet);
}

// ---------------------------------------------------------------------------
// Prediction

struct EnsemblePrediction {
    Symbol symbol = 0;
    std::vector<Symbol> per_model;
    std::vector<double> scores;
};

/// Incremental ensemble prediction along one session.
class EnsembleTracker {
public:
    explicit EnsembleTracker(const EnsembleModel& model) : model_(&model) {
        for (const auto& h : model.models) filters_.emplace_back(h);
    }

    void reset() {
        for (auto& f : filters_) f.reset();
        length_ = 0;
    }

    void observe(Symbol s) {
        for (auto& f : filters_) f.observe(s);
        ++length_;
    }

    std::size_t length() const noexcept { return length_; }

    std::vector<Symbol> member_predictions() const {
        std::vector<Symbol> out;
        for (const auto& f : filters_) out.push_back(f.predict());
        return out;
    }

    EnsemblePrediction predict() const {
        if (length_ == 0) throw DomainError("prediction needs a prefix of length >= 1");
        EnsemblePrediction out;
        out.per_model = member_predictions();
        auto fused = forward(model_->fusion, FusionInput{out.per_model, count_feature(length_, model_->max_len)});
        out.symbol = fused.prediction;
        out.scores = std::move(fused.scores);
        return out;
    }

private:
    const EnsembleModel* model_;
    std::vector<ForwardFilter> filters_;
    std::size_t length_ = 0;
};

inline EnsemblePrediction predict(const EnsembleModel& model, std::span<const Symbol> prefix) {
    check_symbols(prefix, model.n_obs);
    EnsembleTracker tracker(model);
    for (Symbol s : prefix) tracker.observe(s);
    return tracker.predict();
}

inline EnsemblePrediction predict(const EnsembleModel& model, const StateSequence& prefix) {
    return predict(model, prefix.symbols);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Predictions at each prediction point of each session, in order.
using SessionPredictions = std::vector<std::vector<Symbol>>;

struct EvaluationReport {
    std::string predictor;
    std::size_t n_obs = 0;
    std::size_t stride = 1;
    std::size_t points = 0;
    std::size_t correct = 0;
    double overall_accuracy = 0.0;
    std::vector<std::size_t> support;                     // per true state
    std::vector<std::optional<double>> per_state_accuracy;  // recall; absent when support is 0
    std::vector<std::pair<std::string, double>> per_model_accuracy;
    std::vector<std::size_t> confusion;  // row = true, column = predicted, M x M
    std::vector<StageTime> wall_time;    // kept out of the deterministic report files

    std::size_t confusion_at(std::size_t truth, std::size_t pred) const { return confusion[truth * n_obs + pred]; }
    double error_rate() const { return 1.0 - overall_accuracy; }

    bool same_results(const EvaluationReport& o) const {
        return predictor == o.predictor && n_obs == o.n_obs && stride == o.stride && points == o.points &&
               correct == o.correct && overall_accuracy == o.overall_accuracy && support == o.support &&
               per_state_accuracy == o.per_state_accuracy && per_model_accuracy == o.per_model_accuracy &&
               confusion == o.confusion;
    }
};

/// Scores predictions against the truth at every stride point.
inline EvaluationReport evaluate_predictions(std::span<const StateSequence> sessions, const SessionPredictions& preds,
                                             std::size_t n_obs, std::size_t stride, std::string name) {
    if (sessions.empty()) throw DomainError("evaluation needs at least one test session");
    if (stride == 0) throw DomainError("stride must be at least 1");
    if (preds.size() != sessions.size()) throw DomainError("one prediction list per session is required");
    EvaluationReport r;
    r.predictor = std::move(name);
    r.n_obs = n_obs;
    r.stride = stride;
    r.support.assign(n_obs, 0);
    r.confusion.assign(n_obs * n_obs, 0);
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        const auto& seq = sessions[s];
        check_sequence(seq, n_obs);
        if (preds[s].size() != prediction_points(seq.size(), stride))
            throw DomainError("session " + seq.session_id + ": expected " +
                              std::to_string(prediction_points(seq.size(), stride)) + " predictions, got " +
                              std::to_string(preds[s].size()));
        std::size_t p = 0;
        for (std::size_t t = 1; t < seq.size(); t += stride, ++p) {
            const auto truth = static_cast<std::size_t>(seq.symbols[t]);
            const Symbol guess = preds[s][p];
            if (guess < 0 || static_cast<std::size_t>(guess) >= n_obs)
                throw DomainError("predicted symbol " + std::to_string(guess) + " outside the alphabet");
            ++r.support[truth];
            ++r.confusion[truth * n_obs + static_cast<std::size_t>(guess)];
            ++r.points;
            r.correct += static_cast<std::size_t>(guess) == truth;
        }
    }
    r.overall_accuracy = r.points ? static_cast<double>(r.correct) / static_cast<double>(r.points) : 0.0;
    r.per_state_accuracy.resize(n_obs);
    for (std::size_t m = 0; m < n_obs; ++m)
        if (r.support[m] > 0)
            r.per_state_accuracy[m] = static_cast<double>(r.confusion[m * n_obs + m]) / static_cast<double>(r.support[m]);
    return r;
}

/// Predictions of any incremental predictor. `make` returns a fresh
/// per-session state with observe(Symbol) and predict().
template <class Factory>
SessionPredictions predictions_of(std::span<const StateSequence> sessions, std::size_t stride, Factory make) {
    SessionPredictions out(sessions.size());
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        auto state = make();
        const auto& seq = sessions[s];
        for (std::size_t t = 1; t < seq.size(); ++t) {
            state.observe(seq.symbols[t - 1]);
            if ((t - 1) % stride == 0) out[s].push_back(state.predict());
        }
    }
    return out;
}

namespace detail {

struct MarkovState {
    const MarkovChainModel* model;
    Symbol last = 0;
    void observe(Symbol s) {
        if (s < 0 || static_cast<std::size_t>(s) >= model->n_obs) throw DomainError("symbol outside the alphabet");
        last = s;
    }
    Symbol predict() const { return predict_next_markov(*model, std::span<const Symbol>(&last, 1)); }
};

}  // namespace detail

inline EvaluationReport evaluate(const HmmModel& model, std::span<const StateSequence> sessions, std::size_t stride = 1,
                                 std::string name = "single_hmm") {
    const auto t0 = std::chrono::steady_clock::now();
    auto preds = predictions_of(sessions, stride, [&] { return ForwardFilter(model); });
    auto r = evaluate_predictions(sessions, preds, model.n_obs, stride, std::move(name));
    r.wall_time.push_back({"evaluate", detail::seconds_since(t0)});
    return r;
}

inline EvaluationReport evaluate(const MarkovChainModel& model, std::span<const StateSequence> sessions,
                                 std::size_t stride = 1, std::string name = "markov") {
    const auto t0 = std::chrono::steady_clock::now();
    auto preds = predictions_of(sessions, stride, [&] { return detail::MarkovState{&model}; });
    auto r = evaluate_predictions(sessions, preds, model.n_obs, stride, std::move(name));
    r.wall_time.push_back({"evaluate", detail::seconds_since(t0)});
    return r;
}

/// Fused accuracy plus each member's standalone accuracy on the same points.
inline EvaluationReport evaluate(const EnsembleModel& model, std::span<const StateSequence> sessions,
                                 std::size_t stride = 1, std::string name = "fhmm") {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t K = model.k();
    SessionPredictions fused(sessions.size());
    std::vector<std::size_t> member_correct(K, 0);
    std::vector<Symbol> member;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        const auto& seq = sessions[s];
        check_sequence(seq, model.n_obs);
        detail::session_predictions(model.models, seq, stride, member);
        std::size_t p = 0;
        for (std::size_t t = 1; t < seq.size(); t += stride, ++p) {
            std::vector<Symbol> row(member.begin() + static_cast<std::ptrdiff_t>(p * K),
                                    member.begin() + static_cast<std::ptrdiff_t>((p + 1) * K));
            for (std::size_t i = 0; i < K; ++i) member_correct[i] += row[i] == seq.symbols[t];
            fused[s].push_back(forward(model.fusion, FusionInput{std::move(row), count_feature(t, model.max_len)}).prediction);
        }
    }
    auto r = evaluate_predictions(sessions, fused, model.n_obs, stride, std::move(name));
    const auto names = model.model_names();
    for (std::size_t i = 0; i < K; ++i)
        r.per_model_accuracy.emplace_back(
            names[i], r.points ? static_cast<double>(member_correct[i]) / static_cast<double>(r.points) : 0.0);
    r.wall_time = model.timings;
    r.wall_time.push_back({"evaluate", detail::seconds_since(t0)});
    return r;
}

// ---------------------------------------------------------------------------
// Splits, sweeps and agreement

struct Split {
    std::vector<StateSequence> train;
    std::vector<StateSequence> test;
};

/// Seeded session-level split; both halves keep the input order.
inline Split split_sessions(std::span<const StateSequence> sessions, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw DomainError("test fraction must lie in (0, 1)");
    std::vector<std::size_t> order(sessions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(sessions.size())));
    std::vector<char> is_test(sessions.size(), 0);
    for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
    Split out;
    for (std::size_t i = 0; i < sessions.size(); ++i) (is_test[i] ? out.test : out.train).push_back(sessions[i]);
    return out;
}

struct SweepPoint {
    std::size_t k = 0;
    double accuracy = 0.0;
    double error_rate = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::vector<EnsembleModel> models;  // parallel to points
};

inline void check_k_values(std::span<const std::size_t> ks) {
    if (ks.empty()) throw DomainError("sweep needs at least one k value");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] == 0) throw DomainError("k values must be at least 1");
        if (i > 0 && ks[i] == ks[i - 1]) throw DomainError("duplicate k value " + std::to_string(ks[i]));
        if (i > 0 && ks[i] < ks[i - 1]) throw DomainError("k values must be ascending");
    }
}

/// Error rate on `test` of an ensemble trained on `train` for each k.
///
/// Members are fitted once for the largest k; each smaller ensemble takes
/// the leading members and retrains only the fusion network, which gives
/// the same models as training each k from scratch.
inline SweepResult sweep_k(std::span<const StateSequence> train, std::span<const StateSequence> test, std::size_t n_obs,
                           std::span<const std::size_t> ks, const EnsembleConfig& c,
                           const std::vector<std::string>& alphabet = {}) {
    check_k_values(ks);
    const auto members = detail::train_members(train, n_obs, ks.back(), c);
    SweepResult out;
    for (std::size_t k : ks) {
        auto model = detail::assemble(members, k, c, alphabet);
        const auto report = evaluate(model, test, c.stride);
        out.points.push_back({k, report.overall_accuracy, report.error_rate()});
        out.models.push_back(std::move(model));
    }
    return out;
}

/// Block weight mass of the fusion network over `runs` retrainings with
/// base seeds base_seed, base_seed + 1, ... The selected lengths do not
/// depend on the seed, so every run has the same features.
inline std::vector<FeatureImportance> retrained_importance(std::span<const StateSequence> train, std::size_t n_obs,
                                                           const EnsembleConfig& c, std::size_t runs) {
    if (runs == 0) throw DomainError("feature importance needs at least one run");
    std::vector<FusionNetwork> nets;
    std::vector<std::string> names;
    for (std::size_t r = 0; r < runs; ++r) {
        EnsembleConfig rc = c;
        rc.base_seed = c.base_seed + r;
        auto m = train_ensemble(train, n_obs, rc);
        if (r == 0) names = m.model_names();
        nets.push_back(std::move(m.fusion));
    }
    return feature_importance(nets, names);
}

/// Agreement rate between every pair of models over all prediction points.
inline Matrix prediction_correlation(std::span<const HmmModel> models, std::span<const StateSequence> sessions,
                                     std::size_t stride = 1) {
    if (models.size() < 2) throw DomainError("prediction correlation needs at least two models");
    const std::size_t K = models.size();
    Matrix agree(K, K);
    std::size_t points = 0;
    std::vector<Symbol> preds;
    for (const auto& seq : sessions) {
        check_sequence(seq, models.front().n_obs);
        detail::session_predictions(models, seq, stride, preds);
        const std::size_t P = preds.size() / K;
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = i + 1; j < K; ++j) agree(i, j) += preds[p * K + i] == preds[p * K + j];
        points += P;
    }
    if (points == 0) throw DomainError("no prediction points in the given sessions");
    for (std::size_t i = 0; i < K; ++i) {
        agree(i, i) = 1.0;
        for (std::size_t j = i + 1; j < K; ++j) agree(j, i) = agree(i, j) = agree(i, j) / static_cast<double>(points);
    }
    return agree;
}

}  // namespace fhmm
