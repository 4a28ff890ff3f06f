#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fhmm/error.hpp"
#include "fhmm/linalg.hpp"
#include "fhmm/sequence.hpp"

namespace fhmm {

/// First-order chain over the observed symbols.
struct MarkovChainModel {
    std::size_t n_obs = 0;
    Matrix transitions;  // M x M
    std::vector<double> init;
    double smoothing = 1.0;

    friend bool operator==(const MarkovChainModel&, const MarkovChainModel&) = default;
};

/// Additive-smoothed maximum-likelihood estimate.
///
/// A source symbol with no outgoing counts and zero smoothing gets a
/// uniform row; fitting fails only when no transition is observed at all.
inline MarkovChainModel fit_markov(std::span<const StateSequence> sequences, std::size_t n_obs,
                                   double smoothing = 1.0) {
    if (sequences.empty()) throw DomainError("Markov fit needs at least one sequence");
    if (n_obs == 0) throw DomainError("n_obs must be positive");
    if (!(smoothing >= 0.0)) throw DomainError("smoothing must be non-negative");

    MarkovChainModel model{n_obs, Matrix(n_obs, n_obs), std::vector<double>(n_obs, 0.0), smoothing};
    Matrix counts(n_obs, n_obs);
    std::vector<double> first(n_obs, 0.0);
    std::size_t n_transitions = 0;
    bool has_pair = false;
    for (const auto& seq : sequences) {
        check_sequence(seq, n_obs);
        has_pair = has_pair || seq.size() >= 2;
        first[static_cast<std::size_t>(seq.symbols.front())] += 1.0;
        for (std::size_t t = 1; t < seq.size(); ++t) {
            counts(static_cast<std::size_t>(seq.symbols[t - 1]), static_cast<std::size_t>(seq.symbols[t])) += 1.0;
            ++n_transitions;
        }
    }
    if (!has_pair) throw DomainError("Markov fit needs a sequence of length >= 2");
    if (n_transitions == 0 && smoothing == 0.0) throw EstimationError("no transitions observed and smoothing is 0");

    const double m = static_cast<double>(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i) {
        const double row_total = sum(counts.row(i));
        const double denom = row_total + m * smoothing;
        for (std::size_t j = 0; j < n_obs; ++j)
            model.transitions(i, j) = denom > 0.0 ? (counts(i, j) + smoothing) / denom : 1.0 / m;
    }
    const double first_total = sum(first) + m * smoothing;
    for (std::size_t j = 0; j < n_obs; ++j) model.init[j] = (first[j] + smoothing) / first_total;
    return model;
}

/// argmax of the transition row of the last prefix symbol; lowest index on ties.
inline Symbol predict_next_markov(const MarkovChainModel& model, std::span<const Symbol> prefix) {
    check_symbols(prefix, model.n_obs);
    return static_cast<Symbol>(argmax(model.transitions.row(static_cast<std::size_t>(prefix.back()))));
}

inline Symbol predict_next_markov(const MarkovChainModel& model, const StateSequence& prefix) {
    return predict_next_markov(model, std::span<const Symbol>(prefix.symbols));
}

}  // namespace fhmm
