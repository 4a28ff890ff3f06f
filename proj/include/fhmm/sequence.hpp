#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fhmm/error.hpp"

namespace fhmm {

using Symbol = int;

/// One attack session: the ordered observation symbols plus its id.
struct StateSequence {
    std::vector<Symbol> symbols;
    std::string session_id;
    std::vector<double> timestamps;  // optional, seconds; empty or one per symbol

    std::size_t size() const noexcept { return symbols.size(); }

    friend bool operator==(const StateSequence&, const StateSequence&) = default;
};

inline void check_symbols(std::span<const Symbol> symbols, std::size_t n_obs) {
    if (symbols.empty()) throw DomainError("sequence must contain at least one symbol");
    for (std::size_t t = 0; t < symbols.size(); ++t) {
        const Symbol s = symbols[t];
        if (s < 0 || static_cast<std::size_t>(s) >= n_obs)
            throw DomainError("symbol " + std::to_string(s) + " at position " + std::to_string(t) +
                              " outside [0, " + std::to_string(n_obs) + ")");
    }
}

inline void check_sequence(const StateSequence& seq, std::size_t n_obs) {
    check_symbols(seq.symbols, n_obs);
    if (!seq.timestamps.empty() && seq.timestamps.size() != seq.symbols.size())
        throw DomainError("session " + seq.session_id + ": timestamp count differs from symbol count");
}

inline std::size_t max_length(std::span<const StateSequence> sessions) {
    std::size_t m = 0;
    for (const auto& s : sessions) m = std::max(m, s.size());
    return m;
}

}  // namespace fhmm
