#pragma once

#include <cstdint>
#include <vector>

#include "fhmm/ensemble.hpp"
#include "fhmm/hmm.hpp"
#include "fhmm/ingest.hpp"

namespace fhmm {

/// Hidden cycle over `symbols`: state i advances to i + 1 with probability
/// `advance` (else stays), and emits symbols[i] with probability `purity`,
/// spreading the rest uniformly over the other symbols of an M-symbol alphabet.
inline HmmModel cycle_hmm(const std::vector<Symbol>& symbols, std::size_t n_obs, double advance, double purity) {
    const std::size_t N = symbols.size();
    if (N == 0) throw DomainError("cycle needs at least one state");
    Matrix A(N, N), B(N, n_obs);
    for (std::size_t i = 0; i < N; ++i) {
        A(i, i) += 1.0 - advance;
        A(i, (i + 1) % N) += advance;
        for (std::size_t m = 0; m < n_obs; ++m) B(i, m) = (1.0 - purity) / static_cast<double>(n_obs - 1);
        B(i, static_cast<std::size_t>(symbols[i])) = purity;
    }
    std::vector<double> pi(N, 0.0);
    pi[0] = 1.0;
    return make_hmm(A, B, pi);
}

struct BenchmarkData {
    SynthCorpus train;
    SynthCorpus test;
};

inline constexpr std::size_t kBenchmarkTrain = 10000;
inline constexpr std::size_t kBenchmarkTest = 2000;
inline constexpr std::uint64_t kBenchmarkSeed = 20190301;

/// Three seeded attacker profiles over the 19-state alphabet, with
/// disjoint session-length ranges inside 2..300 and a long-tailed overall
/// length histogram.
inline SynthSpec benchmark_spec(std::size_t n_sessions, std::uint64_t seed) {
    auto range = [](std::size_t lo, std::size_t hi, double mean) {
        LengthDistribution d;
        d.min_len = lo;
        d.max_len = hi;
        d.components = {{1.0, mean}};
        return d;
    };
    // Every profile alternates its own actions with session.input (18), so the
    // symbol after an input depends on the hidden phase, not on the last symbol.
    // scanner: client.version, input, login.failed, input
    GeneratorSpec scanner{cycle_hmm({1, 18, 13, 18}, 19, 0.85, 0.9), range(2, 30, 9.0), 0.6};
    // interactive: login.success, input, dir-sudo command, input
    GeneratorSpec interactive{cycle_hmm({14, 18, 4, 18}, 19, 0.85, 0.9), range(31, 100, 50.0), 0.3};
    // dropper: write command, input, file download, input
    GeneratorSpec dropper{cycle_hmm({7, 18, 17, 18}, 19, 0.85, 0.9), range(101, 300, 140.0), 0.1};
    return SynthSpec{{scanner, interactive, dropper}, n_sessions, seed};
}

/// 10,000 training and 2,000 test sessions from one seeded draw.
inline BenchmarkData standard_benchmark(std::uint64_t seed = kBenchmarkSeed) {
    const auto all = synth_corpus(benchmark_spec(kBenchmarkTrain + kBenchmarkTest, seed));
    BenchmarkData out;
    for (std::size_t i = 0; i < all.sessions.size(); ++i) {
        auto& part = i < kBenchmarkTrain ? out.train : out.test;
        part.sessions.push_back(all.sessions[i]);
        part.labels.push_back(all.labels[i]);
    }
    return out;
}

/// Ensemble settings used for the benchmark runs.
inline EnsembleConfig benchmark_config(std::size_t k) {
    EnsembleConfig c;
    c.k = k;
    c.n_hidden = 5;
    c.min_support = kDefaultMinSupport;
    c.base_seed = 7;
    c.fusion.epochs = 10;
    return c;
}

}  // namespace fhmm
