#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fhmm/error.hpp"
#include "fhmm/linalg.hpp"
#include "fhmm/sequence.hpp"

namespace fhmm {

inline constexpr std::size_t kDefaultK = 38;
inline constexpr std::size_t kDefaultMinSupport = 10;
inline constexpr std::size_t kLargeKWarning = 50;

/// Sessions sharing one exact length. `members` index the input session list.
struct LengthGroup {
    std::size_t length = 0;
    std::vector<std::size_t> members;
};

/// Symbol occupancy of all sessions of one length, normalized to sum to 1.
struct FrequencyArray {
    std::size_t length_key = 0;
    std::vector<double> probs;
    std::size_t support = 0;

    friend bool operator==(const FrequencyArray&, const FrequencyArray&) = default;
};

struct PartitionPlan {
    std::size_t n_obs = 0;
    std::size_t total_sessions = 0;
    std::vector<LengthGroup> groups;           // ascending length
    std::vector<std::vector<std::string>> group_session_ids;
    std::vector<FrequencyArray> freq_arrays;   // parallel to groups
    Matrix distances;                          // G x G Euclidean
    // Greedy selection order of each group (1 = first); 0 for groups below min_support.
    std::vector<std::size_t> ranks;
    std::vector<std::size_t> selected_lengths;  // in selection order
    double coverage = 0.0;
    std::size_t k = 0;
    std::size_t min_support = kDefaultMinSupport;
    std::vector<std::string> warnings;

    std::size_t group_index(std::size_t length) const {
        for (std::size_t g = 0; g < groups.size(); ++g)
            if (groups[g].length == length) return g;
        throw DomainError("no group of length " + std::to_string(length));
    }
};

/// Buckets sessions by exact length; groups come back in ascending length
/// order and keep input order within a group.
inline std::vector<LengthGroup> group_by_length(std::span<const StateSequence> sessions) {
    std::map<std::size_t, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < sessions.size(); ++i) buckets[sessions[i].size()].push_back(i);
    std::vector<LengthGroup> out;
    out.reserve(buckets.size());
    for (auto& [len, members] : buckets) out.push_back({len, std::move(members)});
    return out;
}

namespace detail {

inline FrequencyArray frequency_of(std::span<const StateSequence> sessions, std::span<const std::size_t> members,
                                   std::size_t n_obs) {
    if (members.empty()) throw DomainError("frequency array of an empty group");
    std::vector<std::size_t> counts(n_obs, 0);
    std::size_t total = 0;
    const std::size_t length = sessions[members.front()].size();
    for (std::size_t idx : members) {
        const auto& s = sessions[idx];
        if (s.size() != length) throw DomainError("frequency array group mixes session lengths");
        check_sequence(s, n_obs);
        for (Symbol x : s.symbols) ++counts[static_cast<std::size_t>(x)];
        total += s.size();
    }
    FrequencyArray f{length, std::vector<double>(n_obs), members.size()};
    for (std::size_t k = 0; k < n_obs; ++k) f.probs[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    return f;
}

}  // namespace detail

inline FrequencyArray frequency_array(std::span<const StateSequence> group, std::size_t n_obs) {
    std::vector<std::size_t> members(group.size());
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
    return detail::frequency_of(group, members, n_obs);
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline Matrix dissimilarity_matrix(std::span<const FrequencyArray> arrays) {
    if (arrays.empty()) throw DomainError("dissimilarity matrix needs at least one frequency array");
    const std::size_t G = arrays.size();
    const std::size_t M = arrays.front().probs.size();
    for (const auto& f : arrays)
        if (f.probs.size() != M) throw DomainError("frequency arrays disagree on the number of symbols");
    Matrix d(G, G);
    for (std::size_t i = 0; i < G; ++i)
        for (std::size_t j = i + 1; j < G; ++j) d(i, j) = d(j, i) = euclidean(arrays[i].probs, arrays[j].probs);
    return d;
}

/// Groups, frequency arrays and distances, with nothing selected yet.
inline PartitionPlan build_partition(std::span<const StateSequence> sessions, std::size_t n_obs) {
    if (sessions.empty()) throw DomainError("cannot partition an empty session list");
    PartitionPlan plan;
    plan.n_obs = n_obs;
    plan.total_sessions = sessions.size();
    plan.groups = group_by_length(sessions);
    for (const auto& g : plan.groups) {
        plan.freq_arrays.push_back(detail::frequency_of(sessions, g.members, n_obs));
        auto& ids = plan.group_session_ids.emplace_back();
        for (std::size_t idx : g.members) ids.push_back(sessions[idx].session_id);
    }
    plan.distances = dissimilarity_matrix(plan.freq_arrays);
    plan.ranks.assign(plan.groups.size(), 0);
    return plan;
}

/// Greedy diverse, high-coverage selection of `k` length groups.
///
/// Among groups with at least `min_support` sessions, start from the one
/// with the largest support, then repeatedly add the group maximizing
/// (distance to the nearest selected group) * log(1 + support). Ties go to
/// the shorter length. Every eligible group receives a rank, so the
/// selection for k is a prefix of the selection for k + 1.
inline PartitionPlan select_k(PartitionPlan plan, std::size_t k, std::size_t min_support = kDefaultMinSupport) {
    if (k == 0) throw DomainError("k must be at least 1");
    const std::size_t G = plan.groups.size();
    std::vector<std::size_t> eligible;
    for (std::size_t g = 0; g < G; ++g)
        if (plan.freq_arrays[g].support >= min_support) eligible.push_back(g);
    if (eligible.size() < k)
        throw SelectionError(eligible.size(), "fewer eligible length groups than requested k=" + std::to_string(k) +
                                                  " with min_support=" + std::to_string(min_support));

    plan.k = k;
    plan.min_support = min_support;
    plan.ranks.assign(G, 0);
    plan.selected_lengths.clear();
    plan.warnings.clear();
    if (k > kLargeKWarning)
        plan.warnings.push_back("k=" + std::to_string(k) + " exceeds " + std::to_string(kLargeKWarning) +
                                "; large ensembles tend to generalize poorly");

    // Groups are in ascending length order, so strict comparisons keep the shorter length on ties.
    std::size_t seed = eligible.front();
    for (std::size_t g : eligible)
        if (plan.freq_arrays[g].support > plan.freq_arrays[seed].support) seed = g;

    std::vector<double> nearest(G, INFINITY);
    auto take = [&](std::size_t g, std::size_t rank) {
        plan.ranks[g] = rank;
        for (std::size_t h : eligible) nearest[h] = std::min(nearest[h], plan.distances(g, h));
    };
    take(seed, 1);
    for (std::size_t rank = 2; rank <= eligible.size(); ++rank) {
        std::size_t best = G;
        double best_score = -1.0;
        for (std::size_t g : eligible) {
            if (plan.ranks[g] != 0) continue;
            const double score = nearest[g] * std::log1p(static_cast<double>(plan.freq_arrays[g].support));
            if (score > best_score) {
                best_score = score;
                best = g;
            }
        }
        take(best, rank);
    }

    std::vector<std::size_t> order(G, G);
    for (std::size_t g = 0; g < G; ++g)
        if (plan.ranks[g] != 0) order[plan.ranks[g] - 1] = g;
    std::size_t covered = 0;
    for (std::size_t r = 0; r < k; ++r) {
        plan.selected_lengths.push_back(plan.groups[order[r]].length);
        covered += plan.freq_arrays[order[r]].support;
    }
    plan.coverage = static_cast<double>(covered) / static_cast<double>(plan.total_sessions);
    return plan;
}

inline PartitionPlan partition(std::span<const StateSequence> sessions, std::size_t n_obs, std::size_t k,
                               std::size_t min_support = kDefaultMinSupport) {
    return select_k(build_partition(sessions, n_obs), k, min_support);
}

/// Sessions of the group with the given length, in input order.
inline std::vector<StateSequence> group_sessions(const PartitionPlan& plan, std::span<const StateSequence> sessions,
                                                 std::size_t length) {
    std::vector<StateSequence> out;
    for (std::size_t idx : plan.groups[plan.group_index(length)].members) out.push_back(sessions[idx]);
    return out;
}

struct Projection2d {
    std::vector<std::array<double, 2>> points;
    std::array<double, 2> explained_variance{0.0, 0.0};
    // Set when fewer than two principal directions carry variance.
    bool rank_deficient = false;
};

/// PCA of the mean-centred probability vectors onto the top two components.
///
/// Covariance is normalized by G. Component signs are fixed so the
/// largest-magnitude loading is positive.
inline Projection2d project_2d(std::span<const FrequencyArray> arrays) {
    if (arrays.size() < 2) throw DomainError("projection needs at least two frequency arrays");
    const auto G = static_cast<Eigen::Index>(arrays.size());
    const auto M = static_cast<Eigen::Index>(arrays.front().probs.size());
    Eigen::MatrixXd X(G, M);
    for (Eigen::Index i = 0; i < G; ++i) {
        if (static_cast<Eigen::Index>(arrays[static_cast<std::size_t>(i)].probs.size()) != M)
            throw DomainError("frequency arrays disagree on the number of symbols");
        for (Eigen::Index j = 0; j < M; ++j) X(i, j) = arrays[static_cast<std::size_t>(i)].probs[static_cast<std::size_t>(j)];
    }
    X.rowwise() -= X.colwise().mean();
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(G);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const auto& values = solver.eigenvalues();  // ascending
    const auto& vectors = solver.eigenvectors();

    Projection2d out;
    out.points.assign(arrays.size(), {0.0, 0.0});
    const double top = M >= 1 ? std::max(values(M - 1), 0.0) : 0.0;
    const double second = M >= 2 ? std::max(values(M - 2), 0.0) : 0.0;
    const double eps = 1e-12;
    const bool has_first = top > eps;
    const bool has_second = has_first && second > eps * std::max(1.0, top);
    out.rank_deficient = !has_second;
    if (!has_first) return out;

    for (int c = 0; c < (has_second ? 2 : 1); ++c) {
        Eigen::VectorXd v = vectors.col(M - 1 - c);
        Eigen::Index pivot;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0) v = -v;
        const Eigen::VectorXd proj = X * v;
        for (Eigen::Index i = 0; i < G; ++i) out.points[static_cast<std::size_t>(i)][c] = proj(i);
        out.explained_variance[c] = values(M - 1 - c);
    }
    return out;
}

}  // namespace fhmm
