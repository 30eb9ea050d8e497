#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zeval/trajectory.hpp"

namespace zeval {

/// An evaluator score, optionally with the exact claim ratio it came from.
/// Ties between two scores that both carry ratios are decided exactly.
struct Score {
    double value = 0.0;
    std::optional<ClaimCounts> ratio;

    static Score from_counts(const ClaimCounts& counts);
};

/// <0, 0, >0 as a is below, equal to, above b.
int compare_scores(const Score& a, const Score& b);

struct FaithfulnessRecord {
    Score good;
    Score poor;
};

struct FaithfulnessAgreement {
    double best = 0.0;
    double middle = 0.0;
    double worst = 0.0;
    std::size_t n = 0;
};

/// best: share with good >= poor; worst: share with good > poor; middle
/// counts ties as half. Throws ContractError on empty input.
FaithfulnessAgreement faithfulness_agreement(std::span<const FaithfulnessRecord> records);

/// Relative preference of the second response over the first.
int label_to_h(std::string_view label);

struct CorrectnessRecord {
    int h = 0;
    double e_raw = 0.0;
};

struct Correlations {
    double pearson = 0.0;
    double spearman = 0.0;
    double kendall = 0.0;
};

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average (mid) ranks.
double spearman(std::span<const double> x, std::span<const double> y);
/// Tie-adjusted Kendall tau-b in O(n log n).
double kendall_tau_b(std::span<const double> x, std::span<const double> y);
/// 1-based ranks, ties share their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson, Spearman and Kendall tau-b between h and e_raw (the normalisation
/// applied to e_raw is the identity; all three are invariant to positive
/// affine maps). Throws ContractError for n < 3 or a constant side.
Correlations correctness_correlations(std::span<const CorrectnessRecord> records);

/// Two-sided paired sign-flip permutation test on the mean difference, with
/// the +1-smoothed Monte Carlo p-value (count + 1) / (iterations + 1).
double significance_test(std::span<const double> a, std::span<const double> b, std::size_t iterations,
                         std::uint64_t seed);

nlohmann::json to_json(const FaithfulnessAgreement& agreement);
nlohmann::json to_json(const Correlations& correlations);

}  // namespace zeval
