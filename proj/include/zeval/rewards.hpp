#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "zeval/ranked_set.hpp"
#include "zeval/tokenize.hpp"
#include "zeval/trajectory.hpp"

namespace zeval {

inline constexpr double kFormatPenalty = -0.5;
inline constexpr double kEvidenceBonusWeight = 0.5;
/// Evidence spans shorter than this (in tokens) earn no grounding.
inline constexpr std::size_t kMinEvidenceTokens = 10;

struct RewardBreakdown {
    double format_reward = 0.0;
    double evidence_reward = 0.0;
    double accuracy_reward = 0.0;
    double combined_reward = 0.0;
    /// Absent when the rollout failed the format check.
    std::optional<std::vector<double>> scores;
    FormatCheckReport format;
};

/// Fraction of supported claims; 0 for an evaluation without claims.
double response_score(const AnswerEvaluation& evaluation);
double response_score(const ClaimCounts& counts);

struct FormatOutcome {
    double reward = 0.0;
    FormatCheckReport report;
    std::optional<EvaluationTrajectory> trajectory;
};

FormatOutcome format_reward(std::string_view raw, std::size_t k);

/// Length in tokens of the longest contiguous run shared by a and b. Builds a
/// suffix automaton over the longer sequence: O(|a| + |b|) expected.
std::size_t longest_common_substring_len(std::span<const std::string> a, std::span<const std::string> b);
std::size_t longest_common_substring_len(const TokenSequence& a, const TokenSequence& b);

/// Reusable matcher for many spans against one reference.
class ReferenceIndex {
public:
    explicit ReferenceIndex(std::span<const std::string> reference);
    explicit ReferenceIndex(const TokenSequence& reference) : ReferenceIndex(std::span<const std::string>(reference.tokens)) {}

    std::size_t longest_match(std::span<const std::string> span) const;
    std::size_t reference_length() const noexcept { return reference_length_; }

private:
    struct State {
        std::size_t len = 0;
        int link = -1;
        // Sorted by token id.
        std::vector<std::pair<int, int>> next;
    };

    int token_id(const std::string& token) const;
    int transition(int state, int token) const;
    void set_transition(int state, int token, int target);
    void extend(int token, int& last);

    std::vector<State> states_;
    std::unordered_map<std::string, int> vocabulary_;
    std::size_t reference_length_ = 0;
};

/// 0 for spans under kMinEvidenceTokens, otherwise LCS(span, reference) / |span|.
double span_grounding(const TokenSequence& span, const TokenSequence& reference);
double span_grounding(const TokenSequence& span, const ReferenceIndex& reference);

/// Mean span grounding over every evidence span of the trajectory; 0 without spans.
double evidence_reward(const EvaluationTrajectory& trajectory, const TokenSequence& reference,
                       const Tokenizer& tokenizer = default_tokenizer());

/// 1 iff every preferred response scores strictly higher than every less
/// preferred one. Throws ContractError on a length mismatch or a non-permutation.
double accuracy_reward(std::span<const double> scores, std::span<const std::size_t> ground_truth_order);

/// 1 iff the top-preferred response strictly outscores every other response.
double accuracy_reward_simplified(std::span<const double> scores, std::span<const std::size_t> ground_truth_order);

double combined_reward(double format_reward, double accuracy_reward, double evidence_reward);

enum class AccuracyMode { FullRanking, TopOnly };

struct RolloutOptions {
    AccuracyMode accuracy = AccuracyMode::FullRanking;
};

RewardBreakdown score_rollout(std::string_view raw, const RankedResponseSet& candidate_set,
                              const RolloutOptions& options = {},
                              const Tokenizer& tokenizer = default_tokenizer());

/// Flat object: format_reward, evidence_reward, accuracy_reward, combined_reward, scores.
nlohmann::json to_json(const RewardBreakdown& breakdown);

}  // namespace zeval
