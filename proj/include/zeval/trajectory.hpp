#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace zeval {

struct AtomicClaim {
    std::string claim;
    bool is_supported = false;
    std::vector<std::string> evidence;
    std::string analysis;

    friend bool operator==(const AtomicClaim&, const AtomicClaim&) = default;
};

struct AnswerEvaluation {
    std::size_t answer_index = 0;
    std::vector<AtomicClaim> atomic_claims;

    std::size_t supported_count() const;

    friend bool operator==(const AnswerEvaluation&, const AnswerEvaluation&) = default;
};

/// One parsed judgment. evaluations[i].answer_index == i for every i.
struct EvaluationTrajectory {
    std::vector<AnswerEvaluation> evaluations;
    std::string raw;
};

/// Outcome of the four format requirements, checked in order. When the string
/// does not parse, the remaining flags are false and unknown.
struct FormatCheckReport {
    bool parseable = false;
    bool candidates_match = false;
    bool fields_complete = false;
    bool supported_have_evidence = false;
    std::string detail;

    bool passed() const noexcept { return parseable && candidates_match && fields_complete && supported_have_evidence; }
};

using StrictParse = std::variant<EvaluationTrajectory, FormatCheckReport>;

/// Required keys of the canonical schema.
inline constexpr std::string_view kAnswerIndexKey = "answer_index";
inline constexpr std::string_view kAtomicClaimsKey = "atomic_claims";
inline constexpr std::string_view kClaimKey = "claim";
inline constexpr std::string_view kIsSupportedKey = "is_supported";
inline constexpr std::string_view kEvidenceKey = "evidence";
inline constexpr std::string_view kAnalysisKey = "analysis";

/// Validates raw judge output against the canonical schema for k candidates.
/// Never throws on malformed input; failures come back as a FormatCheckReport.
StrictParse parse_strict(std::string_view raw, std::size_t k);

/// Runs the four checks and always returns the report (passed() iff parse_strict succeeds).
FormatCheckReport check_format(std::string_view raw, std::size_t k);

nlohmann::json to_json(const EvaluationTrajectory& trajectory);
std::string serialize(const EvaluationTrajectory& trajectory);

struct ClaimCounts {
    std::size_t supported = 0;
    std::size_t total = 0;

    friend bool operator==(const ClaimCounts&, const ClaimCounts&) = default;
};

ClaimCounts claim_counts(const AnswerEvaluation& evaluation);

/// Per-answer counts recovered from arbitrary text. Answers missing from the
/// map could not be recovered.
struct LenientExtraction {
    enum class Route { None, BracketScan, FieldScan };

    std::map<std::size_t, ClaimCounts> answers;
    Route route = Route::None;

    std::optional<ClaimCounts> answer(std::size_t index) const;
};

LenientExtraction extract_lenient(std::string_view raw);

struct TrajectoryStats {
    std::optional<double> mean_claims_per_response;
    std::optional<double> mean_grounding_degree;
    std::size_t responses = 0;
    std::size_t evidence_spans = 0;
};

/// Mean claim count over all answer evaluations and mean span grounding over
/// all evidence spans. references[i] is the reference text of trajectories[i].
TrajectoryStats trajectory_stats(const std::vector<EvaluationTrajectory>& trajectories,
                                 const std::vector<std::string>& references);

}  // namespace zeval
