#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "zeval/ranked_set.hpp"
#include "zeval/tokenize.hpp"

namespace zeval {

inline constexpr std::size_t kDefaultMaxReferenceTokens = 6000;
inline constexpr std::size_t kDefaultSampleSize = 5500;

struct CorpusInstance {
    std::string question;
    std::string passage;
    nlohmann::json metadata;  // null when absent
};

/// Drops instances whose passage exceeds max_ref_tokens, then draws n of the
/// survivors uniformly without replacement (survivor order is preserved).
/// Throws ContractError when fewer than n survive.
std::vector<CorpusInstance> filter_and_sample(const std::vector<CorpusInstance>& corpus, std::size_t max_ref_tokens,
                                              std::size_t n, std::uint64_t seed,
                                              const Tokenizer& tokenizer = default_tokenizer());

struct EpochStage {
    std::size_t epoch = 0;
    std::size_t k = 0;
};

struct EpochPlan {
    std::size_t epoch_index = 0;
    std::size_t candidate_set_size = 0;
    std::vector<RankedResponseSet> instances;
};

/// Parses "1:3,2:4" into stages. Throws ContractError on malformed text.
std::vector<EpochStage> parse_plan(const std::string& text);

/// For each stage, every ranked set is restricted to a uniformly random
/// size-k subset (or kept whole when k equals its size) and its candidates are
/// presented in shuffled order; preference_order is remapped accordingly.
/// Draws depend only on (seed, epoch, question position).
std::vector<EpochPlan> curriculum_schedule(const std::vector<RankedResponseSet>& ranked_sets,
                                           const std::vector<EpochStage>& plan, std::uint64_t seed);

enum class SftRole { Pairwise, Triplet, Quadruplet };

const char* to_string(SftRole role) noexcept;

struct SftInstance {
    std::string question;
    std::string reference;
    /// Candidate texts in presentation order (shuffled, seeded).
    std::vector<std::string> candidates;
    /// Indices into candidates, most preferred first.
    std::vector<std::size_t> target_ranking;
    SftRole role = SftRole::Pairwise;
};

struct SftQuestionCounts {
    std::size_t pairwise = 0;
    std::size_t triplet = 0;
    std::size_t quadruplet = 0;
};

/// Question counts per role for n questions: pairwise floor(2n/17), triplet
/// floor(3n/17), remainder quadruplet, which balances 6, 4 and 1 instances per
/// question respectively.
SftQuestionCounts sft_question_counts(std::size_t n);

struct SftPartition {
    SftQuestionCounts questions;
    std::vector<SftInstance> pairwise;
    std::vector<SftInstance> triplet;
    std::vector<SftInstance> quadruplet;
    /// Instance counts before duplicate removal.
    std::size_t raw_pairwise = 0;
    std::size_t raw_triplet = 0;
    std::size_t raw_quadruplet = 0;
};

/// Every size-r subset of a 4-candidate set (r = 2, 3, 4 by role), candidates
/// in stored order, targets induced from the parent preference order.
std::vector<SftInstance> expand_question(const RankedResponseSet& set, SftRole role);

/// Randomly assigns questions to roles (counts from sft_question_counts) and
/// expands them. Exact duplicate instances are dropped, then each instance's
/// presentation order is shuffled. Throws ContractError
/// for fewer than 3 questions or a set without exactly 4 candidates.
SftPartition sft_partition(const std::vector<RankedResponseSet>& questions, std::uint64_t seed);

nlohmann::json to_json(const SftInstance& instance);
nlohmann::json to_json(const CorpusInstance& instance);
CorpusInstance corpus_instance_from_json(const nlohmann::json& j);

}  // namespace zeval
