#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace zeval {

struct Candidate {
    std::string text;
    std::optional<double> alpha;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// A question, its reference and candidate responses with a strict preference
/// order. preference_order[0] is the index of the most preferred candidate.
struct RankedResponseSet {
    std::string question;
    std::string reference;
    std::vector<Candidate> candidates;
    std::vector<std::size_t> preference_order;

    /// Builds the order from descending alpha. Throws ContractError on fewer than
    /// two candidates or repeated alpha values.
    static RankedResponseSet from_alphas(std::string question, std::string reference,
                                         std::vector<Candidate> candidates);

    /// Uses an explicit order. Throws ContractError unless it is a permutation
    /// of the candidate indices and there are at least two candidates.
    static RankedResponseSet from_order(std::string question, std::string reference,
                                        std::vector<Candidate> candidates,
                                        std::vector<std::size_t> preference_order);

    /// Restriction to a subset of candidate indices; the induced order is kept.
    RankedResponseSet restricted_to(const std::vector<std::size_t>& subset) const;

    friend bool operator==(const RankedResponseSet&, const RankedResponseSet&) = default;
};

/// Throws ContractError unless order is a permutation of 0..n-1.
void validate_permutation(const std::vector<std::size_t>& order, std::size_t n);

nlohmann::json to_json(const RankedResponseSet& set);
RankedResponseSet ranked_set_from_json(const nlohmann::json& j);

}  // namespace zeval
