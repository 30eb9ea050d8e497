#include "zeval/rewards.hpp"

#include <algorithm>

#include <json.hpp>

#include "zeval/error.hpp"

namespace zeval {

double response_score(const ClaimCounts& counts) {
    if (counts.total == 0) return 0.0;
    return static_cast<double>(counts.supported) / static_cast<double>(counts.total);
}

double response_score(const AnswerEvaluation& evaluation) { return response_score(claim_counts(evaluation)); }

FormatOutcome format_reward(std::string_view raw, std::size_t k) {
    FormatOutcome out;
    auto parsed = parse_strict(raw, k);
    if (auto* trajectory = std::get_if<EvaluationTrajectory>(&parsed)) {
        out.report = {true, true, true, true, {}};
        out.trajectory = std::move(*trajectory);
        out.reward = 0.0;
    } else {
        out.report = std::get<FormatCheckReport>(std::move(parsed));
        out.reward = kFormatPenalty;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Suffix automaton over the reference tokens.

ReferenceIndex::ReferenceIndex(std::span<const std::string> reference) : reference_length_(reference.size()) {
    states_.reserve(2 * reference.size() + 1);
    states_.push_back(State{});
    int last = 0;
    for (const auto& token : reference) {
        auto [it, inserted] = vocabulary_.try_emplace(token, static_cast<int>(vocabulary_.size()));
        extend(it->second, last);
    }
}

int ReferenceIndex::token_id(const std::string& token) const {
    auto it = vocabulary_.find(token);
    return it == vocabulary_.end() ? -1 : it->second;
}

int ReferenceIndex::transition(int state, int token) const {
    const auto& next = states_[static_cast<std::size_t>(state)].next;
    auto it = std::lower_bound(next.begin(), next.end(), std::pair{token, 0},
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    return (it != next.end() && it->first == token) ? it->second : -1;
}

void ReferenceIndex::set_transition(int state, int token, int target) {
    auto& next = states_[static_cast<std::size_t>(state)].next;
    auto it = std::lower_bound(next.begin(), next.end(), std::pair{token, 0},
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it != next.end() && it->first == token) {
        it->second = target;
    } else {
        next.insert(it, {token, target});
    }
}

void ReferenceIndex::extend(int token, int& last) {
    const int cur = static_cast<int>(states_.size());
    states_.push_back(State{states_[static_cast<std::size_t>(last)].len + 1, -1, {}});
    int p = last;
    while (p != -1 && transition(p, token) == -1) {
        set_transition(p, token, cur);
        p = states_[static_cast<std::size_t>(p)].link;
    }
    if (p == -1) {
        states_[static_cast<std::size_t>(cur)].link = 0;
    } else {
        const int q = transition(p, token);
        if (states_[static_cast<std::size_t>(p)].len + 1 == states_[static_cast<std::size_t>(q)].len) {
            states_[static_cast<std::size_t>(cur)].link = q;
        } else {
            const int clone = static_cast<int>(states_.size());
            State copy = states_[static_cast<std::size_t>(q)];
            copy.len = states_[static_cast<std::size_t>(p)].len + 1;
            states_.push_back(std::move(copy));
            while (p != -1 && transition(p, token) == q) {
                set_transition(p, token, clone);
                p = states_[static_cast<std::size_t>(p)].link;
            }
            states_[static_cast<std::size_t>(q)].link = clone;
            states_[static_cast<std::size_t>(cur)].link = clone;
        }
    }
    last = cur;
}

std::size_t ReferenceIndex::longest_match(std::span<const std::string> span) const {
    int state = 0;
    std::size_t current = 0;
    std::size_t best = 0;
    for (const auto& token : span) {
        const int id = token_id(token);
        if (id < 0) {
            state = 0;
            current = 0;
            continue;
        }
        while (state != 0 && transition(state, id) == -1) {
            state = states_[static_cast<std::size_t>(state)].link;
            current = states_[static_cast<std::size_t>(state)].len;
        }
        const int next = transition(state, id);
        if (next == -1) {
            state = 0;
            current = 0;
        } else {
            state = next;
            ++current;
        }
        best = std::max(best, current);
    }
    return best;
}

std::size_t longest_common_substring_len(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty()) return 0;
    // Index the longer side; scanning is the cheaper pass.
    if (a.size() > b.size()) return ReferenceIndex(a).longest_match(b);
    return ReferenceIndex(b).longest_match(a);
}

std::size_t longest_common_substring_len(const TokenSequence& a, const TokenSequence& b) {
    return longest_common_substring_len(std::span<const std::string>(a.tokens), std::span<const std::string>(b.tokens));
}

double span_grounding(const TokenSequence& span, const ReferenceIndex& reference) {
    if (span.size() < kMinEvidenceTokens) return 0.0;
    return static_cast<double>(reference.longest_match(span.tokens)) / static_cast<double>(span.size());
}

double span_grounding(const TokenSequence& span, const TokenSequence& reference) {
    if (span.size() < kMinEvidenceTokens) return 0.0;
    return static_cast<double>(longest_common_substring_len(span, reference)) / static_cast<double>(span.size());
}

double evidence_reward(const EvaluationTrajectory& trajectory, const TokenSequence& reference,
                       const Tokenizer& tokenizer) {
    const ReferenceIndex index(reference);
    double sum = 0.0;
    std::size_t spans = 0;
    for (const auto& ev : trajectory.evaluations) {
        for (const auto& claim : ev.atomic_claims) {
            for (const auto& span : claim.evidence) {
                sum += span_grounding(tokenizer.tokenize(span), index);
                ++spans;
            }
        }
    }
    return spans == 0 ? 0.0 : sum / static_cast<double>(spans);
}

// ---------------------------------------------------------------------------

void validate_permutation(const std::vector<std::size_t>& order, std::size_t n) {
    if (order.size() != n) {
        throw ContractError("preference order has " + std::to_string(order.size()) + " entries for " +
                            std::to_string(n) + " candidates");
    }
    std::vector<bool> seen(n, false);
    for (auto idx : order) {
        if (idx >= n || seen[idx]) throw ContractError("preference order is not a permutation of candidate indices");
        seen[idx] = true;
    }
}

namespace {

void check_aligned(std::span<const double> scores, std::span<const std::size_t> order) {
    if (scores.size() != order.size()) {
        throw ContractError("accuracy reward: " + std::to_string(scores.size()) + " scores for a preference order of " +
                            std::to_string(order.size()));
    }
    validate_permutation(std::vector<std::size_t>(order.begin(), order.end()), scores.size());
}

}  // namespace

double accuracy_reward(std::span<const double> scores, std::span<const std::size_t> ground_truth_order) {
    check_aligned(scores, ground_truth_order);
    // Strict decrease along a total order is equivalent to the all-pairs condition.
    for (std::size_t i = 1; i < ground_truth_order.size(); ++i) {
        if (!(scores[ground_truth_order[i - 1]] > scores[ground_truth_order[i]])) return 0.0;
    }
    return 1.0;
}

double accuracy_reward_simplified(std::span<const double> scores, std::span<const std::size_t> ground_truth_order) {
    check_aligned(scores, ground_truth_order);
    if (scores.empty()) return 0.0;
    const double top = scores[ground_truth_order.front()];
    for (std::size_t i = 1; i < ground_truth_order.size(); ++i) {
        if (!(top > scores[ground_truth_order[i]])) return 0.0;
    }
    return 1.0;
}

double combined_reward(double format_reward, double accuracy_reward, double evidence_reward) {
    if (format_reward == 0.0 && accuracy_reward == 1.0) return 1.0 + kEvidenceBonusWeight * evidence_reward;
    if (format_reward == 0.0 && accuracy_reward == 0.0) return 0.0;
    return kFormatPenalty;
}

RewardBreakdown score_rollout(std::string_view raw, const RankedResponseSet& candidate_set, const RolloutOptions& options,
                              const Tokenizer& tokenizer) {
    const std::size_t k = candidate_set.candidates.size();
    validate_permutation(candidate_set.preference_order, k);

    RewardBreakdown out;
    auto format = format_reward(raw, k);
    out.format = format.report;
    out.format_reward = format.reward;
    if (!format.trajectory) {
        out.combined_reward = combined_reward(out.format_reward, 0.0, 0.0);
        return out;
    }

    std::vector<double> scores;
    scores.reserve(k);
    for (const auto& ev : format.trajectory->evaluations) scores.push_back(response_score(ev));

    out.accuracy_reward = options.accuracy == AccuracyMode::FullRanking
                              ? accuracy_reward(scores, candidate_set.preference_order)
                              : accuracy_reward_simplified(scores, candidate_set.preference_order);
    out.evidence_reward = evidence_reward(*format.trajectory, tokenizer.tokenize(candidate_set.reference), tokenizer);
    out.combined_reward = combined_reward(out.format_reward, out.accuracy_reward, out.evidence_reward);
    out.scores = std::move(scores);
    return out;
}

nlohmann::json to_json(const RewardBreakdown& breakdown) {
    nlohmann::json j;
    j["format_reward"] = breakdown.format_reward;
    j["evidence_reward"] = breakdown.evidence_reward;
    j["accuracy_reward"] = breakdown.accuracy_reward;
    j["combined_reward"] = breakdown.combined_reward;
    j["scores"] = breakdown.scores ? nlohmann::json(*breakdown.scores) : nlohmann::json(nullptr);
    return j;
}

}  // namespace zeval
