#include "zeval/trajectory.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <json.hpp>

#include "zeval/error.hpp"
#include "zeval/rewards.hpp"

namespace zeval {

using nlohmann::json;

std::size_t AnswerEvaluation::supported_count() const {
    return static_cast<std::size_t>(
        std::count_if(atomic_claims.begin(), atomic_claims.end(), [](const AtomicClaim& c) { return c.is_supported; }));
}

ClaimCounts claim_counts(const AnswerEvaluation& evaluation) {
    return {evaluation.supported_count(), evaluation.atomic_claims.size()};
}

namespace {

std::optional<json> parse_json(std::string_view raw) {
    json doc = json::parse(raw.begin(), raw.end(), nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) return std::nullopt;
    return doc;
}

std::optional<std::size_t> index_of(const json& item) {
    if (!item.is_object()) return std::nullopt;
    auto it = item.find(kAnswerIndexKey);
    if (it == item.end()) return std::nullopt;
    if (it->is_number_unsigned()) return it->get<std::size_t>();
    if (it->is_number_integer() && it->get<long long>() >= 0) return static_cast<std::size_t>(it->get<long long>());
    return std::nullopt;
}

bool claim_complete(const json& c) {
    if (!c.is_object()) return false;
    auto claim = c.find(kClaimKey);
    auto sup = c.find(kIsSupportedKey);
    auto ev = c.find(kEvidenceKey);
    auto an = c.find(kAnalysisKey);
    if (claim == c.end() || sup == c.end() || ev == c.end() || an == c.end()) return false;
    if (!claim->is_string() || claim->get_ref<const std::string&>().empty()) return false;
    if (!sup->is_boolean() || !an->is_string() || !ev->is_array()) return false;
    return std::all_of(ev->begin(), ev->end(), [](const json& e) { return e.is_string(); });
}

bool item_complete(const json& item) {
    if (!index_of(item)) return false;
    auto claims = item.find(kAtomicClaimsKey);
    if (claims == item.end() || !claims->is_array()) return false;
    return std::all_of(claims->begin(), claims->end(), claim_complete);
}

// Requirement 4 is judged on whatever claims are readable; incomplete claims
// are the concern of requirement 3.
bool item_supported_have_evidence(const json& item) {
    if (!item.is_object()) return true;
    auto claims = item.find(kAtomicClaimsKey);
    if (claims == item.end() || !claims->is_array()) return true;
    for (const auto& c : *claims) {
        if (!c.is_object()) continue;
        auto sup = c.find(kIsSupportedKey);
        if (sup == c.end() || !sup->is_boolean() || !sup->get<bool>()) continue;
        auto ev = c.find(kEvidenceKey);
        if (ev == c.end() || !ev->is_array() || ev->empty()) return false;
    }
    return true;
}

FormatCheckReport run_checks(const std::optional<json>& doc, std::size_t k) {
    FormatCheckReport report;
    if (!doc || !doc->is_array()) {
        report.detail = doc ? "top-level value is not a list" : "not valid JSON";
        return report;
    }
    report.parseable = true;
    const json& list = *doc;

    report.candidates_match = list.size() == k;
    if (report.candidates_match) {
        std::set<std::size_t> seen;
        for (const auto& item : list) {
            if (auto idx = index_of(item)) {
                if (*idx >= k || !seen.insert(*idx).second) report.candidates_match = false;
            }
        }
    }
    if (!report.candidates_match && report.detail.empty()) {
        report.detail = "list items do not correspond to the " + std::to_string(k) + " candidates";
    }

    report.fields_complete = std::all_of(list.begin(), list.end(), item_complete);
    if (!report.fields_complete && report.detail.empty()) report.detail = "missing or mistyped required field";

    report.supported_have_evidence = std::all_of(list.begin(), list.end(), item_supported_have_evidence);
    if (!report.supported_have_evidence && report.detail.empty()) report.detail = "supported claim without evidence";
    return report;
}

AnswerEvaluation to_evaluation(const json& item) {
    AnswerEvaluation ev;
    ev.answer_index = *index_of(item);
    for (const auto& c : item.at(kAtomicClaimsKey)) {
        AtomicClaim claim;
        claim.claim = c.at(kClaimKey).get<std::string>();
        claim.is_supported = c.at(kIsSupportedKey).get<bool>();
        claim.evidence = c.at(kEvidenceKey).get<std::vector<std::string>>();
        claim.analysis = c.at(kAnalysisKey).get<std::string>();
        ev.atomic_claims.push_back(std::move(claim));
    }
    return ev;
}

}  // namespace

FormatCheckReport check_format(std::string_view raw, std::size_t k) { return run_checks(parse_json(raw), k); }

StrictParse parse_strict(std::string_view raw, std::size_t k) {
    if (k == 0) throw ContractError("parse_strict: candidate count must be at least 1");
    const auto doc = parse_json(raw);
    auto report = run_checks(doc, k);
    if (!report.passed()) return report;

    EvaluationTrajectory trajectory;
    trajectory.raw = std::string(raw);
    trajectory.evaluations.reserve(k);
    for (const auto& item : *doc) trajectory.evaluations.push_back(to_evaluation(item));
    std::sort(trajectory.evaluations.begin(), trajectory.evaluations.end(),
              [](const AnswerEvaluation& a, const AnswerEvaluation& b) { return a.answer_index < b.answer_index; });
    return trajectory;
}

json to_json(const EvaluationTrajectory& trajectory) {
    json list = json::array();
    for (const auto& ev : trajectory.evaluations) {
        json claims = json::array();
        for (const auto& c : ev.atomic_claims) {
            claims.push_back({{kClaimKey, c.claim},
                              {kIsSupportedKey, c.is_supported},
                              {kEvidenceKey, c.evidence},
                              {kAnalysisKey, c.analysis}});
        }
        list.push_back({{kAnswerIndexKey, ev.answer_index}, {kAtomicClaimsKey, std::move(claims)}});
    }
    return list;
}

std::string serialize(const EvaluationTrajectory& trajectory) { return to_json(trajectory).dump(); }

std::optional<ClaimCounts> LenientExtraction::answer(std::size_t index) const {
    auto it = answers.find(index);
    if (it == answers.end()) return std::nullopt;
    return it->second;
}

namespace {

// End of the bracketed value opening at `open`, honouring JSON strings.
std::optional<std::size_t> matching_close(std::string_view s, std::size_t open) {
    std::vector<char> stack;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char ch = s[i];
        if (in_string) {
            if (ch == '\\') {
                ++i;
            } else if (ch == '"') {
                in_string = false;
            }
            continue;
        }
        switch (ch) {
            case '"': in_string = true; break;
            case '[': stack.push_back(']'); break;
            case '{': stack.push_back('}'); break;
            case ']':
            case '}':
                if (stack.empty() || stack.back() != ch) return std::nullopt;
                stack.pop_back();
                if (stack.empty()) return i;
                break;
            default: break;
        }
    }
    return std::nullopt;
}

std::optional<ClaimCounts> counts_from_item(const json& item) {
    if (!item.is_object()) return std::nullopt;
    auto claims = item.find(kAtomicClaimsKey);
    if (claims == item.end() || !claims->is_array()) return std::nullopt;
    ClaimCounts counts;
    for (const auto& c : *claims) {
        if (!c.is_object()) continue;
        auto sup = c.find(kIsSupportedKey);
        if (sup == c.end() || !sup->is_boolean()) continue;
        ++counts.total;
        if (sup->get<bool>()) ++counts.supported;
    }
    return counts;
}

std::map<std::size_t, ClaimCounts> counts_from_list(const json& list) {
    std::map<std::size_t, ClaimCounts> out;
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
        const auto& item = list[pos];
        auto counts = counts_from_item(item);
        if (!counts) continue;
        const std::size_t idx = index_of(item).value_or(pos);
        out.emplace(idx, *counts);
    }
    return out;
}

std::map<std::size_t, ClaimCounts> bracket_scan(std::string_view raw) {
    std::map<std::size_t, ClaimCounts> best;
    for (std::size_t open = raw.find('['); open != std::string_view::npos; open = raw.find('[', open + 1)) {
        auto close = matching_close(raw, open);
        if (!close) continue;
        auto doc = parse_json(raw.substr(open, *close - open + 1));
        if (!doc || !doc->is_array()) continue;
        auto found = counts_from_list(*doc);
        if (found.empty()) continue;
        if (found.size() > best.size()) best = std::move(found);
        // Lists nested inside a recovered list are part of it.
        open = *close;
    }
    return best;
}

std::map<std::size_t, ClaimCounts> field_scan(std::string_view raw) {
    static const std::regex index_re(R"re("answer_index"\s*:\s*(\d+))re");
    static const std::regex supported_re(R"re("is_supported"\s*:\s*(true|false))re");
    const std::string text(raw);

    std::vector<std::pair<std::size_t, std::size_t>> anchors;  // (offset, index)
    for (auto it = std::sregex_iterator(text.begin(), text.end(), index_re); it != std::sregex_iterator(); ++it) {
        anchors.emplace_back(static_cast<std::size_t>(it->position(0)), std::stoul((*it)[1].str()));
    }
    std::map<std::size_t, ClaimCounts> out;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        const std::size_t begin = anchors[a].first;
        const std::size_t end = a + 1 < anchors.size() ? anchors[a + 1].first : text.size();
        ClaimCounts counts;
        for (auto it = std::sregex_iterator(text.begin() + static_cast<std::ptrdiff_t>(begin),
                                            text.begin() + static_cast<std::ptrdiff_t>(end), supported_re);
             it != std::sregex_iterator(); ++it) {
            ++counts.total;
            if ((*it)[1].str() == "true") ++counts.supported;
        }
        out.emplace(anchors[a].second, counts);
    }
    return out;
}

}  // namespace

LenientExtraction extract_lenient(std::string_view raw) {
    LenientExtraction result;
    result.answers = bracket_scan(raw);
    if (!result.answers.empty()) {
        result.route = LenientExtraction::Route::BracketScan;
        return result;
    }
    result.answers = field_scan(raw);
    if (!result.answers.empty()) result.route = LenientExtraction::Route::FieldScan;
    return result;
}

TrajectoryStats trajectory_stats(const std::vector<EvaluationTrajectory>& trajectories,
                                 const std::vector<std::string>& references) {
    if (trajectories.size() != references.size()) {
        throw ContractError("trajectory_stats: trajectories and references are not aligned");
    }
    TrajectoryStats stats;
    double claim_sum = 0.0;
    double grounding_sum = 0.0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const ReferenceIndex reference(tokenize(references[i]));
        for (const auto& ev : trajectories[i].evaluations) {
            ++stats.responses;
            claim_sum += static_cast<double>(ev.atomic_claims.size());
            for (const auto& claim : ev.atomic_claims) {
                for (const auto& span : claim.evidence) {
                    ++stats.evidence_spans;
                    grounding_sum += span_grounding(tokenize(span), reference);
                }
            }
        }
    }
    if (stats.responses > 0) stats.mean_claims_per_response = claim_sum / static_cast<double>(stats.responses);
    if (stats.evidence_spans > 0) {
        stats.mean_grounding_degree = grounding_sum / static_cast<double>(stats.evidence_spans);
    }
    return stats;
}

}  // namespace zeval
