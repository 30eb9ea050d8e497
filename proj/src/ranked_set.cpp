#include "zeval/ranked_set.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include "zeval/error.hpp"

namespace zeval {

RankedResponseSet RankedResponseSet::from_alphas(std::string question, std::string reference,
                                                 std::vector<Candidate> candidates) {
    if (candidates.size() < 2) throw ContractError("a ranked set needs at least two candidates");
    std::set<double> alphas;
    for (const auto& c : candidates) {
        if (!c.alpha) throw ContractError("candidate without alpha cannot be ranked by alpha");
        if (!alphas.insert(*c.alpha).second) throw ContractError("alpha values must be pairwise distinct");
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return *candidates[a].alpha > *candidates[b].alpha; });
    return RankedResponseSet{std::move(question), std::move(reference), std::move(candidates), std::move(order)};
}

RankedResponseSet RankedResponseSet::from_order(std::string question, std::string reference,
                                                std::vector<Candidate> candidates,
                                                std::vector<std::size_t> preference_order) {
    if (candidates.size() < 2) throw ContractError("a ranked set needs at least two candidates");
    validate_permutation(preference_order, candidates.size());
    return RankedResponseSet{std::move(question), std::move(reference), std::move(candidates),
                             std::move(preference_order)};
}

RankedResponseSet RankedResponseSet::restricted_to(const std::vector<std::size_t>& subset) const {
    std::vector<std::size_t> sorted = subset;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() ||
        (!sorted.empty() && sorted.back() >= candidates.size())) {
        throw ContractError("subset indices must be distinct candidate indices");
    }
    std::vector<std::size_t> remap(candidates.size(), candidates.size());
    RankedResponseSet out{question, reference, {}, {}};
    for (auto idx : sorted) {
        remap[idx] = out.candidates.size();
        out.candidates.push_back(candidates[idx]);
    }
    for (auto idx : preference_order) {
        if (remap[idx] != candidates.size()) out.preference_order.push_back(remap[idx]);
    }
    return out;
}

nlohmann::json to_json(const RankedResponseSet& set) {
    nlohmann::json candidates = nlohmann::json::array();
    for (const auto& c : set.candidates) {
        nlohmann::json item{{"text", c.text}};
        item["alpha"] = c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr);
        candidates.push_back(std::move(item));
    }
    return {{"question", set.question},
            {"reference", set.reference},
            {"candidates", std::move(candidates)},
            {"preference_order", set.preference_order}};
}

RankedResponseSet ranked_set_from_json(const nlohmann::json& j) {
    try {
        std::vector<Candidate> candidates;
        for (const auto& c : j.at("candidates")) {
            Candidate cand;
            if (c.is_string()) {
                cand.text = c.get<std::string>();
            } else {
                cand.text = c.at("text").get<std::string>();
                if (c.contains("alpha") && !c.at("alpha").is_null()) cand.alpha = c.at("alpha").get<double>();
            }
            candidates.push_back(std::move(cand));
        }
        auto question = j.value("question", std::string{});
        auto reference = j.at("reference").get<std::string>();
        if (j.contains("preference_order")) {
            return RankedResponseSet::from_order(std::move(question), std::move(reference), std::move(candidates),
                              j.at("preference_order").get<std::vector<std::size_t>>());
        }
        return RankedResponseSet::from_alphas(std::move(question), std::move(reference), std::move(candidates));
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed ranked set: ") + e.what());
    }
}

}  // namespace zeval
