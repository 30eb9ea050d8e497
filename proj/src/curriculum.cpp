#include "zeval/curriculum.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "zeval/error.hpp"

namespace zeval {

namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

// Reorders the candidates by a random permutation and remaps preference_order.
RankedResponseSet shuffled(const RankedResponseSet& set, std::mt19937_64& rng) {
    std::vector<std::size_t> perm(set.candidates.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> position(perm.size());
    RankedResponseSet out{set.question, set.reference, {}, {}};
    for (std::size_t i = 0; i < perm.size(); ++i) {
        position[perm[i]] = i;
        out.candidates.push_back(set.candidates[perm[i]]);
    }
    for (auto idx : set.preference_order) out.preference_order.push_back(position[idx]);
    return out;
}

}  // namespace

std::vector<CorpusInstance> filter_and_sample(const std::vector<CorpusInstance>& corpus, std::size_t max_ref_tokens,
                                              std::size_t n, std::uint64_t seed, const Tokenizer& tokenizer) {
    std::vector<const CorpusInstance*> survivors;
    for (const auto& inst : corpus) {
        if (tokenizer.tokenize(inst.passage).size() <= max_ref_tokens) survivors.push_back(&inst);
    }
    if (survivors.size() < n) {
        throw ContractError("filter_and_sample: requested " + std::to_string(n) + " instances but only " +
                            std::to_string(survivors.size()) + " passages are within " +
                            std::to_string(max_ref_tokens) + " tokens (short by " +
                            std::to_string(n - survivors.size()) + ")");
    }
    std::vector<const CorpusInstance*> picked;
    picked.reserve(n);
    std::mt19937_64 rng(seed);
    std::sample(survivors.begin(), survivors.end(), std::back_inserter(picked), n, rng);
    std::vector<CorpusInstance> out;
    out.reserve(n);
    for (const auto* p : picked) out.push_back(*p);
    return out;
}

std::vector<EpochStage> parse_plan(const std::string& text) {
    const auto trim = [](std::string s) {
        const auto first = s.find_first_not_of(" \t");
        if (first == std::string::npos) return std::string{};
        return s.substr(first, s.find_last_not_of(" \t") - first + 1);
    };
    const auto number = [](const std::string& s) {
        if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw std::invalid_argument("not a number");
        }
        return static_cast<std::size_t>(std::stoull(s));
    };
    std::vector<EpochStage> plan;
    std::size_t start = 0;
    while (true) {
        const auto comma = text.find(',', start);
        const auto item = trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        const auto colon = item.find(':');
        try {
            if (colon == std::string::npos) throw std::invalid_argument("no colon");
            plan.push_back({number(trim(item.substr(0, colon))), number(trim(item.substr(colon + 1)))});
        } catch (const std::logic_error&) {
            if (text.find_first_not_of(" \t") == std::string::npos) break;
            throw ContractError("malformed plan entry '" + item + "', expected <epoch>:<k>");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (plan.empty()) throw ContractError("empty curriculum plan");
    return plan;
}

std::vector<EpochPlan> curriculum_schedule(const std::vector<RankedResponseSet>& ranked_sets,
                                           const std::vector<EpochStage>& plan, std::uint64_t seed) {
    std::vector<EpochPlan> out;
    out.reserve(plan.size());
    for (const auto& stage : plan) {
        if (stage.k < 2) throw ContractError("candidate set size must be at least 2");
        EpochPlan epoch{stage.epoch, stage.k, {}};
        epoch.instances.reserve(ranked_sets.size());
        for (std::size_t q = 0; q < ranked_sets.size(); ++q) {
            const auto& set = ranked_sets[q];
            const std::size_t available = set.candidates.size();
            if (stage.k > available) {
                throw ContractError("epoch " + std::to_string(stage.epoch) + " asks for " + std::to_string(stage.k) +
                                    " candidates but question " + std::to_string(q) + " has " +
                                    std::to_string(available));
            }
            auto rng = derived_rng(seed, stage.epoch, q);
            std::vector<std::size_t> all(available);
            std::iota(all.begin(), all.end(), std::size_t{0});
            std::vector<std::size_t> subset;
            std::sample(all.begin(), all.end(), std::back_inserter(subset), stage.k, rng);
            epoch.instances.push_back(shuffled(set.restricted_to(subset), rng));
        }
        out.push_back(std::move(epoch));
    }
    return out;
}

const char* to_string(SftRole role) noexcept {
    switch (role) {
        case SftRole::Pairwise: return "pairwise";
        case SftRole::Triplet: return "triplet";
        case SftRole::Quadruplet: return "quadruplet";
    }
    return "unknown";
}

SftQuestionCounts sft_question_counts(std::size_t n) {
    // 6 q_p = 4 q_t = q_q  <=>  q_p : q_t : q_q = 2 : 3 : 12.
    SftQuestionCounts c;
    c.pairwise = 2 * n / 17;
    c.triplet = 3 * n / 17;
    c.quadruplet = n - c.pairwise - c.triplet;
    return c;
}

namespace {

std::size_t subset_size(SftRole role) {
    switch (role) {
        case SftRole::Pairwise: return 2;
        case SftRole::Triplet: return 3;
        case SftRole::Quadruplet: return 4;
    }
    return 0;
}

std::string dedup_key(const SftInstance& inst) {
    std::string key = inst.question;
    key += '\x1e';
    key += inst.reference;
    for (auto idx : inst.target_ranking) {
        key += '\x1f';
        key += inst.candidates[idx];
    }
    return key;
}

}  // namespace

std::vector<SftInstance> expand_question(const RankedResponseSet& set, SftRole role) {
    if (set.candidates.size() != 4) {
        throw ContractError("SFT expansion needs exactly 4 ranked responses, got " +
                            std::to_string(set.candidates.size()));
    }
    const std::size_t r = subset_size(role);
    std::vector<SftInstance> out;
    // Combinations of {0,1,2,3} of size r in lexicographic order.
    std::vector<bool> mask(4, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(r), true);
    do {
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < 4; ++i) {
            if (mask[i]) subset.push_back(i);
        }
        const auto restricted = set.restricted_to(subset);
        SftInstance inst{set.question, set.reference, {}, restricted.preference_order, role};
        for (const auto& c : restricted.candidates) inst.candidates.push_back(c.text);
        out.push_back(std::move(inst));
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return out;
}

SftPartition sft_partition(const std::vector<RankedResponseSet>& questions, std::uint64_t seed) {
    if (questions.size() < 3) throw ContractError("SFT partitioning needs at least 3 questions");
    for (const auto& q : questions) {
        if (q.candidates.size() != 4) throw ContractError("every SFT question must carry exactly 4 ranked responses");
    }
    SftPartition part;
    part.questions = sft_question_counts(questions.size());

    std::vector<std::size_t> order(questions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<SftRole> roles(questions.size(), SftRole::Quadruplet);
    for (std::size_t i = 0; i < part.questions.pairwise; ++i) roles[order[i]] = SftRole::Pairwise;
    for (std::size_t i = 0; i < part.questions.triplet; ++i) {
        roles[order[part.questions.pairwise + i]] = SftRole::Triplet;
    }

    std::set<std::string> seen;
    for (std::size_t q = 0; q < questions.size(); ++q) {
        auto& bucket = roles[q] == SftRole::Pairwise  ? part.pairwise
                       : roles[q] == SftRole::Triplet ? part.triplet
                                                      : part.quadruplet;
        auto& raw = roles[q] == SftRole::Pairwise  ? part.raw_pairwise
                    : roles[q] == SftRole::Triplet ? part.raw_triplet
                                                   : part.raw_quadruplet;
        for (auto& inst : expand_question(questions[q], roles[q])) {
            ++raw;
            if (!seen.insert(dedup_key(inst)).second) continue;
            bucket.push_back(std::move(inst));
        }
    }

    for (auto* bucket : {&part.pairwise, &part.triplet, &part.quadruplet}) {
        for (std::size_t i = 0; i < bucket->size(); ++i) {
            auto& inst = (*bucket)[i];
            auto inst_rng = derived_rng(seed, static_cast<std::uint64_t>(inst.role) + 1, i);
            std::vector<std::size_t> perm(inst.candidates.size());
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::shuffle(perm.begin(), perm.end(), inst_rng);
            std::vector<std::size_t> position(perm.size());
            std::vector<std::string> texts;
            for (std::size_t j = 0; j < perm.size(); ++j) {
                position[perm[j]] = j;
                texts.push_back(inst.candidates[perm[j]]);
            }
            for (auto& t : inst.target_ranking) t = position[t];
            inst.candidates = std::move(texts);
        }
    }
    return part;
}

nlohmann::json to_json(const SftInstance& instance) {
    return {{"question", instance.question},
            {"reference", instance.reference},
            {"candidates", instance.candidates},
            {"target_ranking", instance.target_ranking},
            {"role", to_string(instance.role)}};
}

nlohmann::json to_json(const CorpusInstance& instance) {
    nlohmann::json j{{"question", instance.question}, {"passage", instance.passage}};
    if (!instance.metadata.is_null()) j["metadata"] = instance.metadata;
    return j;
}

CorpusInstance corpus_instance_from_json(const nlohmann::json& j) {
    try {
        CorpusInstance inst{j.at("question").get<std::string>(), j.at("passage").get<std::string>(), nullptr};
        if (j.contains("metadata")) inst.metadata = j.at("metadata");
        return inst;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed corpus record: ") + e.what());
    }
}

}  // namespace zeval
