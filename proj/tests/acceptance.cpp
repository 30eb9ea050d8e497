/// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "oracles.hpp"
#include "zeval/curriculum.hpp"
#include "zeval/metrics.hpp"
#include "zeval/rewards.hpp"
#include "zeval/service.hpp"
#include "zeval/synthesis.hpp"

using namespace zeval;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

/// Collects failed expectations for one criterion.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++count_;
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        failed_ += !ok;
    }
    void note(const std::string& detail) { notes_.push_back(detail); }
    bool passed() const { return failed_ == 0; }
    std::string summary() const {
        std::ostringstream out;
        out << count_ << " checks";
        for (const auto& n : notes_) out << "; " << n;
        if (failed_ > 0) {
            out << "; " << failed_ << " failed";
            for (const auto& f : failures_) out << " [" << f << "]";
        }
        return out.str();
    }

private:
    std::size_t count_ = 0;
    std::size_t failed_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// 1 ------------------------------------------------------------------------

void reward_truth_table(Checks& c) {
    const auto start = Clock::now();
    for (double rf : {0.0, -0.5}) {
        for (double ra : {0.0, 1.0}) {
            for (double re : {0.0, 0.5, 1.0}) {
                const double expected = rf == 0.0 ? (ra == 1.0 ? 1.0 + 0.5 * re : 0.0) : -0.5;
                c.expect(combined_reward(rf, ra, re) == expected,
                         "(" + fmt(rf) + "," + fmt(ra) + "," + fmt(re) + ")");
            }
        }
    }
    c.expect(std::abs(combined_reward(0.0, 1.0, 0.8) - 1.4) < 1e-15, "(0,1,0.8) -> 1.4");
    const double ms = ms_since(start);
    c.expect(ms < 1000.0, "runtime");
    c.note(fmt(ms) + " ms");
}

// 2 ------------------------------------------------------------------------

void ranking_enumeration(Checks& c) {
    const auto start = Clock::now();
    for (std::size_t n = 2; n <= 4; ++n) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(n);
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<double> scores(n);
        for (std::size_t i = 0; i < n; ++i) scores[i] = 0.1 + 0.2 * static_cast<double>(i);
        std::sort(scores.begin(), scores.end());
        std::size_t full = 0, simplified = 0, assignments = 0;
        do {
            ++assignments;
            full += accuracy_reward(scores, order) == 1.0;
            simplified += accuracy_reward_simplified(scores, order) == 1.0;
        } while (std::next_permutation(scores.begin(), scores.end()));
        std::size_t factorial = 1;
        for (std::size_t i = 2; i <= n; ++i) factorial *= i;
        c.expect(assignments == factorial, "n! assignments");
        c.expect(full == 1, "n=" + std::to_string(n) + " full count " + std::to_string(full));
        c.expect(simplified == factorial / n, "n=" + std::to_string(n) + " simplified count " + std::to_string(simplified));

        // Every score vector over a small grid that contains a tie.
        std::size_t total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= n;
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<double> s(n);
            auto rest = code;
            for (std::size_t i = 0; i < n; ++i, rest /= n) s[i] = static_cast<double>(rest % n) / 4.0;
            auto sorted = s;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) continue;
            c.expect(accuracy_reward(s, order) == 0.0, "tie earns 0 (full)");
            const double top = s[order[0]];
            const bool top_tied = std::count(s.begin(), s.end(), top) > 1;
            const bool top_is_max = top == sorted.back();
            c.expect(accuracy_reward_simplified(s, order) == (top_is_max && !top_tied ? 1.0 : 0.0),
                     "simplified under ties");
            if (top_tied && top_is_max) c.expect(accuracy_reward_simplified(s, order) == 0.0, "tie at the top earns 0");
        }
    }
    const double ms = ms_since(start);
    c.expect(ms < 1000.0, "runtime");
    c.note(fmt(ms) + " ms");
}

// 3 ------------------------------------------------------------------------

void evidence_kernel(Checks& c) {
    std::mt19937_64 rng(3);
    const auto reference = oracle::random_tokens(rng, 400, 30);
    const TokenSequence ref{reference, ""};
    for (std::size_t start = 0; start + 9 <= reference.size(); start += 13) {
        const TokenSequence span{{reference.begin() + start, reference.begin() + start + 9}, ""};
        c.expect(span_grounding(span, ref) == 0.0, "9-token span scores 0");
    }
    for (std::size_t len : {10, 11, 25, 80}) {
        for (std::size_t start = 0; start + len <= reference.size(); start += 37) {
            const TokenSequence span{{reference.begin() + start, reference.begin() + start + len}, ""};
            c.expect(span_grounding(span, ref) == 1.0, "verbatim excerpt scores 1");
        }
    }

    std::size_t mismatches = 0;
    std::uniform_int_distribution<std::size_t> length(0, 200);
    std::uniform_int_distribution<int> vocab(2, 12);
    for (int pair = 0; pair < 1000; ++pair) {
        const int v = vocab(rng);
        const auto a = oracle::random_tokens(rng, length(rng), v);
        const auto b = oracle::random_tokens(rng, length(rng), v);
        const TokenSequence sa{a, ""}, sb{b, ""};
        const bool lcs_ok = longest_common_substring_len(sa, sb) == oracle::lcs_dp(a, b);
        const bool grounding_ok = span_grounding(sa, sb) == oracle::span_grounding_dp(a, b);
        mismatches += !(lcs_ok && grounding_ok);
    }
    c.expect(mismatches == 0, std::to_string(mismatches) + " DP mismatches");
    c.note("1000 random pairs, " + std::to_string(mismatches) + " mismatches");

    const auto long_ref = oracle::random_tokens(rng, 6000, 500);
    const auto span = oracle::random_tokens(rng, 50, 500);
    const auto start = Clock::now();
    const auto len = longest_common_substring_len(TokenSequence{span, ""}, TokenSequence{long_ref, ""});
    const double ms = ms_since(start);
    c.expect(len == oracle::lcs_dp(span, long_ref), "6000x50 value");
    c.expect(ms < 50.0, "6000x50 under 50 ms");
    c.note("6000x50 LCS " + fmt(ms) + " ms");
}

// 4 ------------------------------------------------------------------------

SparseDistribution random_distribution(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.001, 1.0);
    std::map<std::string, double> probs;
    for (int i = 0; i < 15; ++i) {
        if (u(rng) < 0.7 || probs.empty()) probs["t" + std::to_string(i)] = u(rng);
    }
    return SparseDistribution::from_probabilities(probs);
}

void cad_identities(Checks& c) {
    std::mt19937_64 rng(4);
    double worst_identity = 0.0, worst_shift = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto ctx = random_distribution(rng);
        const auto noctx = random_distribution(rng);
        const auto same = cad_adjust(ctx, noctx, 0.0);
        for (const auto& [t, lp] : ctx.log_probs) worst_identity = std::max(worst_identity, std::abs(same.probability(t) - std::exp(lp)));
        c.expect(same.size() == ctx.size(), "alpha 0 support");

        const double alpha = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
        const auto base = cad_adjust(ctx, noctx, alpha);
        auto ctx_shift = ctx, noctx_shift = noctx;
        const double sc = std::uniform_real_distribution<double>(-30.0, 30.0)(rng);
        const double sn = std::uniform_real_distribution<double>(-30.0, 30.0)(rng);
        for (auto& [_, lp] : ctx_shift.log_probs) lp += sc;
        for (auto& [_, lp] : noctx_shift.log_probs) lp += sn;
        const auto shifted = cad_adjust(ctx_shift, noctx_shift, alpha);
        for (const auto& [t, _] : base.log_probs) worst_shift = std::max(worst_shift, std::abs(shifted.probability(t) - base.probability(t)));
    }
    c.expect(worst_identity <= 1e-12, "alpha 0 identity");
    c.expect(worst_shift <= 1e-12, "shift invariance");
    c.note("max alpha-0 error " + fmt(worst_identity) + ", max shift error " + fmt(worst_shift));

    const std::vector<std::string> corpus{"the capital is london", "the capital is rome", "rome is old",
                                          "london is big", "the tower is tall"};
    const ToyProvider toy(corpus, 0.9);
    const std::vector<GenerationInput> inputs{{"capital of france", "paris is the capital of france"},
                                              {"how tall", "the eiffel tower is 330 metres tall"}};
    const std::vector<std::vector<std::string>> prefixes{{}, {"the"}, {"the", "capital", "is"}, {"rome"}};
    for (const auto& input : inputs) {
        for (const auto& prefix : prefixes) {
            const auto ctx = toy.next(input, Conditional::WithContext, prefix);
            const auto noctx = toy.next(input, Conditional::WithoutContext, prefix);
            double noctx_floor = 0.0;
            for (const auto& [_, lp] : noctx.log_probs) noctx_floor = std::min(noctx_floor, lp);
            noctx_floor -= 10.0;
            std::string favoured;
            double best = -1e300;
            for (const auto& [t, lp] : ctx.log_probs) {
                const auto it = noctx.log_probs.find(t);
                const double ratio = lp - (it == noctx.log_probs.end() ? noctx_floor : it->second);
                if (ratio > best) {
                    best = ratio;
                    favoured = t;
                }
            }
            double previous = 0.0;
            for (double alpha : {-1.4, -1.0, -0.5, 0.0}) {
                const double p = cad_adjust(ctx, noctx, alpha).probability(favoured);
                c.expect(p >= previous, "context-favoured token non-decreasing in alpha");
                previous = p;
            }
        }
    }

    const ToyProvider generator(corpus, 0.6);
    const std::vector<std::vector<double>> schedules{
        {0.0, -0.5, -1.0, -1.4}, {-1.4, -1.0, -0.5, 0.0}, {-0.5, 0.0, -1.4, -1.0}, {1.0, -1.0}, {0.5, 0.0, -2.0}};
    for (const auto& schedule : schedules) {
        SynthesisConfig cfg;
        cfg.max_tokens = 8;
        cfg.alpha_schedule = schedule;
        const auto set = synthesize_set(generator, inputs[0], cfg);
        bool descending = set.preference_order.size() == schedule.size();
        for (std::size_t i = 1; descending && i < set.preference_order.size(); ++i) {
            descending = *set.candidates[set.preference_order[i - 1]].alpha > *set.candidates[set.preference_order[i]].alpha;
        }
        c.expect(descending, "preference order follows descending alpha");
    }
}

// 5 ------------------------------------------------------------------------

RankedResponseSet four_candidates(std::size_t q) {
    std::vector<Candidate> cands;
    const double alphas[] = {0.0, -0.5, -1.0, -1.4};
    for (std::size_t i = 0; i < 4; ++i) cands.push_back({"q" + std::to_string(q) + " response " + std::to_string(i), alphas[i]});
    return RankedResponseSet::from_alphas("question " + std::to_string(q), "passage " + std::to_string(q), cands);
}

void curriculum_combinatorics(Checks& c) {
    const auto one = four_candidates(0);
    c.expect(expand_question(one, SftRole::Pairwise).size() == 6, "pairwise 6");
    c.expect(expand_question(one, SftRole::Triplet).size() == 4, "triplet 4");
    c.expect(expand_question(one, SftRole::Quadruplet).size() == 1, "quadruplet 1");

    std::vector<RankedResponseSet> questions;
    for (std::size_t q = 0; q < 5500; ++q) questions.push_back(four_candidates(q));
    const auto part = sft_partition(questions, 2024);
    c.expect(part.questions.pairwise == 647 && part.questions.triplet == 970 && part.questions.quadruplet == 3883,
             "647/970/3883 question split");
    const std::vector<std::size_t> volumes{part.pairwise.size(), part.triplet.size(), part.quadruplet.size()};
    const double lo = static_cast<double>(*std::min_element(volumes.begin(), volumes.end()));
    const double hi = static_cast<double>(*std::max_element(volumes.begin(), volumes.end()));
    c.expect((hi - lo) / hi <= 0.005, "volumes within 0.5%");
    c.note("volumes " + std::to_string(volumes[0]) + "/" + std::to_string(volumes[1]) + "/" + std::to_string(volumes[2]));
    for (const auto* bucket : {&part.pairwise, &part.triplet, &part.quadruplet}) {
        for (const auto& inst : *bucket) {
            // Candidate texts end in their alpha rank, so a consistent target lists them ascending.
            bool consistent = true;
            for (std::size_t i = 1; i < inst.target_ranking.size(); ++i) {
                consistent &= inst.candidates[inst.target_ranking[i - 1]].back() < inst.candidates[inst.target_ranking[i]].back();
            }
            c.expect(consistent, "target ranking follows descending alpha");
        }
    }
    const auto again = sft_partition(questions, 2024);
    bool same = again.pairwise.size() == part.pairwise.size();
    for (std::size_t i = 0; same && i < part.pairwise.size(); ++i) same = to_json(again.pairwise[i]) == to_json(part.pairwise[i]);
    c.expect(same, "SFT partition deterministic");

    std::vector<RankedResponseSet> sample(questions.begin(), questions.begin() + 200);
    const auto epochs = curriculum_schedule(sample, parse_plan("1:3,2:4"), 9);
    c.expect(epochs.size() == 2 && epochs[0].candidate_set_size == 3 && epochs[1].candidate_set_size == 4,
             "3-candidate then 4-candidate epochs");
    for (const auto& e : epochs) {
        for (const auto& inst : e.instances) c.expect(inst.candidates.size() == e.candidate_set_size, "epoch set size");
    }
    const auto epochs_again = curriculum_schedule(sample, parse_plan("1:3,2:4"), 9);
    c.expect(epochs_again[0].instances == epochs[0].instances && epochs_again[1].instances == epochs[1].instances,
             "schedule deterministic");
}

// 6 ------------------------------------------------------------------------

std::vector<CorrectnessRecord> records_of(const std::vector<double>& h, const std::vector<double>& e) {
    std::vector<CorrectnessRecord> out;
    for (std::size_t i = 0; i < h.size(); ++i) out.push_back({static_cast<int>(h[i]), e[i]});
    return out;
}

bool is_constant(const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

void metrics_identities(Checks& c) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> grade(0, 4);
    for (int set = 0; set < 10000; ++set) {
        std::vector<FaithfulnessRecord> recs, swapped;
        const int n = 1 + set % 40;
        for (int i = 0; i < n; ++i) {
            const Score good = Score::from_counts({static_cast<std::size_t>(grade(rng)), 4});
            const Score poor = Score::from_counts({static_cast<std::size_t>(grade(rng)), 4});
            recs.push_back({good, poor});
            swapped.push_back({poor, good});
        }
        const auto a = faithfulness_agreement(recs);
        const auto complement = 1.0 - faithfulness_agreement(swapped).worst;
        c.expect(a.worst <= a.middle && a.middle <= a.best, "worst <= middle <= best");
        c.expect(std::abs(a.best - complement) < 1e-12, "best equals the swapped worst complement");
    }
    const std::vector<FaithfulnessRecord> ties(7, {{0.5, std::nullopt}, {0.5, std::nullopt}});
    const auto t = faithfulness_agreement(ties);
    c.expect(t.best == 1.0 && t.middle == 0.5 && t.worst == 0.0, "all-tie (1, 0.5, 0)");

    double worst_error = 0.0;
    std::size_t compared = 0;
    const auto compare = [&](const std::vector<double>& h, const std::vector<double>& e) {
        const auto r = correctness_correlations(records_of(h, e));
        worst_error = std::max({worst_error, std::abs(r.pearson - oracle::pearson(h, e)),
                                std::abs(r.spearman - oracle::spearman(h, e)),
                                std::abs(r.kendall - oracle::kendall_tau_b(h, e))});
        ++compared;
    };
    for (std::size_t n = 3; n <= 8; ++n) {
        // Every label vector in {-2..2}^n against a tied evaluator pattern.
        std::vector<double> e(n);
        for (std::size_t i = 0; i < n; ++i) e[i] = static_cast<double>((i * 3) % 4) * 0.25;
        std::size_t total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= 5;
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<double> h(n);
            auto rest = code;
            for (std::size_t i = 0; i < n; ++i, rest /= 5) h[i] = static_cast<double>(rest % 5) - 2.0;
            if (is_constant(h)) continue;
            compare(h, e);
        }
    }
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> h(1000), e(1000);
        for (std::size_t i = 0; i < h.size(); ++i) {
            h[i] = std::uniform_int_distribution<int>(-2, 2)(rng);
            e[i] = trial % 2 == 0 ? std::round((h[i] + std::normal_distribution<double>(0, 1.5)(rng)) * 4) / 16
                                  : std::normal_distribution<double>(h[i] * 0.1, 0.3)(rng);
        }
        compare(h, e);
    }
    c.expect(worst_error <= 1e-12, "correlations match oracles");
    c.note(std::to_string(compared) + " correlation sets, max oracle error " + fmt(worst_error));

    double worst_affine = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 3 + trial % 60;
        std::vector<double> h(n), e(n);
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = std::uniform_int_distribution<int>(-2, 2)(rng);
            e[i] = std::uniform_int_distribution<int>(-8, 8)(rng) / 8.0;
        }
        if (is_constant(h) || is_constant(e)) continue;
        const double scale = std::uniform_real_distribution<double>(0.01, 50.0)(rng);
        const double offset = std::uniform_real_distribution<double>(-10.0, 10.0)(rng);
        std::vector<double> mapped(n);
        for (std::size_t i = 0; i < n; ++i) mapped[i] = scale * e[i] + offset;
        const auto a = correctness_correlations(records_of(h, e));
        const auto b = correctness_correlations(records_of(h, mapped));
        worst_affine = std::max({worst_affine, std::abs(a.pearson - b.pearson), std::abs(a.spearman - b.spearman),
                                 std::abs(a.kendall - b.kendall)});
    }
    c.expect(worst_affine <= 1e-12, "affine invariance");
    c.note("max affine drift " + fmt(worst_affine));
}

// 7 ------------------------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("env -u ZEVAL_BASE_URL -u ZEVAL_API_KEY ") + ZEVAL_CLI_PATH + " " + args +
                            " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void offline_benchmark(Checks& c) {
    const auto dir = std::filesystem::temp_directory_path() / ("zeval_accept_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const std::string data = ZEVAL_TEST_DATA;
    const std::string faith = "benchmark --task faithfulness -i " + data + "/faithfulness.jsonl --fixture " + data +
                              "/faithfulness_judge.jsonl --trials 3 --seed 0";
    std::vector<std::string> reports;
    for (const char* run : {"a --concurrency 1", "b --concurrency 8", "c --concurrency 3"}) {
        const std::string run_args = run;
        const auto name = run_args.substr(0, 1);
        c.expect(run_cli(faith + " -o " + (dir / name).string() + run_args.substr(1)) == 0, "benchmark exit 0");
        reports.push_back(slurp((dir / (name + ".json")).string()) + slurp((dir / (name + ".txt")).string()));
    }
    c.expect(!reports[0].empty(), "report written");
    c.expect(reports[0] == reports[1] && reports[1] == reports[2], "byte-stable report");

    const std::string correct = "benchmark --task correctness -i " + data + "/correctness.jsonl --fixture " + data +
                                "/correctness_judge.jsonl -o " + (dir / "corr").string();
    c.expect(run_cli(correct) == 0, "correctness exit 0");
    const auto report = json::parse(slurp((dir / "corr.json").string()), nullptr, false);
    for (const char* key : {"pearson", "spearman", "kendall"}) {
        c.expect(report.is_object() && report.contains(key) && std::abs(report[key].get<double>() - 1.0) < 1e-12,
                 std::string(key) + " = 1");
    }
    c.note(std::to_string(reports[0].size()) + "-byte faithfulness report identical across 3 runs");
    std::filesystem::remove_all(dir);
}

// 8 ------------------------------------------------------------------------

json random_rollout_item(std::mt19937_64& rng) {
    const auto reference = oracle::random_tokens(rng, 120, 40);
    std::string ref_text;
    for (const auto& t : reference) ref_text += (ref_text.empty() ? "" : " ") + t;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    std::vector<std::string> candidates;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<oracle::ClaimSpec>> answers(k);
    for (std::size_t a = 0; a < k; ++a) {
        candidates.push_back("candidate " + std::to_string(a));
        const int claims = std::uniform_int_distribution<int>(0, 5)(rng);
        for (int cl = 0; cl < claims; ++cl) {
            oracle::ClaimSpec spec;
            spec.supported = std::bernoulli_distribution(0.6)(rng);
            if (spec.supported) {
                const std::size_t len = std::uniform_int_distribution<std::size_t>(5, 30)(rng);
                const std::size_t at = std::uniform_int_distribution<std::size_t>(0, reference.size() - len)(rng);
                std::string span;
                for (std::size_t i = at; i < at + len; ++i) {
                    span += (span.empty() ? "" : " ") +
                            (std::bernoulli_distribution(0.1)(rng) ? std::string("noise") : reference[i]);
                }
                spec.evidence.push_back(span);
            }
            answers[a].push_back(spec);
        }
    }
    std::string rollout = oracle::trajectory_json(answers).dump();
    const int damage = std::uniform_int_distribution<int>(0, 9)(rng);
    if (damage == 0) rollout = rollout.substr(0, rollout.size() * 2 / 3);
    if (damage == 1) rollout = "Sure! " + rollout;
    return {{"question", "q"}, {"reference", ref_text}, {"candidates", candidates},
            {"ground_truth_order", order}, {"rollout", rollout}};
}

void service_parity(Checks& c) {
    ServiceConfig cfg;
    cfg.port = 0;
    RewardService service(cfg);
    const int port = service.bind();
    std::thread server([&] { service.listen(); });
    service.wait_until_ready();

    std::mt19937_64 rng(8);
    std::vector<json> items;
    for (int i = 0; i < 500; ++i) items.push_back(random_rollout_item(rng));
    std::vector<std::string> expected;
    for (const auto& item : items) {
        std::vector<Candidate> cands;
        for (const auto& t : item["candidates"]) cands.push_back({t.get<std::string>(), std::nullopt});
        const auto set = RankedResponseSet::from_order("q", item["reference"].get<std::string>(), cands,
                                                       item["ground_truth_order"].get<std::vector<std::size_t>>());
        expected.push_back(to_json(score_rollout(item["rollout"].get<std::string>(), set)).dump());
    }

    // Each client sends its share of the items in batches of 1 to 4.
    constexpr std::size_t kClients = 32;
    std::vector<std::string> got(items.size());
    std::atomic<std::size_t> transport_failures{0};
    std::vector<std::thread> clients;
    const auto start = Clock::now();
    for (std::size_t t = 0; t < kClients; ++t) {
        clients.emplace_back([&, t] {
            httplib::Client client("127.0.0.1", port);
            std::vector<std::size_t> mine;
            for (std::size_t i = t; i < items.size(); i += kClients) mine.push_back(i);
            for (std::size_t pos = 0; pos < mine.size();) {
                const std::size_t batch = std::min<std::size_t>(1 + (pos + t) % 4, mine.size() - pos);
                json body{{"batch", json::array()}};
                for (std::size_t b = 0; b < batch; ++b) body["batch"].push_back(items[mine[pos + b]]);
                const auto res = client.Post("/v1/reward", body.dump(), "application/json");
                if (!res || res->status != 200) {
                    ++transport_failures;
                } else {
                    const auto reply = json::parse(res->body);
                    for (std::size_t b = 0; b < batch; ++b) got[mine[pos + b]] = reply["batch"][b].dump();
                }
                pos += batch;
            }
        });
    }
    for (auto& th : clients) th.join();
    const double ms = ms_since(start);
    service.stop();
    server.join();

    std::size_t mismatches = 0, penalised = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        mismatches += got[i] != expected[i];
        penalised += json::parse(expected[i])["format_reward"] == kFormatPenalty;
    }
    c.expect(transport_failures == 0, std::to_string(transport_failures.load()) + " failed requests");
    c.expect(mismatches == 0, std::to_string(mismatches) + " parity mismatches");
    c.note("500 rollouts (" + std::to_string(penalised) + " malformed) via 32 clients in " + fmt(ms) + " ms, " +
           std::to_string(mismatches) + " mismatches");
}

// 9 ------------------------------------------------------------------------

void case_study(Checks& c) {
    const std::string raw = oracle::trajectory_json({
                                                        {{false, {}}, {false, {}}, {false, {}}},
                                                        {{true, {"span one"}}, {true, {"span two"}}, {true, {"span three"}}, {false, {}}},
                                                    })
                                .dump();
    const auto parsed = parse_strict(raw, 2);
    const auto* trajectory = std::get_if<EvaluationTrajectory>(&parsed);
    c.expect(trajectory != nullptr, "hand-built trajectory parses strictly");
    if (trajectory != nullptr) {
        c.expect(response_score(trajectory->evaluations[0]) == 0.0, "response A scores 0");
        c.expect(response_score(trajectory->evaluations[1]) == 0.75, "response B scores 3/4");
    }
    const auto lenient = extract_lenient("The judge said:\n" + raw);
    c.expect(lenient.answer(0) && response_score(*lenient.answer(0)) == 0.0, "lenient A = 0");
    c.expect(lenient.answer(1) && response_score(*lenient.answer(1)) == 0.75, "lenient B = 0.75");
    c.expect(compare_scores(Score::from_counts({3, 4}), Score::from_counts({0, 3})) > 0, "B preferred over A");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Checks&)>>> criteria{
        {"reward truth table", reward_truth_table},
        {"ranking enumeration", ranking_enumeration},
        {"evidence kernel", evidence_kernel},
        {"context-aware decoding identities", cad_identities},
        {"curriculum and SFT combinatorics", curriculum_combinatorics},
        {"metrics identities", metrics_identities},
        {"offline benchmark", offline_benchmark},
        {"service parity", service_parity},
        {"case-study scores", case_study},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Checks checks;
        std::string error;
        try {
            criteria[i].second(checks);
        } catch (const std::exception& e) {
            error = e.what();
        }
        const bool ok = checks.passed() && error.empty();
        failed += !ok;
        std::cout << (ok ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first << " (" << checks.summary()
                  << (error.empty() ? "" : "; exception: " + error) << ")\n"
                  << std::flush;
    }
    return failed == 0 ? 0 : 1;
}
