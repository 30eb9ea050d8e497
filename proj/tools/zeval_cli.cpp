#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "zeval/curriculum.hpp"
#include "zeval/error.hpp"
#include "zeval/harness.hpp"
#include "zeval/rewards.hpp"
#include "zeval/service.hpp"
#include "zeval/synthesis.hpp"
#include "zeval/trajectory.hpp"
#include "zeval/version.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Failures caused by the arguments rather than the data or the environment.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (path != "-") {
        file.open(path);
        if (!file) throw zeval::Error("cannot open input " + path);
        in = &file;
    }
    std::vector<json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(*in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw zeval::Error(path + ":" + std::to_string(line_no) + ": invalid JSON");
        out.push_back(std::move(j));
    }
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw zeval::Error("cannot open " + path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw zeval::Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Line-oriented output to a file or stdout ("-").
class Output {
public:
    explicit Output(const std::string& path) : path_(path) {
        if (path != "-") {
            file_.open(path, std::ios::trunc);
            if (!file_) throw zeval::Error("cannot write output " + path);
        }
    }
    void line(const json& j) { stream() << j.dump() << '\n'; }
    void finish() {
        stream().flush();
        if (!stream()) throw zeval::Error("failed writing output " + path_);
    }

private:
    std::ostream& stream() { return path_ == "-" ? std::cout : file_; }
    std::string path_;
    std::ofstream file_;
};

template <typename T, typename F>
std::vector<T> parse_records(const std::vector<json>& lines, const std::string& what, F&& parse) {
    std::vector<T> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(parse(lines[i]));
        } catch (const zeval::ContractError& e) {
            throw zeval::Error(what + " " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(workers, n); ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

zeval::AccuracyMode parse_accuracy(const std::string& name) {
    if (name == "full") return zeval::AccuracyMode::FullRanking;
    if (name == "top") return zeval::AccuracyMode::TopOnly;
    throw UsageError("--accuracy must be 'full' or 'top'");
}

// --------------------------------------------------------------------------

struct SynthesizeArgs {
    std::string input;
    std::string output = "-";
    std::uint64_t seed = 0;
    std::optional<std::size_t> sample_size;
    std::size_t max_ref_tokens = zeval::kDefaultMaxReferenceTokens;
    std::vector<double> alphas{0.0, -0.5, -1.0, -1.4};
    std::size_t max_tokens = zeval::kDefaultMaxResponseTokens;
    bool sample = false;
    std::size_t concurrency = 4;
    std::string toy_corpus;
    double context_mix = 0.5;
    std::string replay;
    std::string end_token = "<|endoftext|>";
    std::string separator;
    std::string record;
    std::string model;
    std::size_t top_k = 20;
    double timeout = 60.0;
};

int run_synthesize(const SynthesizeArgs& a) {
    const auto corpus = parse_records<zeval::CorpusInstance>(read_jsonl(a.input), "corpus record",
                                                             zeval::corpus_instance_from_json);
    std::size_t eligible = 0;
    for (const auto& c : corpus) eligible += zeval::token_count(c.passage) <= a.max_ref_tokens;
    const auto picked = zeval::filter_and_sample(corpus, a.max_ref_tokens, a.sample_size.value_or(eligible), a.seed);

    std::unique_ptr<zeval::NextTokenProvider> base;
    if (!a.toy_corpus.empty()) {
        base = std::make_unique<zeval::ToyProvider>(read_lines(a.toy_corpus), a.context_mix);
    } else if (!a.replay.empty()) {
        base = std::make_unique<zeval::ReplayProvider>(a.replay, a.end_token, a.separator);
    } else {
        zeval::RemoteProviderConfig cfg;
        cfg.model = a.model;
        cfg.top_k = a.top_k;
        cfg.timeout_seconds = a.timeout;
        cfg.end_token = a.end_token;
        cfg.apply_environment();
        if (cfg.base_url.empty()) {
            throw UsageError("no generator: pass --toy-corpus, --replay, or set ZEVAL_BASE_URL");
        }
        base = std::make_unique<zeval::RemoteProvider>(cfg);
    }
    std::unique_ptr<zeval::RecordingProvider> recorder;
    if (!a.record.empty()) {
        std::ofstream(a.record, std::ios::trunc);
        recorder = std::make_unique<zeval::RecordingProvider>(*base, a.record);
    }
    const zeval::NextTokenProvider& provider = recorder ? *recorder : *base;

    std::vector<json> results(picked.size());
    parallel_for(picked.size(), a.concurrency, [&](std::size_t i) {
        zeval::SynthesisConfig cfg;
        cfg.max_tokens = a.max_tokens;
        cfg.alpha_schedule = a.alphas;
        if (a.sample) cfg.sample_seed = a.seed + i;
        const zeval::GenerationInput input{picked[i].question, picked[i].passage};
        try {
            auto j = zeval::to_json(zeval::synthesize_set(provider, input, cfg));
            if (!picked[i].metadata.is_null()) j["metadata"] = picked[i].metadata;
            results[i] = std::move(j);
        } catch (const zeval::DecodeError& e) {
            throw zeval::Error("question " + std::to_string(i + 1) + ": " + e.what() + " (decoded so far: \"" +
                               e.partial_text() + "\")");
        }
    });
    Output out(a.output);
    for (const auto& r : results) out.line(r);
    out.finish();
    std::cerr << "synthesized " << results.size() << " ranked sets from " << corpus.size() << " corpus records\n";
    return kExitOk;
}

// --------------------------------------------------------------------------

struct CurriculumArgs {
    std::string input;
    std::string output = "-";
    std::uint64_t seed = 0;
    std::string plan = "1:3,2:4";
};

std::vector<zeval::RankedResponseSet> read_ranked_sets(const std::string& path) {
    return parse_records<zeval::RankedResponseSet>(read_jsonl(path), "ranked set", zeval::ranked_set_from_json);
}

int run_curriculum(const CurriculumArgs& a) {
    std::vector<zeval::EpochStage> plan;
    try {
        plan = zeval::parse_plan(a.plan);
    } catch (const zeval::ContractError& e) {
        throw UsageError(std::string("--plan: ") + e.what());
    }
    const auto sets = read_ranked_sets(a.input);
    const auto epochs = zeval::curriculum_schedule(sets, plan, a.seed);
    Output out(a.output);
    for (const auto& epoch : epochs) {
        for (const auto& inst : epoch.instances) {
            out.line({{"epoch", epoch.epoch_index}, {"k", epoch.candidate_set_size}, {"instance", zeval::to_json(inst)}});
        }
    }
    out.finish();
    return kExitOk;
}

struct SftArgs {
    std::string input;
    std::string output = "-";
    std::uint64_t seed = 0;
};

int run_sft_split(const SftArgs& a) {
    const auto part = zeval::sft_partition(read_ranked_sets(a.input), a.seed);
    Output out(a.output);
    for (const auto* bucket : {&part.pairwise, &part.triplet, &part.quadruplet}) {
        for (const auto& inst : *bucket) out.line(zeval::to_json(inst));
    }
    out.finish();
    std::cerr << "questions  pairwise " << part.questions.pairwise << "  triplet " << part.questions.triplet
              << "  quadruplet " << part.questions.quadruplet << '\n'
              << "instances  pairwise " << part.pairwise.size() << "  triplet " << part.triplet.size()
              << "  quadruplet " << part.quadruplet.size() << "  (before dedup " << part.raw_pairwise << '/'
              << part.raw_triplet << '/' << part.raw_quadruplet << ")\n";
    return kExitOk;
}

// --------------------------------------------------------------------------

struct RewardArgs {
    std::string input;
    std::string output = "-";
    std::string accuracy = "full";
};

int run_reward(const RewardArgs& a) {
    zeval::RolloutOptions options;
    options.accuracy = parse_accuracy(a.accuracy);
    const auto items = read_jsonl(a.input);
    Output out(a.output);
    std::size_t errors = 0;
    for (const auto& item : items) {
        auto scored = zeval::score_request_item(item, options);
        errors += scored.contains("error");
        out.line(scored);
    }
    out.finish();
    if (errors > 0) std::cerr << errors << " of " << items.size() << " items could not be scored\n";
    return kExitOk;
}

struct StatsArgs {
    std::string input;
    std::string output = "-";
};

int run_stats(const StatsArgs& a) {
    std::vector<zeval::EvaluationTrajectory> trajectories;
    std::vector<std::string> references;
    std::size_t rejected = 0;
    const auto items = read_jsonl(a.input);
    for (const auto& item : items) {
        if (!item.is_object() || !item.contains("rollout") || !item.contains("reference") ||
            !item.contains("candidates") || !item["candidates"].is_array() || item["candidates"].empty()) {
            ++rejected;
            continue;
        }
        const auto& rollout = item["rollout"];
        const auto raw = rollout.is_string() ? rollout.get<std::string>() : rollout.dump();
        auto parsed = zeval::parse_strict(raw, item["candidates"].size());
        if (auto* t = std::get_if<zeval::EvaluationTrajectory>(&parsed)) {
            trajectories.push_back(std::move(*t));
            references.push_back(item["reference"].get<std::string>());
        } else {
            ++rejected;
        }
    }
    const auto stats = zeval::trajectory_stats(trajectories, references);
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    Output out(a.output);
    out.line({{"trajectories", trajectories.size()},
              {"rejected", rejected},
              {"responses", stats.responses},
              {"evidence_spans", stats.evidence_spans},
              {"mean_claims_per_response", opt(stats.mean_claims_per_response)},
              {"mean_grounding_degree", opt(stats.mean_grounding_degree)}});
    out.finish();
    return kExitOk;
}

// --------------------------------------------------------------------------

struct BenchmarkArgs {
    std::string task;
    std::string input;
    std::string output;
    std::uint64_t seed = 0;
    std::size_t trials = 1;
    std::size_t concurrency = 4;
    std::string model;
    double top_p = 0.9;
    double temperature = 0.1;
    std::size_t max_tokens = 4096;
    double timeout = 120.0;
    std::size_t retries = 3;
    std::string fixture;
    std::string record;
    std::string template_path;
};

int run_benchmark_cmd(const BenchmarkArgs& a) {
    zeval::BenchmarkOptions options;
    options.task = zeval::parse_task(a.task);
    options.trials = a.trials;
    options.seed = a.seed;
    options.concurrency = a.concurrency;
    options.sampling = {a.top_p, a.temperature, a.max_tokens};
    options.retry.max_retries = a.retries;
    if (!a.template_path.empty()) options.template_text = read_file(a.template_path);

    const auto lines = read_jsonl(a.input);
    const auto records = options.task == zeval::BenchmarkTask::Faithfulness
                             ? parse_records<zeval::BenchmarkRecord>(lines, "record", zeval::faithfulness_record_from_json)
                             : parse_records<zeval::BenchmarkRecord>(lines, "record", zeval::correctness_record_from_json);

    std::unique_ptr<zeval::JudgeClient> base;
    if (!a.fixture.empty()) {
        base = std::make_unique<zeval::FixtureJudgeClient>(a.fixture);
    } else {
        zeval::HttpJudgeConfig cfg;
        cfg.model = a.model;
        cfg.timeout_seconds = a.timeout;
        cfg.apply_environment();
        if (cfg.base_url.empty()) throw UsageError("no judge: pass --fixture or set ZEVAL_BASE_URL");
        if (cfg.model.empty()) throw UsageError("--model is required for a live judge");
        base = std::make_unique<zeval::HttpJudgeClient>(cfg);
    }
    std::unique_ptr<zeval::RecordingJudgeClient> recorder;
    if (!a.record.empty()) {
        std::ofstream(a.record, std::ios::trunc);
        recorder = std::make_unique<zeval::RecordingJudgeClient>(*base, a.record);
    }
    const zeval::JudgeClient& client = recorder ? *recorder : *base;

    const auto report = zeval::run_benchmark(records, client, options);
    zeval::emit_report(report, a.output);
    std::cout << zeval::format_table(report);
    return kExitOk;
}

// --------------------------------------------------------------------------

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t batch_cap = zeval::kDefaultBatchCap;
    std::string token;
    std::string accuracy = "full";
};

int run_serve(const ServeArgs& a) {
    zeval::ServiceConfig cfg;
    cfg.host = a.host;
    cfg.port = a.port;
    cfg.batch_cap = a.batch_cap;
    if (!a.token.empty()) cfg.shared_token = a.token;
    cfg.rollout.accuracy = parse_accuracy(a.accuracy);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    zeval::RewardService service(cfg);
    const int port = service.bind();
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        service.stop();
    });
    std::cerr << "zeval " << ZEVAL_VERSION << " serving on http://" << a.host << ':' << port << '\n' << std::flush;
    service.listen();
    // listen() also returns when the service fails; wake the waiter so it can be joined.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kExitOk;
}

// --------------------------------------------------------------------------

CLI::Option* add_input(CLI::App* sub, std::string& target, const std::string& what) {
    return sub->add_option("-i,--input", target, what + " (JSONL, '-' for stdin)")->required();
}

CLI::Option* add_output(CLI::App* sub, std::string& target) {
    return sub->add_option("-o,--output", target, "Output JSONL path ('-' for stdout)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rule-guided RAG evaluation: judge-trajectory rewards, response synthesis, curricula and benchmarks",
                 "zeval"};
    app.set_version_flag("--version", ZEVAL_VERSION);
    app.require_subcommand(1);
    app.set_config("--config", "", "JSON file with option defaults (top-level keys or per-subcommand objects)");
    app.config_formatter(std::make_shared<zeval::cli::JsonConfig>(std::vector<std::string>{
        "synthesize", "curriculum", "sft-split", "reward", "stats", "benchmark", "serve"}));

    SynthesizeArgs syn;
    auto* synthesize = app.add_subcommand("synthesize", "Generate ranked response sets with context-aware decoding");
    add_input(synthesize, syn.input, "Corpus of {question, passage}");
    add_output(synthesize, syn.output);
    synthesize->add_option("--seed", syn.seed, "Seed for corpus sampling and sampled decoding")->capture_default_str();
    synthesize->add_option("--sample-size", syn.sample_size, "Questions to draw after filtering (default: all)");
    synthesize->add_option("--max-ref-tokens", syn.max_ref_tokens, "Drop passages longer than this")
        ->capture_default_str();
    synthesize->add_option("--alphas", syn.alphas, "Context-adjustment strengths, most preferred first")
        ->delimiter(',')
        ->capture_default_str();
    synthesize->add_option("--max-tokens", syn.max_tokens, "Response length cap in tokens")->capture_default_str();
    synthesize->add_flag("--sample", syn.sample, "Sample from the adjusted distribution instead of greedy decoding");
    synthesize->add_option("--concurrency", syn.concurrency, "Questions decoded in parallel")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    auto* toy = synthesize->add_option("--toy-corpus", syn.toy_corpus, "Text file for the offline bigram generator")
                    ->check(CLI::ExistingFile);
    synthesize->add_option("--context-mix", syn.context_mix, "Context weight of the offline generator")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    auto* replay = synthesize->add_option("--replay", syn.replay, "Replay a recorded provider fixture")
                       ->check(CLI::ExistingFile)
                       ->excludes(toy);
    synthesize->add_option("--end-token", syn.end_token, "Generator end-of-text token")->capture_default_str();
    synthesize->add_option("--separator", syn.separator, "Token separator when replaying");
    synthesize->add_option("--record", syn.record, "Record provider responses to a fixture")->excludes(replay);
    synthesize->add_option("--model", syn.model, "Completion model name for the remote generator");
    synthesize->add_option("--top-k", syn.top_k, "Log-probabilities requested per step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synthesize->add_option("--timeout", syn.timeout, "Per-request timeout in seconds")->capture_default_str();

    CurriculumArgs cur;
    auto* curriculum = app.add_subcommand("curriculum", "Plan per-epoch candidate subsets from ranked sets");
    add_input(curriculum, cur.input, "Ranked response sets");
    add_output(curriculum, cur.output);
    curriculum->add_option("--seed", cur.seed, "Seed for subsets and presentation order")->capture_default_str();
    curriculum->add_option("--plan", cur.plan, "Comma-separated <epoch>:<k> stages")->capture_default_str();

    SftArgs sft;
    auto* sft_split = app.add_subcommand("sft-split", "Split ranked sets into balanced SFT instances");
    add_input(sft_split, sft.input, "Ranked response sets with four candidates");
    add_output(sft_split, sft.output);
    sft_split->add_option("--seed", sft.seed, "Seed for role assignment and presentation")->capture_default_str();

    RewardArgs rew;
    auto* reward = app.add_subcommand("reward", "Score judge rollouts against ground-truth rankings");
    add_input(reward, rew.input, "Items of {question, reference, candidates, ground_truth_order, rollout}");
    add_output(reward, rew.output);
    reward->add_option("--accuracy", rew.accuracy, "Accuracy reward: full ranking or top only")
        ->check(CLI::IsMember({"full", "top"}))
        ->capture_default_str();

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "Claim-count and grounding telemetry over judge rollouts");
    add_input(stats, st.input, "Items of {reference, candidates, rollout}");
    add_output(stats, st.output);

    BenchmarkArgs bm;
    auto* benchmark = app.add_subcommand("benchmark", "Run the faithfulness or correctness benchmark");
    benchmark->add_option("--task", bm.task, "Benchmark task")
        ->required()
        ->check(CLI::IsMember({"faithfulness", "correctness"}));
    add_input(benchmark, bm.input, "Benchmark records");
    benchmark->add_option("-o,--output", bm.output, "Report path prefix; writes <prefix>.json and <prefix>.txt")
        ->required();
    benchmark->add_option("--seed", bm.seed, "Seed of the first trial")->capture_default_str();
    benchmark->add_option("--trials", bm.trials, "Judging repetitions with consecutive seeds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    benchmark->add_option("--concurrency", bm.concurrency, "Judge requests in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    benchmark->add_option("--model", bm.model, "Judge model name");
    benchmark->add_option("--top-p", bm.top_p, "Nucleus sampling mass")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    benchmark->add_option("--temperature", bm.temperature, "Sampling temperature")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    benchmark->add_option("--max-tokens", bm.max_tokens, "Judge completion length cap")->capture_default_str();
    benchmark->add_option("--timeout", bm.timeout, "Per-request timeout in seconds")->capture_default_str();
    benchmark->add_option("--retries", bm.retries, "Retries for transient judge failures")->capture_default_str();
    auto* fixture = benchmark->add_option("--fixture", bm.fixture, "Replay recorded judgments instead of calling a judge")
                        ->check(CLI::ExistingFile);
    benchmark->add_option("--record", bm.record, "Record judgments to a fixture")->excludes(fixture);
    benchmark->add_option("--template", bm.template_path, "Judge prompt template file")->check(CLI::ExistingFile);

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "Serve batch rewards over HTTP");
    serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
    serve->add_option("--port", sv.port, "Bind port (0 picks a free port)")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    serve->add_option("--batch-cap", sv.batch_cap, "Maximum items per request")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve->add_option("--token", sv.token, "Require this bearer token on reward requests");
    serve->add_option("--accuracy", sv.accuracy, "Accuracy reward: full ranking or top only")
        ->check(CLI::IsMember({"full", "top"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synthesize) return run_synthesize(syn);
        if (*curriculum) return run_curriculum(cur);
        if (*sft_split) return run_sft_split(sft);
        if (*reward) return run_reward(rew);
        if (*stats) return run_stats(st);
        if (*benchmark) return run_benchmark_cmd(bm);
        return run_serve(sv);
    } catch (const UsageError& e) {
        std::cerr << "zeval: " << e.what() << "\nRun with --help for more information.\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "zeval: error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
