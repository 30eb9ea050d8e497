#include "zeval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "http_client.hpp"
#include "zeval/hash.hpp"
#include "zeval/rewards.hpp"
#include "zeval/trajectory.hpp"

namespace zeval {

using nlohmann::json;

namespace {
#include "judge_template.inc"

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

}  // namespace

std::string_view default_judge_template_version() { return kJudgeTemplateVersion; }
std::string_view default_judge_template() { return kJudgeTemplate; }

std::string schema_example() {
    EvaluationTrajectory example;
    example.evaluations.push_back(
        {0, {{"<one atomic claim from the answer>", true, {"<span copied verbatim from the reference>"},
              "<how the evidence relates to the claim>"}}});
    return to_json(example).dump(2);
}

JudgePrompt build_prompt(std::string question, std::string reference, std::vector<std::string> candidates,
                         std::string_view template_text, std::size_t max_candidates) {
    if (candidates.size() < 2) throw ContractError("build_prompt: at least two candidate answers are required");
    if (candidates.size() > max_candidates) {
        throw ContractError("build_prompt: " + std::to_string(candidates.size()) + " candidates exceed the limit of " +
                            std::to_string(max_candidates));
    }
    std::string listing;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        listing += "[Answer " + std::to_string(i) + "]\n" + candidates[i] + "\n";
        if (i + 1 < candidates.size()) listing += '\n';
    }
    // Placeholders are first swapped for sentinels so inserted text is never re-scanned.
    const auto sentinel = [](std::string_view name) { return '\x01' + std::string(name) + '\x01'; };
    const std::pair<std::string_view, std::string> fills[] = {{"schema", schema_example()},
                                                               {"num_candidates", std::to_string(candidates.size())},
                                                               {"question", question},
                                                               {"reference", reference},
                                                               {"candidates", listing}};
    std::string rendered(template_text);
    for (const auto& [name, _] : fills) {
        rendered = replace_all(std::move(rendered), "{" + std::string(name) + "}", sentinel(name));
    }
    for (const auto& [name, value] : fills) rendered = replace_all(std::move(rendered), sentinel(name), value);
    return {std::move(question), std::move(reference), std::move(candidates), std::move(rendered)};
}

// ---------------------------------------------------------------------------

void HttpJudgeConfig::apply_environment() {
    if (base_url.empty()) {
        if (const char* env = std::getenv("ZEVAL_BASE_URL")) base_url = env;
    }
    if (api_key.empty()) {
        if (const char* env = std::getenv("ZEVAL_API_KEY")) api_key = env;
    }
}

HttpJudgeClient::HttpJudgeClient(HttpJudgeConfig config) : config_(std::move(config)) {
    detail::parse_base_url(config_.base_url);
    if (config_.model.empty()) throw RemoteError(RemoteError::Kind::Misconfigured, "judge model name is empty");
}

std::string HttpJudgeClient::complete(const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                                      std::uint64_t seed) const {
    const json request{{"model", config_.model},
                       {"messages", json::array({{{"role", "user"}, {"content", prompt.rendered}}})},
                       {"temperature", sampling.temperature},
                       {"top_p", sampling.top_p},
                       {"max_tokens", sampling.max_tokens},
                       {"seed", seed}};
    const auto reply = detail::post_json(detail::parse_base_url(config_.base_url), "/chat/completions",
                                         request.dump(), config_.api_key, config_.timeout_seconds);
    if (reply.status == 429) {
        throw RemoteError(RemoteError::Kind::RateLimit, "judge endpoint rate-limited the request", reply.status);
    }
    if (reply.status == 401 || reply.status == 403 || reply.status == 404) {
        throw RemoteError(RemoteError::Kind::Misconfigured,
                          "judge endpoint rejected the request with HTTP " + std::to_string(reply.status),
                          reply.status);
    }
    if (reply.status < 200 || reply.status >= 300) {
        throw RemoteError(RemoteError::Kind::Transport, "judge endpoint returned HTTP " + std::to_string(reply.status),
                          reply.status);
    }
    const json body = json::parse(reply.body, nullptr, false);
    try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw RemoteError(RemoteError::Kind::Malformed, "judge reply has no choices[0].message.content");
    }
}

// ---------------------------------------------------------------------------

namespace {

std::string fixture_key(const std::string& prompt_hash, std::optional<std::uint64_t> seed) {
    return prompt_hash + (seed ? ":" + std::to_string(*seed) : std::string(":*"));
}

}  // namespace

json fixture_entry(const std::string& rendered_prompt, std::optional<std::uint64_t> seed,
                   const std::string& completion) {
    json j{{"prompt_hash", sha256_hex(rendered_prompt)}, {"completion", completion}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    return j;
}

FixtureJudgeClient::FixtureJudgeClient(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RemoteError(RemoteError::Kind::Misconfigured, "cannot open judge fixture " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (!j.is_object() || !j.contains("prompt_hash") || !j.contains("completion")) {
            throw RemoteError(RemoteError::Kind::Malformed,
                              path + ":" + std::to_string(line_no) + ": malformed judge fixture entry");
        }
        std::optional<std::uint64_t> seed;
        if (j.contains("seed") && !j["seed"].is_null()) seed = j["seed"].get<std::uint64_t>();
        entries_[fixture_key(j["prompt_hash"].get<std::string>(), seed)] = j["completion"].get<std::string>();
    }
}

void FixtureJudgeClient::add(const std::string& rendered_prompt, std::optional<std::uint64_t> seed,
                             std::string completion) {
    entries_[fixture_key(sha256_hex(rendered_prompt), seed)] = std::move(completion);
}

std::string FixtureJudgeClient::complete(const JudgePrompt& prompt, const JudgeSamplingConfig&,
                                         std::uint64_t seed) const {
    const auto hash = sha256_hex(prompt.rendered);
    if (auto it = entries_.find(fixture_key(hash, seed)); it != entries_.end()) return it->second;
    if (auto it = entries_.find(fixture_key(hash, std::nullopt)); it != entries_.end()) return it->second;
    throw RemoteError(RemoteError::Kind::MissingFixture, "no recorded judgment for prompt " + hash);
}

RecordingJudgeClient::RecordingJudgeClient(const JudgeClient& inner, std::string path)
    : inner_(inner), path_(std::move(path)) {}

std::string RecordingJudgeClient::complete(const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                                           std::uint64_t seed) const {
    auto completion = inner_.complete(prompt, sampling, seed);
    const auto line = fixture_entry(prompt.rendered, seed, completion).dump();
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot append to judge fixture " + path_);
    out << line << '\n';
    return completion;
}

std::string judge_once(const JudgeClient& client, const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                       std::uint64_t seed, const RetryPolicy& retry) {
    double backoff = retry.initial_backoff_seconds;
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return client.complete(prompt, sampling, seed);
        } catch (const RemoteError& e) {
            const bool retryable = e.kind() == RemoteError::Kind::Transport ||
                                   e.kind() == RemoteError::Kind::Timeout ||
                                   e.kind() == RemoteError::Kind::RateLimit;
            if (!retryable || attempt >= retry.max_retries) throw;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= retry.backoff_multiplier;
    }
}

// ---------------------------------------------------------------------------

const char* to_string(BenchmarkTask task) noexcept {
    return task == BenchmarkTask::Faithfulness ? "faithfulness" : "correctness";
}

BenchmarkTask parse_task(std::string_view name) {
    if (name == "faithfulness") return BenchmarkTask::Faithfulness;
    if (name == "correctness") return BenchmarkTask::Correctness;
    throw ContractError("unknown benchmark task '" + std::string(name) + "'");
}

BenchmarkRecord faithfulness_record_from_json(const json& j) {
    try {
        return {BenchmarkTask::Faithfulness,
                j.at("question").get<std::string>(),
                j.at("context").get<std::string>(),
                {j.at("answer_with_context").get<std::string>(), j.at("answer_without_context").get<std::string>()},
                0};
    } catch (const json::exception& e) {
        throw ContractError(std::string("malformed faithfulness record: ") + e.what());
    }
}

BenchmarkRecord correctness_record_from_json(const json& j) {
    try {
        const auto& label = j.at("label");
        const int h = label.is_number_integer() ? label.get<int>() : label_to_h(label.get<std::string>());
        if (h < -2 || h > 2) throw ContractError("correctness label out of range [-2, 2]");
        return {BenchmarkTask::Correctness,
                j.at("question").get<std::string>(),
                j.at("ground_truth").get<std::string>(),
                {j.at("response_1").get<std::string>(), j.at("response_2").get<std::string>()},
                h};
    } catch (const json::exception& e) {
        throw ContractError(std::string("malformed correctness record: ") + e.what());
    }
}

namespace {

enum class ParseRoute { Strict, Lenient, Unrecoverable, RequestFailed };

struct JudgedRecord {
    ParseRoute route = ParseRoute::RequestFailed;
    ClaimCounts first;
    ClaimCounts second;
};

JudgedRecord judge_record(const BenchmarkRecord& record, const JudgeClient& client, const BenchmarkOptions& options,
                          std::uint64_t seed) {
    const auto prompt = build_prompt(record.question, record.reference,
                                     {record.candidates[0], record.candidates[1]}, options.template_text);
    std::string raw;
    try {
        raw = judge_once(client, prompt, options.sampling, seed, options.retry);
    } catch (const RemoteError& e) {
        if (e.kind() == RemoteError::Kind::Misconfigured) throw;
        return {};
    }
    auto parsed = parse_strict(raw, 2);
    if (const auto* trajectory = std::get_if<EvaluationTrajectory>(&parsed)) {
        return {ParseRoute::Strict, claim_counts(trajectory->evaluations[0]),
                claim_counts(trajectory->evaluations[1])};
    }
    const auto lenient = extract_lenient(raw);
    const auto a = lenient.answer(0);
    const auto b = lenient.answer(1);
    if (!a || !b) return {ParseRoute::Unrecoverable, {}, {}};
    return {ParseRoute::Lenient, *a, *b};
}

TrialResult run_trial(const std::vector<BenchmarkRecord>& records, const JudgeClient& client,
                      const BenchmarkOptions& options, std::uint64_t seed) {
    std::vector<JudgedRecord> judged(records.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
            try {
                judged[i] = judge_record(records[i], client, options, seed);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = records.size();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(records.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    TrialResult trial;
    trial.seed = seed;
    std::vector<FaithfulnessRecord> faith;
    std::vector<CorrectnessRecord> correct;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& j = judged[i];
        switch (j.route) {
            case ParseRoute::Strict: ++trial.strict_parsed; break;
            case ParseRoute::Lenient: ++trial.lenient_recovered; break;
            case ParseRoute::Unrecoverable: ++trial.unrecoverable; continue;
            case ParseRoute::RequestFailed: ++trial.request_failures; continue;
        }
        if (options.task == BenchmarkTask::Faithfulness) {
            faith.push_back({Score::from_counts(j.first), Score::from_counts(j.second)});
        } else {
            correct.push_back({records[i].h, response_score(j.second) - response_score(j.first)});
        }
    }
    try {
        trial.metrics = options.task == BenchmarkTask::Faithfulness ? to_json(faithfulness_agreement(faith))
                                                                    : to_json(correctness_correlations(correct));
    } catch (const ContractError& e) {
        trial.metrics = nullptr;
        trial.error = e.what();
    }
    return trial;
}

std::vector<std::string> metric_names(BenchmarkTask task) {
    if (task == BenchmarkTask::Faithfulness) return {"best", "middle", "worst"};
    return {"pearson", "spearman", "kendall"};
}

}  // namespace

BenchmarkReport run_benchmark(const std::vector<BenchmarkRecord>& records, const JudgeClient& client,
                              const BenchmarkOptions& options) {
    for (const auto& r : records) {
        if (r.task != options.task) throw ContractError("benchmark record task does not match the requested task");
    }
    BenchmarkReport report;
    report.task = options.task;
    report.records = records.size();
    const std::size_t trials = std::max<std::size_t>(options.trials, 1);
    for (std::size_t t = 0; t < trials; ++t) report.trials.push_back(run_trial(records, client, options, options.seed + t));

    report.mean_metrics = json::object();
    for (const auto& name : metric_names(options.task)) {
        double sum = 0.0;
        std::size_t defined = 0;
        for (const auto& trial : report.trials) {
            if (trial.metrics.is_object()) {
                sum += trial.metrics.at(name).get<double>();
                ++defined;
            }
        }
        report.mean_metrics[name] = defined == 0 ? json(nullptr) : json(sum / static_cast<double>(defined));
    }
    return report;
}

json to_json(const BenchmarkReport& report) {
    json trials = json::array();
    std::size_t strict = 0;
    std::size_t lenient = 0;
    std::size_t unrecoverable = 0;
    std::size_t failures = 0;
    for (const auto& t : report.trials) {
        json item{{"seed", t.seed},
                  {"strict_parsed", t.strict_parsed},
                  {"lenient_recovered", t.lenient_recovered},
                  {"unrecoverable", t.unrecoverable},
                  {"request_failures", t.request_failures},
                  {"metrics", t.metrics}};
        if (!t.error.empty()) item["error"] = t.error;
        trials.push_back(std::move(item));
        strict += t.strict_parsed;
        lenient += t.lenient_recovered;
        unrecoverable += t.unrecoverable;
        failures += t.request_failures;
    }
    json j{{"task", to_string(report.task)},
           {"records", report.records},
           {"trials", std::move(trials)},
           {"strict_parsed", strict},
           {"lenient_recovered", lenient},
           {"unrecoverable", unrecoverable},
           {"request_failures", failures},
           {"judge_template", std::string(default_judge_template_version())}};
    for (const auto& [name, value] : report.mean_metrics.items()) j[name] = value;
    return j;
}

BenchmarkReport benchmark_report_from_json(const json& j) {
    BenchmarkReport report;
    report.task = parse_task(j.at("task").get<std::string>());
    report.records = j.at("records").get<std::size_t>();
    for (const auto& t : j.at("trials")) {
        TrialResult trial;
        trial.seed = t.at("seed").get<std::uint64_t>();
        trial.strict_parsed = t.at("strict_parsed").get<std::size_t>();
        trial.lenient_recovered = t.at("lenient_recovered").get<std::size_t>();
        trial.unrecoverable = t.at("unrecoverable").get<std::size_t>();
        trial.request_failures = t.at("request_failures").get<std::size_t>();
        trial.metrics = t.at("metrics");
        trial.error = t.value("error", std::string{});
        report.trials.push_back(std::move(trial));
    }
    report.mean_metrics = json::object();
    for (const auto& name : metric_names(report.task)) report.mean_metrics[name] = j.at(name);
    return report;
}

std::string format_table(const BenchmarkReport& report) {
    const auto names = metric_names(report.task);
    std::ostringstream out;
    out << "task: " << to_string(report.task) << "   records: " << report.records
        << "   trials: " << report.trials.size() << '\n';
    out << std::left << std::setw(8) << "trial" << std::setw(8) << "strict" << std::setw(9) << "lenient"
        << std::setw(8) << "failed";
    for (const auto& n : names) out << std::right << std::setw(10) << n;
    out << '\n';
    auto cell = [&](const json& v) {
        std::ostringstream c;
        if (v.is_number()) {
            c << std::fixed << std::setprecision(4) << v.get<double>();
        } else {
            c << "n/a";
        }
        return c.str();
    };
    for (std::size_t i = 0; i < report.trials.size(); ++i) {
        const auto& t = report.trials[i];
        out << std::left << std::setw(8) << i << std::setw(8) << t.strict_parsed << std::setw(9)
            << t.lenient_recovered << std::setw(8) << (t.unrecoverable + t.request_failures);
        for (const auto& n : names) {
            out << std::right << std::setw(10) << cell(t.metrics.is_object() ? t.metrics.at(n) : json(nullptr));
        }
        out << '\n';
    }
    out << std::left << std::setw(33) << "mean";
    for (const auto& n : names) out << std::right << std::setw(10) << cell(report.mean_metrics.at(n));
    out << '\n';
    return out.str();
}

void emit_report(const BenchmarkReport& report, const std::string& path_prefix) {
    const auto write = [](const std::string& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write report file " + path);
        out << text;
        if (!out.flush()) throw Error("failed writing report file " + path);
    };
    write(path_prefix + ".json", to_json(report).dump(2) + "\n");
    write(path_prefix + ".txt", format_table(report));
}

}  // namespace zeval
