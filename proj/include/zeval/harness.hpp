#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "zeval/error.hpp"
#include "zeval/metrics.hpp"

namespace zeval {

inline constexpr std::size_t kDefaultMaxCandidates = 8;

/// Version tag and text of the built-in judge prompt template.
std::string_view default_judge_template_version();
std::string_view default_judge_template();

struct JudgePrompt {
    std::string question;
    std::string reference;
    std::vector<std::string> candidates;
    std::string rendered;
};

/// The JSON layout the judge is asked to produce: one placeholder answer with
/// one placeholder claim. It satisfies parse_strict for k = 1.
std::string schema_example();

/// Renders the template with {question}, {reference}, {num_candidates},
/// {candidates} and {schema} substituted. Throws ContractError for fewer than
/// two or more than max_candidates candidates.
JudgePrompt build_prompt(std::string question, std::string reference, std::vector<std::string> candidates,
                         std::string_view template_text = default_judge_template(),
                         std::size_t max_candidates = kDefaultMaxCandidates);

struct JudgeSamplingConfig {
    double top_p = 0.9;
    double temperature = 0.1;
    std::size_t max_tokens = 4096;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    /// Raw completion text for the prompt. seed distinguishes repeated trials.
    virtual std::string complete(const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                                 std::uint64_t seed) const = 0;
};

struct HttpJudgeConfig {
    std::string base_url;
    std::string model;
    std::string api_key;
    double timeout_seconds = 120.0;

    /// Fills base_url and api_key from ZEVAL_BASE_URL / ZEVAL_API_KEY where unset.
    void apply_environment();
};

/// OpenAI-compatible /chat/completions client.
class HttpJudgeClient final : public JudgeClient {
public:
    explicit HttpJudgeClient(HttpJudgeConfig config);
    std::string complete(const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                         std::uint64_t seed) const override;

private:
    HttpJudgeConfig config_;
};

/// JSONL fixture of {prompt_hash, seed, completion}. A lookup first tries the
/// exact seed, then an entry recorded without a seed.
class FixtureJudgeClient final : public JudgeClient {
public:
    explicit FixtureJudgeClient(const std::string& path);
    std::string complete(const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                         std::uint64_t seed) const override;

    void add(const std::string& rendered_prompt, std::optional<std::uint64_t> seed, std::string completion);
    std::size_t size() const noexcept { return entries_.size(); }

    FixtureJudgeClient() = default;

private:
    std::unordered_map<std::string, std::string> entries_;
};

/// Forwards to another client and appends each exchange to a fixture file.
class RecordingJudgeClient final : public JudgeClient {
public:
    RecordingJudgeClient(const JudgeClient& inner, std::string path);
    std::string complete(const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                         std::uint64_t seed) const override;

private:
    const JudgeClient& inner_;
    std::string path_;
    mutable std::mutex mutex_;
};

nlohmann::json fixture_entry(const std::string& rendered_prompt, std::optional<std::uint64_t> seed,
                             const std::string& completion);

struct RetryPolicy {
    std::size_t max_retries = 3;
    double initial_backoff_seconds = 0.5;
    double backoff_multiplier = 2.0;
};

/// Calls the client, retrying transport, timeout and rate-limit failures with
/// exponential backoff. Other errors, and the last failure once retries are
/// used up, propagate.
std::string judge_once(const JudgeClient& client, const JudgePrompt& prompt, const JudgeSamplingConfig& sampling,
                       std::uint64_t seed, const RetryPolicy& retry = {});

enum class BenchmarkTask { Faithfulness, Correctness };

const char* to_string(BenchmarkTask task) noexcept;
BenchmarkTask parse_task(std::string_view name);

struct BenchmarkRecord {
    BenchmarkTask task = BenchmarkTask::Faithfulness;
    std::string question;
    std::string reference;
    /// Faithfulness: {grounded answer, ungrounded answer}. Correctness: {response_1, response_2}.
    std::array<std::string, 2> candidates;
    /// Correctness only: h = H(response_2) - H(response_1).
    int h = 0;
};

/// {question, context, answer_with_context, answer_without_context}
BenchmarkRecord faithfulness_record_from_json(const nlohmann::json& j);
/// {question, ground_truth, response_1, response_2, label}
BenchmarkRecord correctness_record_from_json(const nlohmann::json& j);

struct BenchmarkOptions {
    BenchmarkTask task = BenchmarkTask::Faithfulness;
    std::size_t trials = 1;
    std::uint64_t seed = 0;
    std::size_t concurrency = 4;
    JudgeSamplingConfig sampling;
    RetryPolicy retry;
    std::string template_text = std::string(default_judge_template());
};

struct TrialResult {
    std::uint64_t seed = 0;
    std::size_t strict_parsed = 0;
    std::size_t lenient_recovered = 0;
    std::size_t unrecoverable = 0;
    std::size_t request_failures = 0;
    /// best/middle/worst or pearson/spearman/kendall; null with `error` set when undefined.
    nlohmann::json metrics;
    std::string error;
};

struct BenchmarkReport {
    BenchmarkTask task = BenchmarkTask::Faithfulness;
    std::size_t records = 0;
    std::vector<TrialResult> trials;
    /// Mean of each metric over the trials where it is defined.
    nlohmann::json mean_metrics;
};

/// Judges every record once per trial (seed + trial), parses strictly with a
/// lenient fallback, scores both answers and aggregates metrics. Per-record
/// failures are tallied; RemoteError(Misconfigured) aborts.
BenchmarkReport run_benchmark(const std::vector<BenchmarkRecord>& records, const JudgeClient& client,
                              const BenchmarkOptions& options);

nlohmann::json to_json(const BenchmarkReport& report);
BenchmarkReport benchmark_report_from_json(const nlohmann::json& j);
std::string format_table(const BenchmarkReport& report);

/// Writes <path_prefix>.json and <path_prefix>.txt. Throws Error when either
/// file cannot be written.
void emit_report(const BenchmarkReport& report, const std::string& path_prefix);

}  // namespace zeval
