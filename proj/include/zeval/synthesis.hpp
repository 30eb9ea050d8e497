#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "zeval/error.hpp"
#include "zeval/ranked_set.hpp"

namespace zeval {

/// Token -> log-probability over the tokens with finite mass. Ordered so that
/// ties and iteration are deterministic.
struct SparseDistribution {
    std::map<std::string, double> log_probs;

    static SparseDistribution from_probabilities(const std::map<std::string, double>& probs);

    bool empty() const noexcept { return log_probs.empty(); }
    std::size_t size() const noexcept { return log_probs.size(); }

    /// Shifts log-probabilities so that exp() sums to one.
    void normalize();
    /// exp(log p) of the token, 0 outside the support.
    double probability(const std::string& token) const;
    double total_probability() const;
    /// Highest-probability token; ties go to the lexicographically smallest.
    const std::string& argmax() const;
};

struct CadOptions {
    /// Tokens missing from one conditional get (that conditional's min log-prob - floor_gap).
    double floor_gap = 10.0;
};

/// Context-aware contrast: softmax((1 + alpha) log p_ctx - alpha log p_noctx) over
/// the union support. At alpha == 0 the no-context term carries no weight and
/// the output support is the context support. Throws ContractError when the
/// resulting support is empty.
SparseDistribution cad_adjust(const SparseDistribution& with_context, const SparseDistribution& without_context,
                              double alpha, const CadOptions& options = {});

enum class Conditional { WithContext, WithoutContext };

const char* to_string(Conditional conditional) noexcept;

struct GenerationInput {
    std::string question;
    std::string context;
};

/// Supplies next-token distributions for both conditionals. Implementations
/// must be safe to call from concurrent decodes.
class NextTokenProvider {
public:
    virtual ~NextTokenProvider() = default;

    virtual SparseDistribution next(const GenerationInput& input, Conditional conditional,
                                    std::span<const std::string> prefix) const = 0;
    virtual const std::string& end_token() const = 0;
    virtual std::string detokenize(std::span<const std::string> tokens) const = 0;
};

/// A provider failure raised from inside decode, with what was decoded so far.
class DecodeError : public RemoteError {
public:
    DecodeError(const RemoteError& cause, std::vector<std::string> partial_tokens, std::string partial_text)
        : RemoteError(cause.kind(), cause.what(), cause.http_status()),
          partial_tokens_(std::move(partial_tokens)),
          partial_text_(std::move(partial_text)) {}

    const std::vector<std::string>& partial_tokens() const noexcept { return partial_tokens_; }
    const std::string& partial_text() const noexcept { return partial_text_; }

private:
    std::vector<std::string> partial_tokens_;
    std::string partial_text_;
};

inline constexpr std::size_t kDefaultMaxResponseTokens = 256;

struct SynthesisConfig {
    double alpha = 0.0;
    std::size_t max_tokens = kDefaultMaxResponseTokens;
    /// Greedy when unset; otherwise sample from the adjusted distribution with this seed.
    std::optional<std::uint64_t> sample_seed;
    std::vector<double> alpha_schedule{0.0, -0.5, -1.0, -1.4};
    CadOptions cad;
};

/// Generates one response token by token from cad_adjust until the provider's
/// end token or max_tokens. Provider failures surface as DecodeError.
std::string decode(const NextTokenProvider& provider, const GenerationInput& input, const SynthesisConfig& config);

/// One decode per alpha in config.alpha_schedule. Candidates are stored in
/// descending alpha, so preference_order is the identity.
RankedResponseSet synthesize_set(const NextTokenProvider& provider, const GenerationInput& input,
                                 const SynthesisConfig& config);

/// Bigram language model with additive smoothing as the context-free
/// conditional; the context conditional mixes in a unigram over the context
/// tokens: (1 - lambda) * bigram + lambda * unigram(context).
class ToyProvider final : public NextTokenProvider {
public:
    ToyProvider(const std::vector<std::string>& corpus, double context_mix, double smoothing = 0.1);

    SparseDistribution next(const GenerationInput& input, Conditional conditional,
                            std::span<const std::string> prefix) const override;
    const std::string& end_token() const override { return end_token_; }
    std::string detokenize(std::span<const std::string> tokens) const override;

    double context_mix() const noexcept { return context_mix_; }
    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

private:
    std::map<std::string, double> bigram(const std::string& previous) const;

    double context_mix_;
    double smoothing_;
    std::string end_token_ = "</s>";
    std::vector<std::string> vocabulary_;
    std::unordered_map<std::string, std::unordered_map<std::string, double>> bigram_counts_;
    std::unordered_map<std::string, double> history_counts_;
};

struct RemoteProviderConfig {
    std::string base_url;
    std::string model;
    std::string api_key;
    std::size_t top_k = 20;
    double timeout_seconds = 60.0;
    /// {question} and {context} are substituted; the decoded prefix is appended.
    std::string context_template = "Answer the question using the passage.\nPassage: {context}\nQuestion: {question}\nAnswer:";
    std::string no_context_template = "Answer the question.\nQuestion: {question}\nAnswer:";
    std::string end_token = "<|endoftext|>";

    /// Fills base_url and api_key from ZEVAL_BASE_URL / ZEVAL_API_KEY where unset.
    void apply_environment();
};

/// Queries an OpenAI-compatible /completions endpoint for one token with top-k
/// log-probabilities. Fewer than top_k returned entries is a Truncated error.
class RemoteProvider final : public NextTokenProvider {
public:
    explicit RemoteProvider(RemoteProviderConfig config);

    SparseDistribution next(const GenerationInput& input, Conditional conditional,
                            std::span<const std::string> prefix) const override;
    const std::string& end_token() const override { return config_.end_token; }
    std::string detokenize(std::span<const std::string> tokens) const override;

    std::string render_prompt(const GenerationInput& input, Conditional conditional,
                              std::span<const std::string> prefix) const;

private:
    RemoteProviderConfig config_;
};

/// Key of one provider query in a fixture file.
std::string provider_query_hash(const GenerationInput& input, Conditional conditional,
                                std::span<const std::string> prefix);

/// Wraps a provider and appends every answered query to a JSONL fixture.
class RecordingProvider final : public NextTokenProvider {
public:
    RecordingProvider(const NextTokenProvider& inner, std::string fixture_path);

    SparseDistribution next(const GenerationInput& input, Conditional conditional,
                            std::span<const std::string> prefix) const override;
    const std::string& end_token() const override { return inner_.end_token(); }
    std::string detokenize(std::span<const std::string> tokens) const override { return inner_.detokenize(tokens); }

private:
    const NextTokenProvider& inner_;
    std::string path_;
    mutable std::mutex mutex_;
};

/// Replays a fixture written by RecordingProvider. Unknown queries raise
/// RemoteError(MissingFixture).
class ReplayProvider final : public NextTokenProvider {
public:
    ReplayProvider(const std::string& fixture_path, std::string end_token, std::string separator);

    SparseDistribution next(const GenerationInput& input, Conditional conditional,
                            std::span<const std::string> prefix) const override;
    const std::string& end_token() const override { return end_token_; }
    std::string detokenize(std::span<const std::string> tokens) const override;

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::unordered_map<std::string, std::vector<std::pair<std::string, double>>> entries_;
    std::string end_token_;
    std::string separator_;
};

}  // namespace zeval
