#include "zeval/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "http_client.hpp"
#include "zeval/hash.hpp"
#include "zeval/tokenize.hpp"

namespace zeval {

using nlohmann::json;

SparseDistribution SparseDistribution::from_probabilities(const std::map<std::string, double>& probs) {
    SparseDistribution d;
    for (const auto& [token, p] : probs) {
        if (p > 0.0) d.log_probs.emplace(token, std::log(p));
    }
    d.normalize();
    return d;
}

void SparseDistribution::normalize() {
    if (log_probs.empty()) return;
    double max_lp = -std::numeric_limits<double>::infinity();
    for (const auto& [_, lp] : log_probs) max_lp = std::max(max_lp, lp);
    double sum = 0.0;
    for (const auto& [_, lp] : log_probs) sum += std::exp(lp - max_lp);
    const double log_z = max_lp + std::log(sum);
    for (auto& [_, lp] : log_probs) lp -= log_z;
}

double SparseDistribution::probability(const std::string& token) const {
    auto it = log_probs.find(token);
    return it == log_probs.end() ? 0.0 : std::exp(it->second);
}

double SparseDistribution::total_probability() const {
    double sum = 0.0;
    for (const auto& [_, lp] : log_probs) sum += std::exp(lp);
    return sum;
}

const std::string& SparseDistribution::argmax() const {
    if (log_probs.empty()) throw ContractError("argmax of an empty distribution");
    auto best = log_probs.begin();
    for (auto it = std::next(best); it != log_probs.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return best->first;
}

namespace {

double floor_of(const SparseDistribution& d, double gap) {
    double min_lp = std::numeric_limits<double>::infinity();
    for (const auto& [_, lp] : d.log_probs) min_lp = std::min(min_lp, lp);
    return min_lp - gap;
}

double log_prob_or(const SparseDistribution& d, const std::string& token, double fallback) {
    auto it = d.log_probs.find(token);
    return it == d.log_probs.end() ? fallback : it->second;
}

}  // namespace

SparseDistribution cad_adjust(const SparseDistribution& with_context, const SparseDistribution& without_context,
                              double alpha, const CadOptions& options) {
    std::set<std::string> support;
    for (const auto& [token, _] : with_context.log_probs) support.insert(token);
    if (alpha != 0.0) {
        for (const auto& [token, _] : without_context.log_probs) support.insert(token);
    }
    if (support.empty()) throw ContractError("cad_adjust: both distributions are empty");

    // Inputs are normalised first; any per-distribution shift cancels here.
    SparseDistribution ctx = with_context;
    SparseDistribution noctx = without_context;
    ctx.normalize();
    noctx.normalize();
    const double ctx_floor = ctx.empty() ? 0.0 : floor_of(ctx, options.floor_gap);
    const double noctx_floor = noctx.empty() ? 0.0 : floor_of(noctx, options.floor_gap);

    SparseDistribution out;
    for (const auto& token : support) {
        const double lp_ctx = log_prob_or(ctx, token, ctx_floor);
        double score = lp_ctx;
        if (alpha != 0.0) score = (1.0 + alpha) * lp_ctx - alpha * log_prob_or(noctx, token, noctx_floor);
        out.log_probs.emplace(token, score);
    }
    out.normalize();
    return out;
}

const char* to_string(Conditional conditional) noexcept {
    return conditional == Conditional::WithContext ? "ctx" : "noctx";
}

// ---------------------------------------------------------------------------

namespace {

const std::string& sample(const SparseDistribution& d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng) * d.total_probability();
    for (const auto& [token, lp] : d.log_probs) {
        u -= std::exp(lp);
        if (u <= 0.0) return token;
    }
    return d.log_probs.rbegin()->first;
}

}  // namespace

std::string decode(const NextTokenProvider& provider, const GenerationInput& input, const SynthesisConfig& config) {
    std::vector<std::string> tokens;
    std::optional<std::mt19937_64> rng;
    if (config.sample_seed) rng.emplace(*config.sample_seed);

    while (tokens.size() < config.max_tokens) {
        SparseDistribution ctx;
        SparseDistribution noctx;
        try {
            ctx = provider.next(input, Conditional::WithContext, tokens);
            if (config.alpha != 0.0) noctx = provider.next(input, Conditional::WithoutContext, tokens);
        } catch (const RemoteError& e) {
            throw DecodeError(e, tokens, provider.detokenize(tokens));
        }
        const auto adjusted = cad_adjust(ctx, noctx, config.alpha, config.cad);
        const std::string& chosen = rng ? sample(adjusted, *rng) : adjusted.argmax();
        if (chosen == provider.end_token()) break;
        tokens.push_back(chosen);
    }
    return provider.detokenize(tokens);
}

RankedResponseSet synthesize_set(const NextTokenProvider& provider, const GenerationInput& input,
                                 const SynthesisConfig& config) {
    std::vector<double> alphas = config.alpha_schedule;
    if (alphas.size() < 2) throw ContractError("alpha schedule needs at least two values");
    std::sort(alphas.begin(), alphas.end(), std::greater<>());
    if (std::adjacent_find(alphas.begin(), alphas.end()) != alphas.end()) {
        throw ContractError("alpha schedule values must be pairwise distinct");
    }
    std::vector<Candidate> candidates;
    candidates.reserve(alphas.size());
    for (double alpha : alphas) {
        SynthesisConfig one = config;
        one.alpha = alpha;
        candidates.push_back({decode(provider, input, one), alpha});
    }
    return RankedResponseSet::from_alphas(input.question, input.context, std::move(candidates));
}

// ---------------------------------------------------------------------------

namespace {
const std::string kBeginToken = "<s>";
}

ToyProvider::ToyProvider(const std::vector<std::string>& corpus, double context_mix, double smoothing)
    : context_mix_(context_mix), smoothing_(smoothing) {
    if (corpus.empty()) throw ContractError("toy provider needs a non-empty corpus");
    if (!(context_mix >= 0.0 && context_mix <= 1.0)) throw ContractError("context mix must lie in [0, 1]");
    if (!(smoothing > 0.0)) throw ContractError("smoothing must be positive");
    std::set<std::string> vocab{end_token_};
    for (const auto& text : corpus) {
        const auto seq = tokenize(text);
        std::string previous = kBeginToken;
        for (const auto& token : seq.tokens) {
            vocab.insert(token);
            bigram_counts_[previous][token] += 1.0;
            history_counts_[previous] += 1.0;
            previous = token;
        }
        bigram_counts_[previous][end_token_] += 1.0;
        history_counts_[previous] += 1.0;
    }
    vocabulary_.assign(vocab.begin(), vocab.end());
}

std::map<std::string, double> ToyProvider::bigram(const std::string& previous) const {
    const auto hist = history_counts_.find(previous);
    const double total = hist == history_counts_.end() ? 0.0 : hist->second;
    const auto row = bigram_counts_.find(previous);
    const double denom = total + smoothing_ * static_cast<double>(vocabulary_.size());
    std::map<std::string, double> probs;
    for (const auto& token : vocabulary_) {
        double count = 0.0;
        if (row != bigram_counts_.end()) {
            auto it = row->second.find(token);
            if (it != row->second.end()) count = it->second;
        }
        probs.emplace(token, (count + smoothing_) / denom);
    }
    return probs;
}

SparseDistribution ToyProvider::next(const GenerationInput& input, Conditional conditional,
                                     std::span<const std::string> prefix) const {
    auto probs = bigram(prefix.empty() ? kBeginToken : prefix.back());
    if (conditional == Conditional::WithoutContext || context_mix_ == 0.0) {
        return SparseDistribution::from_probabilities(probs);
    }
    for (auto& [_, p] : probs) p *= 1.0 - context_mix_;
    const auto context = tokenize(input.context);
    if (!context.empty()) {
        const double unit = context_mix_ / static_cast<double>(context.size());
        for (const auto& token : context.tokens) probs[token] += unit;
    }
    return SparseDistribution::from_probabilities(probs);
}

std::string ToyProvider::detokenize(std::span<const std::string> tokens) const {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

// ---------------------------------------------------------------------------

void RemoteProviderConfig::apply_environment() {
    if (base_url.empty()) {
        if (const char* env = std::getenv("ZEVAL_BASE_URL")) base_url = env;
    }
    if (api_key.empty()) {
        if (const char* env = std::getenv("ZEVAL_API_KEY")) api_key = env;
    }
}

RemoteProvider::RemoteProvider(RemoteProviderConfig config) : config_(std::move(config)) {
    detail::parse_base_url(config_.base_url);
    if (config_.top_k == 0) throw RemoteError(RemoteError::Kind::Misconfigured, "top_k must be positive");
}

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

}  // namespace

std::string RemoteProvider::render_prompt(const GenerationInput& input, Conditional conditional,
                                          std::span<const std::string> prefix) const {
    std::string prompt =
        conditional == Conditional::WithContext ? config_.context_template : config_.no_context_template;
    prompt = substitute(std::move(prompt), "{context}", input.context);
    prompt = substitute(std::move(prompt), "{question}", input.question);
    return prompt + detokenize(prefix);
}

SparseDistribution RemoteProvider::next(const GenerationInput& input, Conditional conditional,
                                        std::span<const std::string> prefix) const {
    const json request{{"model", config_.model},     {"prompt", render_prompt(input, conditional, prefix)},
                       {"max_tokens", 1},            {"temperature", 0.0},
                       {"logprobs", config_.top_k}};
    const auto endpoint = detail::parse_base_url(config_.base_url);
    const auto reply =
        detail::post_json(endpoint, "/completions", request.dump(), config_.api_key, config_.timeout_seconds);
    if (reply.status == 429) {
        throw RemoteError(RemoteError::Kind::RateLimit, "completion endpoint rate-limited the request", reply.status);
    }
    if (reply.status < 200 || reply.status >= 300) {
        throw RemoteError(RemoteError::Kind::Transport,
                          "completion endpoint returned HTTP " + std::to_string(reply.status), reply.status);
    }
    const json body = json::parse(reply.body, nullptr, false);
    const json* top = nullptr;
    if (body.is_object() && body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
        const auto& choice = body["choices"][0];
        if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
            const auto& lp = choice["logprobs"];
            if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array() && !lp["top_logprobs"].empty() &&
                lp["top_logprobs"][0].is_object()) {
                top = &lp["top_logprobs"][0];
            }
        }
    }
    if (top == nullptr) throw RemoteError(RemoteError::Kind::Malformed, "completion reply carries no top_logprobs");

    SparseDistribution d;
    for (const auto& [token, lp] : top->items()) {
        if (!lp.is_number()) throw RemoteError(RemoteError::Kind::Malformed, "non-numeric log-probability");
        d.log_probs.emplace(token, lp.get<double>());
    }
    if (d.size() < config_.top_k) {
        throw RemoteError(RemoteError::Kind::Truncated, "endpoint returned " + std::to_string(d.size()) +
                                                            " log-probabilities, expected " +
                                                            std::to_string(config_.top_k));
    }
    return d;
}

std::string RemoteProvider::detokenize(std::span<const std::string> tokens) const {
    return std::accumulate(tokens.begin(), tokens.end(), std::string{});
}

// ---------------------------------------------------------------------------

std::string provider_query_hash(const GenerationInput& input, Conditional conditional,
                                std::span<const std::string> prefix) {
    json key = json::array();
    key.push_back(input.question);
    key.push_back(conditional == Conditional::WithContext ? input.context : std::string{});
    key.push_back(json(std::vector<std::string>(prefix.begin(), prefix.end())));
    return sha256_hex(key.dump());
}

RecordingProvider::RecordingProvider(const NextTokenProvider& inner, std::string fixture_path)
    : inner_(inner), path_(std::move(fixture_path)) {}

SparseDistribution RecordingProvider::next(const GenerationInput& input, Conditional conditional,
                                           std::span<const std::string> prefix) const {
    auto d = inner_.next(input, conditional, prefix);
    json top = json::array();
    for (const auto& [token, lp] : d.log_probs) top.push_back(json::array({token, lp}));
    const json line{{"prefix_hash", provider_query_hash(input, conditional, prefix)},
                    {"conditional", to_string(conditional)},
                    {"top", std::move(top)}};
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot append to fixture " + path_);
    out << line.dump() << '\n';
    return d;
}

ReplayProvider::ReplayProvider(const std::string& fixture_path, std::string end_token, std::string separator)
    : end_token_(std::move(end_token)), separator_(std::move(separator)) {
    std::ifstream in(fixture_path);
    if (!in) throw RemoteError(RemoteError::Kind::Misconfigured, "cannot open fixture " + fixture_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (!j.is_object() || !j.contains("prefix_hash") || !j.contains("conditional") || !j.contains("top")) {
            throw RemoteError(RemoteError::Kind::Malformed,
                              fixture_path + ":" + std::to_string(line_no) + ": malformed fixture entry");
        }
        std::vector<std::pair<std::string, double>> top;
        for (const auto& pair : j["top"]) top.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
        entries_[j["prefix_hash"].get<std::string>() + ":" + j["conditional"].get<std::string>()] = std::move(top);
    }
}

SparseDistribution ReplayProvider::next(const GenerationInput& input, Conditional conditional,
                                        std::span<const std::string> prefix) const {
    const auto key = provider_query_hash(input, conditional, prefix) + ":" + to_string(conditional);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw RemoteError(RemoteError::Kind::MissingFixture, "no recorded distribution for query " + key);
    }
    SparseDistribution d;
    for (const auto& [token, lp] : it->second) d.log_probs.emplace(token, lp);
    return d;
}

std::string ReplayProvider::detokenize(std::span<const std::string> tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += separator_;
        out += tokens[i];
    }
    return out;
}

}  // namespace zeval
