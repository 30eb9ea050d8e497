#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace zeval {

/// Tokenized text. All lengths in the library are token counts of one of these.
struct TokenSequence {
    std::vector<std::string> tokens;
    std::string source;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }

    /// Tokens joined by single spaces.
    std::string joined() const;

    friend bool operator==(const TokenSequence& a, const TokenSequence& b) { return a.tokens == b.tokens; }
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual TokenSequence tokenize(std::string_view text) const = 0;
};

/// Maximal runs of letters/digits, every other non-space code point as its own
/// token. Case-sensitive; whitespace is dropped. Non-ASCII code points are
/// treated as letters so accented words stay whole.
class RuleTokenizer final : public Tokenizer {
public:
    TokenSequence tokenize(std::string_view text) const override;
};

/// The shared RuleTokenizer instance used wherever no tokenizer is injected.
const Tokenizer& default_tokenizer();

TokenSequence tokenize(std::string_view text);
std::size_t token_count(std::string_view text);

}  // namespace zeval
