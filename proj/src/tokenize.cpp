#include "zeval/tokenize.hpp"

#include <cstdint>

namespace zeval {
namespace {

enum class CharClass { Space, Word, Punct };

// Decodes one UTF-8 code point starting at pos; malformed bytes decode as themselves.
std::uint32_t next_code_point(std::string_view s, std::size_t pos, std::size_t& len) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    std::size_t need = 0;
    std::uint32_t cp = b0;
    if (b0 >= 0xF0 && b0 < 0xF8) {
        need = 3;
        cp = b0 & 0x07;
    } else if (b0 >= 0xE0) {
        need = 2;
        cp = b0 & 0x0F;
    } else if (b0 >= 0xC0) {
        need = 1;
        cp = b0 & 0x1F;
    }
    if (need == 0 || b0 >= 0xF8 || pos + need >= s.size()) {
        len = 1;
        return b0;
    }
    for (std::size_t i = 1; i <= need; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            len = 1;
            return b0;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    len = need + 1;
    return cp;
}

CharClass classify(std::uint32_t cp) {
    if (cp < 0x80) {
        if (cp == ' ' || (cp >= '\t' && cp <= '\r')) return CharClass::Space;
        if ((cp >= '0' && cp <= '9') || (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z')) {
            return CharClass::Word;
        }
        return CharClass::Punct;
    }
    if (cp == 0x85 || cp == 0xA0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
        cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000) {
        return CharClass::Space;
    }
    // Latin-1 punctuation/symbols, general punctuation, CJK punctuation.
    if ((cp >= 0xA1 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || (cp >= 0x2010 && cp <= 0x206F) ||
        (cp >= 0x3001 && cp <= 0x303F) || (cp >= 0xFF01 && cp <= 0xFF0F)) {
        return CharClass::Punct;
    }
    return CharClass::Word;
}

}  // namespace

std::string TokenSequence::joined() const {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

TokenSequence RuleTokenizer::tokenize(std::string_view text) const {
    TokenSequence seq;
    seq.source = std::string(text);
    std::size_t word_start = std::string_view::npos;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t len = 1;
        const auto cls = classify(next_code_point(text, pos, len));
        if (cls == CharClass::Word) {
            if (word_start == std::string_view::npos) word_start = pos;
        } else {
            if (word_start != std::string_view::npos) {
                seq.tokens.emplace_back(text.substr(word_start, pos - word_start));
                word_start = std::string_view::npos;
            }
            if (cls == CharClass::Punct) seq.tokens.emplace_back(text.substr(pos, len));
        }
        pos += len;
    }
    if (word_start != std::string_view::npos) seq.tokens.emplace_back(text.substr(word_start));
    return seq;
}

const Tokenizer& default_tokenizer() {
    static const RuleTokenizer instance;
    return instance;
}

TokenSequence tokenize(std::string_view text) { return default_tokenizer().tokenize(text); }

std::size_t token_count(std::string_view text) { return tokenize(text).size(); }

}  // namespace zeval
