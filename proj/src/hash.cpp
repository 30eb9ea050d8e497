#include "zeval/hash.hpp"

#include <array>
#include <cstdio>

#include <openssl/evp.h>

#include "zeval/error.hpp"

namespace zeval {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

const char* to_string(RemoteError::Kind kind) noexcept {
    switch (kind) {
        case RemoteError::Kind::Transport: return "transport";
        case RemoteError::Kind::Timeout: return "timeout";
        case RemoteError::Kind::RateLimit: return "rate_limit";
        case RemoteError::Kind::Malformed: return "malformed";
        case RemoteError::Kind::Truncated: return "truncated";
        case RemoteError::Kind::MissingFixture: return "missing_fixture";
        case RemoteError::Kind::Misconfigured: return "misconfigured";
    }
    return "unknown";
}

}  // namespace zeval
