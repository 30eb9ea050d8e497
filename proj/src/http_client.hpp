#pragma once

#include <string>

namespace zeval::detail {

struct Endpoint {
    std::string scheme_host_port;
    std::string path_prefix;
};

/// Splits "https://host:port/v1" into "https://host:port" and "/v1".
/// Throws RemoteError(Misconfigured) on a URL without scheme.
Endpoint parse_base_url(const std::string& base_url);

struct HttpReply {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body. Connection failures raise RemoteError(Transport), an
/// exhausted timeout raises RemoteError(Timeout). Non-2xx statuses are returned.
HttpReply post_json(const Endpoint& endpoint, const std::string& path, const std::string& body,
                    const std::string& api_key, double timeout_seconds);

}  // namespace zeval::detail
