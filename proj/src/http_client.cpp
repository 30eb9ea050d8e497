#include "http_client.hpp"

#include <chrono>

#include <httplib.h>

#include "zeval/error.hpp"

namespace zeval::detail {

Endpoint parse_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (base_url.empty() || scheme_end == std::string::npos) {
        throw RemoteError(RemoteError::Kind::Misconfigured, "base URL must look like http(s)://host[:port][/path]: '" +
                                                                base_url + "'");
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    Endpoint ep;
    if (path_start == std::string::npos) {
        ep.scheme_host_port = base_url;
    } else {
        ep.scheme_host_port = base_url.substr(0, path_start);
        ep.path_prefix = base_url.substr(path_start);
        while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
    }
    return ep;
}

HttpReply post_json(const Endpoint& endpoint, const std::string& path, const std::string& body,
                    const std::string& api_key, double timeout_seconds) {
    httplib::Client client(endpoint.scheme_host_port);
    const auto timeout = std::chrono::duration<double>(timeout_seconds);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    client.set_connection_timeout(usec);
    client.set_read_timeout(usec);
    client.set_write_timeout(usec);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(endpoint.path_prefix + path, headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        const auto elapsed = std::chrono::steady_clock::now() - start;
        const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= timeout * 0.9);
        throw RemoteError(timed_out ? RemoteError::Kind::Timeout : RemoteError::Kind::Transport,
                          "request to " + endpoint.scheme_host_port + endpoint.path_prefix + path +
                              " failed: " + httplib::to_string(err));
    }
    return {res->status, res->body};
}

}  // namespace zeval::detail
