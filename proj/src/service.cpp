#include "zeval/service.hpp"

#include <httplib.h>

#include "zeval/error.hpp"
#include "zeval/ranked_set.hpp"
#include "zeval/version.hpp"

namespace zeval {

using nlohmann::json;

std::string service_version() { return ZEVAL_VERSION; }

json score_request_item(const json& item, const RolloutOptions& options) {
    try {
        if (!item.is_object()) throw ContractError("item is not an object");
        std::vector<Candidate> candidates;
        for (const auto& text : item.at("candidates")) candidates.push_back({text.get<std::string>(), std::nullopt});
        auto set = RankedResponseSet::from_order(item.value("question", std::string{}),
                                                 item.at("reference").get<std::string>(), std::move(candidates),
                                                 item.at("ground_truth_order").get<std::vector<std::size_t>>());
        return to_json(score_rollout(item.at("rollout").get<std::string>(), set, options));
    } catch (const json::exception& e) {
        return {{"error", std::string("malformed item: ") + e.what()}};
    } catch (const ContractError& e) {
        return {{"error", e.what()}};
    }
}

ServiceReply handle_reward_request(const std::string& body, const ServiceConfig& config) {
    const json request = json::parse(body, nullptr, false);
    if (request.is_discarded() || !request.is_object() || !request.contains("batch") || !request["batch"].is_array()) {
        return {400, json{{"error", "body must be a JSON object with a 'batch' list"}}.dump()};
    }
    const auto& batch = request["batch"];
    if (batch.size() > config.batch_cap) {
        return {413, json{{"error", "batch of " + std::to_string(batch.size()) + " items exceeds the cap of " +
                                        std::to_string(config.batch_cap)}}
                         .dump()};
    }
    json out = json::array();
    for (const auto& item : batch) out.push_back(score_request_item(item, config.rollout));
    return {200, json{{"batch", std::move(out)}}.dump()};
}

ServiceReply handle_health() { return {200, json{{"status", "ok"}, {"version", service_version()}}.dump()}; }

struct RewardService::Impl {
    ServiceConfig config;
    httplib::Server server;
    int port = -1;
};

RewardService::RewardService(ServiceConfig config) : impl_(std::make_unique<Impl>()) {
    impl_->config = std::move(config);
    auto* impl = impl_.get();
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto authorized = [impl](const httplib::Request& req, httplib::Response& res) {
        if (!impl->config.shared_token) return true;
        if (req.get_header_value("Authorization") == "Bearer " + *impl->config.shared_token) return true;
        res.status = 401;
        res.set_content(json{{"error", "missing or wrong bearer token"}}.dump(), "application/json");
        return false;
    };
    impl_->server.Post("/v1/reward", [impl, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req, res)) return;
        const auto reply = handle_reward_request(req.body, impl->config);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });
    impl_->server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
        const auto reply = handle_health();
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });
}

RewardService::~RewardService() { stop(); }

int RewardService::bind() {
    if (impl_->config.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(impl_->config.host);
    } else if (impl_->server.bind_to_port(impl_->config.host, impl_->config.port)) {
        impl_->port = impl_->config.port;
    }
    if (impl_->port <= 0) {
        throw Error("cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
    }
    return impl_->port;
}

void RewardService::listen() {
    if (impl_->port <= 0) throw Error("RewardService::listen called before bind");
    impl_->server.listen_after_bind();
}

void RewardService::wait_until_ready() const { impl_->server.wait_until_ready(); }

void RewardService::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace zeval
