#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "zeval/rewards.hpp"

namespace zeval {

inline constexpr std::size_t kDefaultBatchCap = 256;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t batch_cap = kDefaultBatchCap;
    /// When set, requests must carry "Authorization: Bearer <token>".
    std::optional<std::string> shared_token;
    RolloutOptions rollout;
};

/// Scores one request item ({question, reference, candidates, ground_truth_order,
/// rollout}); a malformed item yields {"error": "..."} instead of a breakdown.
nlohmann::json score_request_item(const nlohmann::json& item, const RolloutOptions& options = {});

struct ServiceReply {
    int status = 200;
    std::string body;
};

/// Request handling without the transport: status and body for a POST /v1/reward body.
ServiceReply handle_reward_request(const std::string& body, const ServiceConfig& config);

/// Status and body for GET /v1/health.
ServiceReply handle_health();

std::string service_version();

/// HTTP server exposing POST /v1/reward and GET /v1/health.
class RewardService {
public:
    explicit RewardService(ServiceConfig config);
    ~RewardService();
    RewardService(const RewardService&) = delete;
    RewardService& operator=(const RewardService&) = delete;

    /// Binds the socket; returns the bound port (useful with port 0). Throws Error on failure.
    int bind();
    /// Serves until stop(). Requires bind().
    void listen();
    /// Blocks until listen() is accepting connections.
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace zeval
