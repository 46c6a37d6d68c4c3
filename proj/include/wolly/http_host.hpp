#pragma once

#include <memory>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace wolly {

/// Runs an httplib::Server on a background thread. Routes are mounted on
/// server() before start().
class HttpHost {
public:
    HttpHost();
    HttpHost(const HttpHost&) = delete;
    HttpHost& operator=(const HttpHost&) = delete;
    ~HttpHost();

    httplib::Server& server() noexcept { return *server_; }

    /// Binds host:port (port 0 picks a free port) and serves in the
    /// background. Returns the bound port; throws std::runtime_error on failure.
    int start(const std::string& host, int port);
    void stop();
    int port() const noexcept { return port_; }

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = -1;
};

/// "host:port" or "http://host:port" -> (host, port).
std::pair<std::string, int> split_address(const std::string& address);

void reply_json(httplib::Response& res, int status, const nlohmann::json& body);
void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& reason);

/// Parses the request body as JSON; replies 400 and returns nullopt otherwise.
std::optional<nlohmann::json> json_body(const httplib::Request& req, httplib::Response& res);

/// The token from "Authorization: Bearer <token>", or empty.
std::string bearer_token(const httplib::Request& req);

}  // namespace wolly
