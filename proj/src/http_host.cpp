#include "wolly/http_host.hpp"

#include <stdexcept>

namespace wolly {

HttpHost::HttpHost() : server_(std::make_unique<httplib::Server>()) {}

HttpHost::~HttpHost() { stop(); }

int HttpHost::start(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void HttpHost::stop() {
    if (thread_.joinable()) {
        server_->stop();
        thread_.join();
    }
}

std::pair<std::string, int> split_address(const std::string& address) {
    std::string a = address;
    if (auto p = a.find("://"); p != std::string::npos) a = a.substr(p + 3);
    while (!a.empty() && a.back() == '/') a.pop_back();
    auto colon = a.rfind(':');
    if (colon == std::string::npos || colon == 0) throw std::invalid_argument("address must be host:port: " + address);
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(a.substr(colon + 1), &used);
        if (used != a.size() - colon - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw std::invalid_argument("bad port in address: " + address);
    }
    if (port < 0 || port > 65535) throw std::invalid_argument("port out of range: " + address);
    return {a.substr(0, colon), port};
}

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& reason) {
    reply_json(res, status, {{"code", code}, {"reason", reason}});
}

std::optional<nlohmann::json> json_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto j = nlohmann::json::parse(req.body);
        if (!j.is_object()) {
            reply_error(res, 400, "BadRequest", "request body must be a JSON object");
            return std::nullopt;
        }
        return j;
    } catch (const nlohmann::json::exception& e) {
        reply_error(res, 400, "BadRequest", std::string("malformed JSON: ") + e.what());
        return std::nullopt;
    }
}

std::string bearer_token(const httplib::Request& req) {
    auto h = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (h.size() > kPrefix.size() && std::string_view(h).starts_with(kPrefix)) return h.substr(kPrefix.size());
    return {};
}

}  // namespace wolly
