#include "wolly/bus_server.hpp"

#include <memory>

#include "wolly/http_host.hpp"

namespace wolly::bus {

using nlohmann::json;

Program program_from_request(const json& body, const blocks::CompileLimits& limits, const ExpressionSet& expressions) {
    auto fmt = body.value("format", std::string("blocks"));
    if (!body.contains("source")) throw BusFault("BadRequest", 400, "missing 'source'");
    const auto& src = body.at("source");
    Program p;
    if (fmt == "script") {
        if (!src.is_string()) throw BusFault("BadRequest", 400, "script source must be a string");
        try {
            p.instructions = parse_script(src.get<std::string>(), expressions);
        } catch (const ParseError& e) {
            throw BusFault("ParseError", 422, e.what());
        }
        if (p.instructions.size() > limits.max_instructions) {
            throw BusFault("Invalid", 422, "script exceeds " + std::to_string(limits.max_instructions) + " instructions");
        }
        return p;
    }
    if (fmt != "blocks") throw BusFault("BadRequest", 400, "format must be 'blocks' or 'script'");
    try {
        auto tree = blocks::parse_blocks(src.is_string() ? src.get<std::string>() : src.dump(), expressions);
        return blocks::compile(tree, limits);
    } catch (const blocks::BlockParseError& e) {
        throw BusFault("ParseError", 422, e.what());
    } catch (const blocks::CompileError& e) {
        throw BusFault(std::string(blocks::to_string(e.kind)), 422, e.what());
    }
}

json to_json(const DeliveryEvent& e) {
    return {{"type", "delivery"},
            {"program_id", e.program_id},
            {"seq", e.seq},
            {"instruction", serialize_instruction(e.instruction)}};
}

json to_json(const RobotReport& r) {
    return {{"pose", {{"x", r.pose.x}, {"y", r.pose.y}, {"heading", r.pose.heading}}},
            {"expression", r.expression},
            {"program_id", r.program_id},
            {"seq", r.seq}};
}

RobotReport report_from_json(const json& j) {
    RobotReport r;
    const auto& pose = j.at("pose");
    r.pose = {pose.at("x").get<double>(), pose.at("y").get<double>(), pose.at("heading").get<double>()};
    r.expression = j.value("expression", std::string("neutral"));
    r.program_id = j.value("program_id", std::string());
    r.seq = j.value("seq", std::size_t{0});
    return r;
}

json to_json(const StatusView& s) {
    json j = {{"phase", to_string(s.queue.phase)},
              {"delivered", s.queue.delivered},
              {"acked_count", s.queue.acked_count},
              {"length", s.queue.length}};
    if (s.queue.program_id) j["program_id"] = *s.queue.program_id;
    j["robot_state"] = s.robot ? to_json(*s.robot) : json(nullptr);
    return j;
}

namespace {

int submit_status(const SubmitResult& r) {
    switch (r.status) {
        case SubmitStatus::Accepted: return 202;
        case SubmitStatus::Busy: return 409;
        case SubmitStatus::Invalid: return 422;
    }
    return 500;
}

void reply_submit(httplib::Response& res, const SubmitResult& r) {
    if (r.status == SubmitStatus::Accepted) {
        reply_json(res, 202, {{"status", "Accepted"}, {"program_id", r.program_id}});
    } else if (r.status == SubmitStatus::Busy) {
        reply_error(res, submit_status(r), "Busy", "a program is already running");
    } else {
        reply_error(res, submit_status(r), "Invalid", r.reason);
    }
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const BusFault& f) {
            reply_error(res, f.http_status, f.code, f.reason);
        } catch (const json::exception& e) {
            reply_error(res, 400, "BadRequest", e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, "Internal", e.what());
        }
    };
}

}  // namespace

void mount_bus_routes(httplib::Server& server, BusService& bus, const blocks::CompileLimits& limits) {
    server.Post("/api/accounts", guarded([&bus](const auto& req, auto& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto token = bearer_token(req);
        auto id = bus.create_account(body->at("name").template get<std::string>(),
                                     body->at("password").template get<std::string>(),
                                     body->value("role", std::string("controller")),
                                     token.empty() ? std::nullopt : std::optional<std::string_view>(token));
        reply_json(res, 201, {{"account_id", id}});
    }));

    server.Post("/api/login", guarded([&bus](const auto& req, auto& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto s = bus.login(body->at("name").template get<std::string>(),
                           body->at("password").template get<std::string>());
        reply_json(res, 200, {{"token", s.auth_token}, {"account_id", s.account_id}, {"role", to_string(s.role)}});
    }));

    server.Post("/api/programs", guarded([&bus, limits](const auto& req, auto& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto token = bearer_token(req);
        // authorize before compiling so anonymous callers learn nothing
        bus.status(token);
        reply_submit(res, bus.submit(token, program_from_request(*body, limits)));
    }));

    server.Post("/api/teleop", guarded([&bus](const auto& req, auto& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto action = parse_teleop_action(body->value("action", std::string()));
        if (!action) throw BusFault("BadRequest", 400, "action must be forward|right|left|backward|stop");
        reply_submit(res, bus.teleop(bearer_token(req), *action));
    }));

    server.Get("/api/status", guarded([&bus](const auto& req, auto& res) {
        reply_json(res, 200, to_json(bus.status(bearer_token(req))));
    }));

    server.Get("/api/robot/stream", guarded([&bus](const auto& req, auto& res) {
        std::shared_ptr<Subscription> sub = bus.subscribe(bearer_token(req));
        res.set_chunked_content_provider("application/x-ndjson", [sub](std::size_t, httplib::DataSink& sink) {
            auto item = sub->next();
            std::string line;
            if (auto* e = std::get_if<DeliveryEvent>(&item)) {
                line = to_json(*e).dump();
            } else if (std::holds_alternative<Heartbeat>(item)) {
                line = R"({"type":"heartbeat"})";
            } else {
                sink.done();
                return true;
            }
            line += '\n';
            return sink.write(line.data(), line.size());
        });
    }));

    server.Post("/api/robot/ack", guarded([&bus](const auto& req, auto& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto r = bus.ack(bearer_token(req), body->at("program_id").template get<std::string>(),
                         body->at("seq").template get<std::size_t>());
        switch (r) {
            case AckStatus::Ok: reply_json(res, 200, {{"status", "Ok"}}); break;
            case AckStatus::UnknownSeq: reply_error(res, 404, "UnknownSeq", "sequence number was never delivered"); break;
            case AckStatus::StaleProgram: reply_error(res, 409, "StaleProgram", "program is not the active one"); break;
        }
    }));

    server.Post("/api/robot/state", guarded([&bus](const auto& req, auto& res) {
        auto body = json_body(req, res);
        if (!body) return;
        bus.report_state(bearer_token(req), report_from_json(*body));
        reply_json(res, 200, {{"status", "Ok"}});
    }));

    server.Post("/api/robot/heartbeat", guarded([&bus](const auto& req, auto& res) {
        bus.heartbeat(bearer_token(req));
        reply_json(res, 200, {{"status", "Ok"}});
    }));
}

}  // namespace wolly::bus
