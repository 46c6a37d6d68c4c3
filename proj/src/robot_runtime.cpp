#include "wolly/robot_runtime.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

namespace wolly::robot {

using nlohmann::json;

void KinematicConfig::validate() const {
    if (!(step_distance > 0.0) || !std::isfinite(step_distance)) throw std::invalid_argument("step_distance must be > 0");
    if (!(turn_angle > 0.0 && turn_angle <= 180.0)) throw std::invalid_argument("turn_angle must lie in (0, 180]");
    if (!(command_duration >= 0.0) || !std::isfinite(command_duration)) {
        throw std::invalid_argument("command_duration must be >= 0");
    }
}

namespace {

std::pair<double, double> unit_vector(double heading) {
    double quarter = heading / 90.0;
    if (quarter == std::floor(quarter)) {
        switch (static_cast<int>(quarter) % 4) {
            case 0: return {1.0, 0.0};
            case 1: return {0.0, 1.0};
            case 2: return {-1.0, 0.0};
            default: return {0.0, -1.0};
        }
    }
    double r = heading * std::numbers::pi / 180.0;
    return {std::cos(r), std::sin(r)};
}

}  // namespace

RobotState apply(const RobotState& state, const Instruction& instr, const KinematicConfig& cfg) {
    RobotState next = state;
    auto [ux, uy] = unit_vector(state.pose.heading);
    switch (instr.kind()) {
        case InstructionKind::MoveForward:
            next.pose.x += cfg.step_distance * ux;
            next.pose.y += cfg.step_distance * uy;
            break;
        case InstructionKind::MoveBackward:
            next.pose.x -= cfg.step_distance * ux;
            next.pose.y -= cfg.step_distance * uy;
            break;
        case InstructionKind::MoveLeft: next.pose.heading = normalize_heading(state.pose.heading + cfg.turn_angle); break;
        case InstructionKind::MoveRight: next.pose.heading = normalize_heading(state.pose.heading - cfg.turn_angle); break;
        case InstructionKind::Stop: next.phase = Phase::Idle; break;
        case InstructionKind::MakeExpression: next.expression = *instr.expression(); break;
    }
    return next;
}

Executor::Executor(KinematicConfig cfg, RobotState initial) : cfg_(cfg), state_(std::move(initial)) { cfg_.validate(); }

bool Executor::execute(const bus::DeliveryEvent& e) {
    if (e.program_id != program_) {
        program_ = e.program_id;
        applied_.clear();
    }
    if (!applied_.insert(e.seq).second) return false;
    state_.phase = Phase::Executing;
    state_.seq = e.seq;
    state_ = apply(state_, e.instruction, cfg_);
    last_seq_ = e.seq;
    return true;
}

Backoff::Backoff(std::chrono::milliseconds base, std::chrono::milliseconds cap) : base_(base), cap_(cap), current_(base) {
    if (base.count() <= 0 || cap < base) throw std::invalid_argument("backoff needs 0 < base <= cap");
}

std::chrono::milliseconds Backoff::next() {
    auto d = current_;
    current_ = std::min(cap_, current_ * 2);
    return d;
}

bool sleep_for(std::stop_token st, std::chrono::steady_clock::duration d) {
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lock(m);
    return !cv.wait_for(lock, st, d, [] { return false; }) && !st.stop_requested();
}

// --- bus client -------------------------------------------------------------

RobotClient::RobotClient(ClientOptions options, RobotState initial)
    : options_(std::move(options)), executor_(options_.kinematics, std::move(initial)) {}

RobotClient::~RobotClient() { stop(); }

void RobotClient::start() {
    thread_ = std::jthread([this](std::stop_token st) { run(st); });
}

void RobotClient::stop() {
    if (!thread_.joinable()) return;
    thread_.request_stop();
    {
        std::lock_guard lock(mu_);
        if (stream_) stream_->stop();
    }
    thread_.join();
}

RobotState RobotClient::state() const {
    std::lock_guard lock(mu_);
    return executor_.state();
}

ClientStats RobotClient::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

std::string RobotClient::token() const {
    std::lock_guard lock(mu_);
    return token_;
}

bool RobotClient::login(httplib::Client& api) {
    json body = {{"name", options_.name}, {"password", options_.password}};
    auto res = api.Post("/api/login", body.dump(), "application/json");
    if (!res) {
        spdlog::warn("robot: bus unreachable at {}:{}", options_.bus_host, options_.bus_port);
        return false;
    }
    if (res->status != 200) {
        spdlog::error("robot: login rejected ({})", res->status);
        return false;
    }
    auto j = json::parse(res->body);
    if (j.value("role", "") != "robot") {
        spdlog::error("robot: account '{}' is not a robot account", options_.name);
        return false;
    }
    std::lock_guard lock(mu_);
    token_ = j.at("token").get<std::string>();
    return true;
}

void RobotClient::consume(std::stop_token st, httplib::Client& api, const std::string& line) {
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        spdlog::warn("robot: ignoring malformed stream line");
        return;
    }
    if (j.value("type", "") != "delivery") return;
    bus::DeliveryEvent e{j.at("seq").get<std::size_t>(), parse_instruction(j.at("instruction").get<std::string>()),
                         j.at("program_id").get<std::string>()};
    bool fresh;
    RobotState snapshot;
    {
        std::lock_guard lock(mu_);
        fresh = executor_.execute(e);
        ++(fresh ? stats_.applied : stats_.duplicates);
        snapshot = executor_.state();
    }
    if (fresh && options_.kinematics.command_duration > 0) {
        auto d = std::chrono::duration<double>(options_.kinematics.command_duration);
        if (!sleep_for(st, std::chrono::duration_cast<std::chrono::steady_clock::duration>(d))) return;
    }
    httplib::Headers auth{{"Authorization", "Bearer " + token()}};
    json ack = {{"program_id", e.program_id}, {"seq", e.seq}};
    auto res = api.Post("/api/robot/ack", auth, ack.dump(), "application/json");
    if (!res) return;  // the stream will drop too; redelivery covers it
    if (res->status == 200) {
        std::lock_guard lock(mu_);
        ++stats_.acks;
    } else {
        spdlog::warn("robot: ack of {}#{} returned {}", e.program_id, e.seq, res->status);
    }
    json report = {{"pose", {{"x", snapshot.pose.x}, {"y", snapshot.pose.y}, {"heading", snapshot.pose.heading}}},
                   {"expression", snapshot.expression.name()},
                   {"program_id", e.program_id},
                   {"seq", e.seq}};
    api.Post("/api/robot/state", auth, report.dump(), "application/json");
}

void RobotClient::heartbeat_loop(std::stop_token st) {
    httplib::Client api(options_.bus_host, options_.bus_port);
    api.set_connection_timeout(1, 0);
    while (sleep_for(st, options_.heartbeat)) {
        auto t = token();
        if (!t.empty()) api.Post("/api/robot/heartbeat", {{"Authorization", "Bearer " + t}}, "{}", "application/json");
    }
}

void RobotClient::run(std::stop_token st) {
    std::jthread heartbeats([this](std::stop_token hs) { heartbeat_loop(hs); });
    Backoff backoff(options_.backoff_base, options_.backoff_cap);
    auto read_timeout = options_.heartbeat * 3 + std::chrono::seconds(1);
    while (!st.stop_requested()) {
        httplib::Client api(options_.bus_host, options_.bus_port);
        api.set_connection_timeout(2, 0);
        api.set_read_timeout(10, 0);
        if (token().empty()) login(api);
        auto t = token();
        if (!t.empty()) {
            httplib::Client stream(options_.bus_host, options_.bus_port);
            stream.set_connection_timeout(2, 0);
            stream.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(read_timeout).count(), 0);
            {
                std::lock_guard lock(mu_);
                if (st.stop_requested()) break;
                stream_ = &stream;
            }
            std::string buffer;
            int status = 0;
            stream.Get(
                "/api/robot/stream", {{"Authorization", "Bearer " + t}},
                [&](const httplib::Response& r) {
                    status = r.status;
                    if (r.status == 200) {
                        std::lock_guard lock(mu_);
                        ++stats_.connections;
                        backoff.reset();
                    }
                    return r.status == 200;
                },
                [&](const char* data, std::size_t n) {
                    buffer.append(data, n);
                    for (auto nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n')) {
                        auto line = buffer.substr(0, nl);
                        buffer.erase(0, nl + 1);
                        try {
                            consume(st, api, line);
                        } catch (const std::exception& ex) {
                            spdlog::warn("robot: bad delivery: {}", ex.what());
                        }
                        if (st.stop_requested()) return false;
                    }
                    return !st.stop_requested();
                });
            {
                std::lock_guard lock(mu_);
                stream_ = nullptr;
                if (status == 401) token_.clear();
            }
            if (status == 409) spdlog::warn("robot: another robot session holds the stream");
        }
        if (st.stop_requested()) break;
        sleep_for(st, backoff.next());
    }
}

// --- frames and emotion polling ---------------------------------------------

std::shared_ptr<FixtureFrameSource> FixtureFrameSource::from_ppm_files(const std::vector<std::string>& paths) {
    std::vector<FrameBlob> frames;
    for (const auto& p : paths) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read frame " + p);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto decoded = emotion::decode_ppm(bytes);
        frames.push_back({decoded.image.width, decoded.image.height, "image/x-portable-pixmap", std::move(bytes)});
    }
    return std::make_shared<FixtureFrameSource>(std::move(frames));
}

std::optional<FrameBlob> FixtureFrameSource::latest() {
    std::lock_guard lock(mu_);
    if (frames_.empty()) return std::nullopt;
    auto f = frames_[next_];
    next_ = (next_ + 1) % frames_.size();
    return f;
}

EmotionPoller::EmotionPoller(std::shared_ptr<FrameSource> frames, PollOptions options)
    : frames_(std::move(frames)), options_(std::move(options)) {}

EmotionPoller::~EmotionPoller() { stop(); }

void EmotionPoller::subscribe(Subscriber s) { subscribers_.push_back(std::move(s)); }

void EmotionPoller::start() {
    worker_ = std::jthread([this](std::stop_token st) { work_loop(st); });
    ticker_ = std::jthread([this](std::stop_token st) { tick_loop(st); });
}

void EmotionPoller::stop() {
    if (ticker_.joinable()) {
        ticker_.request_stop();
        ticker_.join();
    }
    if (worker_.joinable()) {
        worker_.request_stop();
        worker_.join();
    }
}

PollStats EmotionPoller::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

void EmotionPoller::tick_loop(std::stop_token st) {
    do {
        std::lock_guard lock(mu_);
        ++stats_.ticks;
        if (busy_) {
            ++stats_.skipped;
            continue;
        }
        auto frame = frames_->latest();
        if (!frame) continue;
        pending_ = std::move(frame);
        busy_ = true;
        cv_.notify_all();
    } while (sleep_for(st, options_.period));
}

void EmotionPoller::work_loop(std::stop_token st) {
    auto secs = [](std::chrono::milliseconds ms) {
        return std::pair<time_t, time_t>(ms.count() / 1000, (ms.count() % 1000) * 1000);
    };
    auto [ts, tus] = secs(options_.request_timeout);
    while (true) {
        FrameBlob frame;
        {
            std::unique_lock lock(mu_);
            if (!cv_.wait(lock, st, [&] { return pending_.has_value(); })) return;
            frame = std::move(*pending_);
            pending_.reset();
        }
        std::optional<emotion::EmotionReport> report;
        {
            httplib::Client c(options_.host, options_.port);
            c.set_connection_timeout(ts, tus);
            c.set_read_timeout(ts, tus);
            c.set_write_timeout(ts, tus);
            std::stop_callback abort(st, [&c] { c.stop(); });
            std::string body(frame.bytes.begin(), frame.bytes.end());
            auto res = c.Post("/analyze", body, frame.content_type);
            if (!res) {
                spdlog::warn("emotion: service unreachable ({})", httplib::to_string(res.error()));
            } else if (res->status != 200) {
                spdlog::warn("emotion: /analyze returned {}", res->status);
            } else {
                try {
                    report = emotion::parse_response(res->body);
                } catch (const std::exception& e) {
                    spdlog::warn("emotion: unreadable response: {}", e.what());
                }
            }
        }
        if (report) {
            for (const auto& s : subscribers_) {
                try {
                    s(*report);
                } catch (const std::exception& e) {
                    spdlog::warn("emotion: subscriber failed: {}", e.what());
                }
            }
        }
        std::lock_guard lock(mu_);
        ++(report ? stats_.published : stats_.failures);
        busy_ = false;
    }
}

}  // namespace wolly::robot
