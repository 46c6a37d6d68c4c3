#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "wolly/command_bus.hpp"

namespace wolly::bus {

/// A request the service refuses. `code` is the machine-readable error code
/// used in {code, reason} bodies; `http_status` the matching status.
struct BusFault : std::runtime_error {
    BusFault(std::string code, int http_status, std::string reason);
    std::string code;
    int http_status;
    std::string reason;
};

struct BusOptions {
    std::chrono::milliseconds heartbeat{5000};
    int missed_heartbeats = 3;
    std::optional<std::filesystem::path> audit_log;
};

/// Latest state the robot reported through POST /api/robot/state.
struct RobotReport {
    RobotPose pose;
    std::string expression;
    std::string program_id;
    std::size_t seq = 0;
};

struct StatusView {
    QueueSnapshot queue;
    std::optional<RobotReport> robot;
};

struct Heartbeat {};
struct StreamClosed {};
using StreamItem = std::variant<DeliveryEvent, Heartbeat, StreamClosed>;

class BusService;

/// A robot's live subscription. Detaches from the queue on destruction unless
/// a newer subscription has replaced it.
class Subscription {
public:
    Subscription(const Subscription&) = delete;
    Subscription& operator=(const Subscription&) = delete;
    ~Subscription();

    /// Blocks for at most one heartbeat interval. Returns the next delivery, a
    /// Heartbeat when the interval passed quietly, or StreamClosed when the
    /// subscription was replaced, expired, or the service shut down.
    StreamItem next();

private:
    friend class BusService;
    Subscription(BusService& svc, std::uint64_t generation) : svc_(svc), generation_(generation) {}

    BusService& svc_;
    std::uint64_t generation_;
    std::deque<DeliveryEvent> pending_;
};

/// Thread-safe owner of the CommandQueue, accounts, and robot reports. Every
/// state transition happens under one mutex, so operations are linearizable.
class BusService {
public:
    explicit BusService(BusOptions options = {});
    ~BusService();

    /// Controller accounts may be created by anyone; robot accounts need a
    /// controller token.
    std::string create_account(const std::string& name, const std::string& password, const std::string& role,
                               std::optional<std::string_view> creator_token = std::nullopt);
    Session login(const std::string& name, const std::string& password);

    SubmitResult submit(std::string_view token, Program p);
    SubmitResult teleop(std::string_view token, TeleopAction action);

    /// Conflict when a different robot session is subscribed; the same session
    /// reconnecting replaces its old stream.
    std::unique_ptr<Subscription> subscribe(std::string_view token);
    AckStatus ack(std::string_view token, std::string_view program_id, std::size_t seq);
    void report_state(std::string_view token, RobotReport report);
    void heartbeat(std::string_view token);

    StatusView status(std::string_view token);

    /// Wakes every waiting subscription with StreamClosed.
    void shutdown();

    const BusOptions& options() const noexcept { return options_; }

private:
    friend class Subscription;
    using Clock = std::chrono::steady_clock;

    Session authorize(std::string_view token, std::optional<Role> role);
    void audit(std::string_view line);
    void touch_robot() { robot_seen_ = Clock::now(); }
    void notify() { cv_.notify_all(); }

    BusOptions options_;
    std::mutex mu_;
    std::condition_variable cv_;
    CommandQueue queue_;
    AccountStore accounts_;
    std::optional<RobotReport> robot_;

    std::uint64_t generation_ = 0;  // current subscription; 0 = none
    std::string subscriber_token_;
    Clock::time_point robot_seen_{};
    bool shutdown_ = false;

    std::ofstream audit_;
};

}  // namespace wolly::bus
