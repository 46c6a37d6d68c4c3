#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "wolly/command_bus.hpp"
#include "wolly/core_model.hpp"
#include "wolly/emotion.hpp"

namespace httplib {
class Client;
}

namespace wolly::robot {

struct KinematicConfig {
    double step_distance = 0.1;     // metres per forward/backward
    double turn_angle = 90.0;       // degrees per left/right
    double command_duration = 1.0;  // seconds spent per command

    /// Throws std::invalid_argument unless step > 0, 0 < turn <= 180,
    /// duration >= 0.
    void validate() const;
};

/// Discrete-step kinematics. Heading 0 is +x, counterclockwise positive,
/// always kept in [0, 360). Multiples of 90 degrees use exact unit vectors so
/// square paths close exactly.
RobotState apply(const RobotState& state, const Instruction& instr, const KinematicConfig& cfg);

/// Applies each (program_id, seq) once. The window covers the current program
/// and is cleared when a new program id arrives.
class Executor {
public:
    explicit Executor(KinematicConfig cfg = {}, RobotState initial = {});

    /// False when the event was already applied.
    bool execute(const bus::DeliveryEvent& e);

    const RobotState& state() const noexcept { return state_; }
    const std::string& program_id() const noexcept { return program_; }
    std::size_t last_seq() const noexcept { return last_seq_; }

private:
    KinematicConfig cfg_;
    RobotState state_;
    std::string program_;
    std::set<std::size_t> applied_;
    std::size_t last_seq_ = 0;
};

/// Doubling reconnect delay, starting at `base` and capped at `cap`.
class Backoff {
public:
    explicit Backoff(std::chrono::milliseconds base = std::chrono::milliseconds(500),
                     std::chrono::milliseconds cap = std::chrono::milliseconds(30000));
    std::chrono::milliseconds next();
    void reset() noexcept { current_ = base_; }

private:
    std::chrono::milliseconds base_, cap_, current_;
};

/// Sleeps for `d` or until `st` is signalled. Returns false when interrupted.
bool sleep_for(std::stop_token st, std::chrono::steady_clock::duration d);

struct ClientOptions {
    std::string bus_host = "127.0.0.1";
    int bus_port = 8080;
    std::string name;
    std::string password;
    KinematicConfig kinematics;
    std::chrono::milliseconds heartbeat{5000};
    std::chrono::milliseconds backoff_base{500};
    std::chrono::milliseconds backoff_cap{30000};
};

struct ClientStats {
    std::uint64_t connections = 0;
    std::uint64_t applied = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t acks = 0;
};

/// Robot side of the bus: subscribe, execute, ack, report, reconnect.
class RobotClient {
public:
    explicit RobotClient(ClientOptions options, RobotState initial = {});
    ~RobotClient();

    /// Runs until `st` is signalled.
    void run(std::stop_token st);

    /// Background variant of run().
    void start();
    void stop();

    RobotState state() const;
    ClientStats stats() const;

private:
    void consume(std::stop_token st, httplib::Client& api, const std::string& line);
    void heartbeat_loop(std::stop_token st);
    bool login(httplib::Client& api);
    std::string token() const;

    ClientOptions options_;
    mutable std::mutex mu_;
    Executor executor_;
    ClientStats stats_;
    std::string token_;
    httplib::Client* stream_ = nullptr;  // open stream, for prompt shutdown
    std::jthread thread_;
};

/// A frame as captured: encoded bytes plus declared size.
struct FrameBlob {
    std::size_t width = 0;
    std::size_t height = 0;
    std::string content_type = "image/x-portable-pixmap";
    std::vector<std::uint8_t> bytes;
};

class FrameSource {
public:
    virtual ~FrameSource() = default;
    /// Newest frame, or nothing when the camera has produced none.
    virtual std::optional<FrameBlob> latest() = 0;
};

/// Cycles through a fixed list of frames.
class FixtureFrameSource : public FrameSource {
public:
    explicit FixtureFrameSource(std::vector<FrameBlob> frames) : frames_(std::move(frames)) {}
    static std::shared_ptr<FixtureFrameSource> from_ppm_files(const std::vector<std::string>& paths);
    std::optional<FrameBlob> latest() override;

private:
    std::mutex mu_;
    std::vector<FrameBlob> frames_;
    std::size_t next_ = 0;
};

struct PollOptions {
    std::string host = "127.0.0.1";
    int port = 8090;
    std::chrono::milliseconds period{2000};
    std::chrono::milliseconds request_timeout{10000};
};

struct PollStats {
    std::uint64_t ticks = 0;
    std::uint64_t skipped = 0;  // previous request still in flight
    std::uint64_t failures = 0;
    std::uint64_t published = 0;
};

/// Posts the newest frame to the emotion service every period on its own
/// threads. Shares nothing with RobotClient; subscribers get immutable
/// reports.
class EmotionPoller {
public:
    using Subscriber = std::function<void(const emotion::EmotionReport&)>;

    EmotionPoller(std::shared_ptr<FrameSource> frames, PollOptions options);
    ~EmotionPoller();

    /// Must be called before start().
    void subscribe(Subscriber s);
    void start();
    void stop();
    PollStats stats() const;

private:
    void tick_loop(std::stop_token st);
    void work_loop(std::stop_token st);

    std::shared_ptr<FrameSource> frames_;
    PollOptions options_;
    std::vector<Subscriber> subscribers_;

    mutable std::mutex mu_;
    std::condition_variable_any cv_;
    std::optional<FrameBlob> pending_;
    bool busy_ = false;
    PollStats stats_;
    std::jthread ticker_, worker_;
};

}  // namespace wolly::robot
