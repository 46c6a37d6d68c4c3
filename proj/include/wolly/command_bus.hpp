#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wolly/core_model.hpp"

namespace wolly::bus {

enum class QueuePhase { Idle, Running };

std::string_view to_string(QueuePhase p) noexcept;

struct DeliveryEvent {
    std::size_t seq = 0;
    Instruction instruction = Instruction::stop();
    std::string program_id;

    friend bool operator==(const DeliveryEvent&, const DeliveryEvent&) = default;
};

enum class SubmitStatus { Accepted, Busy, Invalid };

struct SubmitResult {
    SubmitStatus status = SubmitStatus::Accepted;
    std::string program_id;  // set when Accepted
    std::string reason;      // set when Invalid
};

enum class AckStatus { Ok, UnknownSeq, StaleProgram };

std::string_view to_string(AckStatus s) noexcept;

enum class TeleopAction { Forward, Right, Left, Backward, Stop };

std::optional<TeleopAction> parse_teleop_action(std::string_view name);

struct QueueSnapshot {
    QueuePhase phase = QueuePhase::Idle;
    std::optional<std::string> program_id;
    std::size_t delivered = 0;  // next_seq: instructions handed to the robot at least once
    std::size_t acked_count = 0;
    std::size_t length = 0;
};

/// The single-program stop-and-wait queue. Not thread-safe: one logical owner
/// drives it (BusService serializes all calls behind a mutex).
///
/// Delivery is eager: whenever the robot is attached and nothing is awaiting
/// an ack, the next instruction is moved to the outbox. The transport drains
/// the outbox with take_outbox(). Detaching drops the outbox; the unacked
/// instruction is redelivered on the next attach.
class CommandQueue {
public:
    using IdSource = std::function<std::string()>;

    explicit CommandQueue(IdSource ids = {}, const ExpressionSet& expressions = ExpressionSet::defaults(),
                          std::size_t max_len = kMaxProgramLen);

    /// Validates and, if idle, activates `p` with a fresh id (p.id is ignored).
    SubmitResult submit(Program p);

    /// Non-stop actions are one-instruction submits. Stop is always accepted:
    /// undelivered instructions are discarded and a Stop is queued behind the
    /// one already in flight, if any.
    SubmitResult teleop(TeleopAction action, const std::string& author);

    /// Returns false when a robot is already attached.
    bool attach();
    void detach();
    bool attached() const noexcept { return attached_; }

    /// Duplicate acks (including acks for the program that just completed)
    /// are Ok no-ops.
    AckStatus ack(std::string_view program_id, std::size_t seq);

    std::vector<DeliveryEvent> take_outbox();
    bool has_outbox() const noexcept { return !outbox_.empty(); }

    QueueSnapshot snapshot() const;

    /// Every event ever handed to the outbox, in order. For tests and audit.
    const std::vector<DeliveryEvent>& delivery_log() const noexcept { return log_; }
    void set_keep_log(bool keep) { keep_log_ = keep; }

private:
    void pump();
    void reset();
    bool outstanding() const;

    IdSource ids_;
    const ExpressionSet& expressions_;
    std::size_t max_len_;
    std::size_t counter_ = 0;

    std::optional<Program> program_;
    std::size_t next_seq_ = 0;
    std::set<std::size_t> acked_;
    bool attached_ = false;
    bool in_flight_sent_ = false;  // the outstanding instruction reached the current connection

    std::optional<std::string> last_completed_id_;
    std::size_t last_completed_len_ = 0;

    std::deque<DeliveryEvent> outbox_;
    std::vector<DeliveryEvent> log_;
    bool keep_log_ = false;
};

enum class Role { Controller, Robot };

std::string_view to_string(Role r) noexcept;
std::optional<Role> parse_role(std::string_view name);

struct Session {
    std::string account_id;
    std::string auth_token;
    Role role = Role::Controller;
};

/// 32 lowercase hex characters (128 bits) from the OS CSPRNG.
std::string random_token();

/// In-memory accounts with salted password hashes and bearer tokens.
class AccountStore {
public:
    struct Error : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    /// Throws Error when the name is taken or empty.
    std::string create(const std::string& name, const std::string& password, Role role);
    /// nullopt on bad credentials.
    std::optional<Session> login(const std::string& name, const std::string& password);
    std::optional<Session> authenticate(std::string_view token) const;
    bool exists(const std::string& name) const;

private:
    struct Account {
        std::string id;
        std::string salt;
        std::string hash;
        Role role;
    };
    std::map<std::string, Account, std::less<>> by_name_;
    std::map<std::string, Session, std::less<>> sessions_;  // keyed by token
};

}  // namespace wolly::bus
