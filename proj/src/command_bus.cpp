#include "wolly/command_bus.hpp"

#include <sodium.h>

#include <stdexcept>

namespace wolly::bus {

std::string_view to_string(QueuePhase p) noexcept { return p == QueuePhase::Idle ? "IDLE" : "RUNNING"; }

std::string_view to_string(AckStatus s) noexcept {
    switch (s) {
        case AckStatus::Ok: return "Ok";
        case AckStatus::UnknownSeq: return "UnknownSeq";
        case AckStatus::StaleProgram: return "StaleProgram";
    }
    return "?";
}

std::optional<TeleopAction> parse_teleop_action(std::string_view name) {
    if (name == "forward") return TeleopAction::Forward;
    if (name == "right") return TeleopAction::Right;
    if (name == "left") return TeleopAction::Left;
    if (name == "backward") return TeleopAction::Backward;
    if (name == "stop") return TeleopAction::Stop;
    return std::nullopt;
}

std::string_view to_string(Role r) noexcept { return r == Role::Controller ? "controller" : "robot"; }

std::optional<Role> parse_role(std::string_view name) {
    if (name == "controller") return Role::Controller;
    if (name == "robot") return Role::Robot;
    return std::nullopt;
}

CommandQueue::CommandQueue(IdSource ids, const ExpressionSet& expressions, std::size_t max_len)
    : ids_(std::move(ids)), expressions_(expressions), max_len_(max_len) {}

SubmitResult CommandQueue::submit(Program p) {
    try {
        validate_program(p, expressions_, max_len_);
    } catch (const ValidationError& e) {
        return {SubmitStatus::Invalid, {}, e.what()};
    }
    if (program_) return {SubmitStatus::Busy, {}, {}};
    // an empty program completes immediately: nothing to deliver or ack
    p.id = ids_ ? ids_() : "prog-" + std::to_string(++counter_);
    if (p.instructions.empty()) {
        last_completed_id_ = p.id;
        last_completed_len_ = 0;
        return {SubmitStatus::Accepted, p.id, {}};
    }
    program_ = std::move(p);
    next_seq_ = 0;
    acked_.clear();
    in_flight_sent_ = false;
    pump();
    return {SubmitStatus::Accepted, program_->id, {}};
}

SubmitResult CommandQueue::teleop(TeleopAction action, const std::string& author) {
    Program p;
    p.author = author;
    switch (action) {
        case TeleopAction::Forward: p.instructions = {Instruction::forward()}; break;
        case TeleopAction::Right: p.instructions = {Instruction::right()}; break;
        case TeleopAction::Left: p.instructions = {Instruction::left()}; break;
        case TeleopAction::Backward: p.instructions = {Instruction::backward()}; break;
        case TeleopAction::Stop: {
            if (!program_) {
                p.instructions = {Instruction::stop()};
                return submit(std::move(p));
            }
            auto& ins = program_->instructions;
            bool stop_already_final = next_seq_ == ins.size() && ins.back().kind() == InstructionKind::Stop;
            if (!stop_already_final) {
                ins.erase(ins.begin() + static_cast<std::ptrdiff_t>(next_seq_), ins.end());
                ins.push_back(Instruction::stop());
                pump();
            }
            return {SubmitStatus::Accepted, program_->id, {}};
        }
    }
    return submit(std::move(p));
}

bool CommandQueue::attach() {
    if (attached_) return false;
    attached_ = true;
    in_flight_sent_ = false;
    pump();
    return true;
}

void CommandQueue::detach() {
    attached_ = false;
    outbox_.clear();
    in_flight_sent_ = false;
}

bool CommandQueue::outstanding() const { return next_seq_ > 0 && !acked_.contains(next_seq_ - 1); }

void CommandQueue::pump() {
    if (!attached_ || !program_) return;
    if (outstanding()) {
        if (in_flight_sent_) return;
        std::size_t seq = next_seq_ - 1;
        outbox_.push_back({seq, program_->instructions[seq], program_->id});
    } else {
        if (next_seq_ >= program_->instructions.size()) return;
        outbox_.push_back({next_seq_, program_->instructions[next_seq_], program_->id});
        ++next_seq_;
    }
    in_flight_sent_ = true;
    if (keep_log_) log_.push_back(outbox_.back());
}

void CommandQueue::reset() {
    last_completed_id_ = program_->id;
    last_completed_len_ = program_->instructions.size();
    program_.reset();
    next_seq_ = 0;
    acked_.clear();
    in_flight_sent_ = false;
}

AckStatus CommandQueue::ack(std::string_view program_id, std::size_t seq) {
    if (!program_ || program_->id != program_id) {
        if (last_completed_id_ && *last_completed_id_ == program_id && seq < last_completed_len_) return AckStatus::Ok;
        return AckStatus::StaleProgram;
    }
    if (seq >= next_seq_) return AckStatus::UnknownSeq;
    if (!acked_.insert(seq).second) return AckStatus::Ok;
    if (seq + 1 == next_seq_) {
        in_flight_sent_ = false;
        // a queued-but-unsent copy of this instruction is now redundant
        std::erase_if(outbox_, [&](const DeliveryEvent& e) { return e.seq == seq; });
    }
    if (acked_.size() == program_->instructions.size()) {
        reset();
    } else {
        pump();
    }
    return AckStatus::Ok;
}

std::vector<DeliveryEvent> CommandQueue::take_outbox() {
    std::vector<DeliveryEvent> out(outbox_.begin(), outbox_.end());
    outbox_.clear();
    return out;
}

QueueSnapshot CommandQueue::snapshot() const {
    QueueSnapshot s;
    if (program_) {
        s.phase = QueuePhase::Running;
        s.program_id = program_->id;
        s.delivered = next_seq_;
        s.acked_count = acked_.size();
        s.length = program_->instructions.size();
    }
    return s;
}

// ---------------------------------------------------------------------------

namespace {

void ensure_sodium() {
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

std::string to_hex(const unsigned char* data, std::size_t n) {
    std::string out(n * 2 + 1, '\0');
    sodium_bin2hex(out.data(), out.size(), data, n);
    out.pop_back();
    return out;
}

std::string hash_password(const std::string& salt, const std::string& password) {
    unsigned char out[32];
    crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(password.data()), password.size(),
                       reinterpret_cast<const unsigned char*>(salt.data()), salt.size());
    return to_hex(out, sizeof out);
}

}  // namespace

std::string random_token() {
    ensure_sodium();
    unsigned char buf[16];
    randombytes_buf(buf, sizeof buf);
    return to_hex(buf, sizeof buf);
}

std::string AccountStore::create(const std::string& name, const std::string& password, Role role) {
    if (name.empty()) throw Error("account name must not be empty");
    if (by_name_.contains(name)) throw Error("account '" + name + "' already exists");
    Account a{"acct-" + random_token().substr(0, 12), random_token(), {}, role};
    a.hash = hash_password(a.salt, password);
    auto id = a.id;
    by_name_.emplace(name, std::move(a));
    return id;
}

std::optional<Session> AccountStore::login(const std::string& name, const std::string& password) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return std::nullopt;
    auto h = hash_password(it->second.salt, password);
    if (h.size() != it->second.hash.size() || sodium_memcmp(h.data(), it->second.hash.data(), h.size()) != 0) {
        return std::nullopt;
    }
    Session s{it->second.id, random_token(), it->second.role};
    sessions_.emplace(s.auth_token, s);
    return s;
}

std::optional<Session> AccountStore::authenticate(std::string_view token) const {
    auto it = sessions_.find(token);
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
}

bool AccountStore::exists(const std::string& name) const { return by_name_.contains(name); }

}  // namespace wolly::bus
