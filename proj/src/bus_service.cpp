#include "wolly/bus_service.hpp"

#include <ctime>

#include "json.hpp"

namespace wolly::bus {

using nlohmann::json;

BusFault::BusFault(std::string c, int status, std::string r)
    : std::runtime_error(c + ": " + r), code(std::move(c)), http_status(status), reason(std::move(r)) {}

BusService::BusService(BusOptions options)
    : options_(std::move(options)), queue_([] { return "prog-" + random_token(); }) {
    if (options_.audit_log) {
        if (options_.audit_log->has_parent_path()) std::filesystem::create_directories(options_.audit_log->parent_path());
        audit_.open(*options_.audit_log, std::ios::app);
        if (!audit_) throw std::runtime_error("cannot open audit log " + options_.audit_log->string());
    }
}

BusService::~BusService() { shutdown(); }

void BusService::audit(std::string_view line) {
    if (!audit_.is_open()) return;
    audit_ << line << '\n';
    audit_.flush();
}

Session BusService::authorize(std::string_view token, std::optional<Role> role) {
    auto s = accounts_.authenticate(token);
    if (!s) throw BusFault("Unauthorized", 401, "missing or unknown bearer token");
    if (role && s->role != *role) {
        throw BusFault("Forbidden", 403, "operation requires the " + std::string(to_string(*role)) + " role");
    }
    return *s;
}

std::string BusService::create_account(const std::string& name, const std::string& password,
                                        const std::string& role_name, std::optional<std::string_view> creator_token) {
    std::lock_guard lock(mu_);
    auto role = parse_role(role_name);
    if (!role) throw BusFault("BadRequest", 400, "role must be 'controller' or 'robot'");
    if (*role == Role::Robot) {
        if (!creator_token) throw BusFault("Unauthorized", 401, "robot accounts require a controller token");
        authorize(*creator_token, Role::Controller);
    }
    try {
        auto id = accounts_.create(name, password, *role);
        audit(json{{"event", "account"}, {"account_id", id}, {"role", role_name}}.dump());
        return id;
    } catch (const AccountStore::Error& e) {
        throw BusFault("Conflict", 409, e.what());
    }
}

Session BusService::login(const std::string& name, const std::string& password) {
    std::lock_guard lock(mu_);
    auto s = accounts_.login(name, password);
    if (!s) throw BusFault("Unauthorized", 401, "bad credentials");
    return *s;
}

SubmitResult BusService::submit(std::string_view token, Program p) {
    std::lock_guard lock(mu_);
    auto s = authorize(token, Role::Controller);
    p.author = s.account_id;
    auto n = p.instructions.size();
    auto r = queue_.submit(std::move(p));
    if (r.status == SubmitStatus::Accepted) {
        audit(json{{"event", "submit"}, {"program_id", r.program_id}, {"author", s.account_id}, {"length", n}}.dump());
        notify();
    }
    return r;
}

SubmitResult BusService::teleop(std::string_view token, TeleopAction action) {
    std::lock_guard lock(mu_);
    auto s = authorize(token, Role::Controller);
    auto r = queue_.teleop(action, s.account_id);
    if (r.status == SubmitStatus::Accepted) {
        audit(json{{"event", "teleop"}, {"program_id", r.program_id}, {"author", s.account_id},
                   {"stop", action == TeleopAction::Stop}}
                  .dump());
        notify();
    }
    return r;
}

std::unique_ptr<Subscription> BusService::subscribe(std::string_view token) {
    std::lock_guard lock(mu_);
    authorize(token, Role::Robot);
    if (queue_.attached()) {
        if (subscriber_token_ != token) throw BusFault("Conflict", 409, "another robot is already subscribed");
        queue_.detach();
    }
    queue_.attach();
    ++generation_;
    subscriber_token_ = std::string(token);
    touch_robot();
    notify();  // wakes a replaced stream so it closes
    return std::unique_ptr<Subscription>(new Subscription(*this, generation_));
}

AckStatus BusService::ack(std::string_view token, std::string_view program_id, std::size_t seq) {
    std::lock_guard lock(mu_);
    authorize(token, Role::Robot);
    touch_robot();
    auto r = queue_.ack(program_id, seq);
    if (r == AckStatus::Ok) {
        audit(json{{"event", "ack"}, {"program_id", program_id}, {"seq", seq}}.dump());
        notify();
    }
    return r;
}

void BusService::report_state(std::string_view token, RobotReport report) {
    std::lock_guard lock(mu_);
    authorize(token, Role::Robot);
    touch_robot();
    robot_ = std::move(report);
}

void BusService::heartbeat(std::string_view token) {
    std::lock_guard lock(mu_);
    authorize(token, Role::Robot);
    touch_robot();
}

StatusView BusService::status(std::string_view token) {
    std::lock_guard lock(mu_);
    authorize(token, std::nullopt);
    return {queue_.snapshot(), robot_};
}

void BusService::shutdown() {
    std::lock_guard lock(mu_);
    shutdown_ = true;
    notify();
}

Subscription::~Subscription() {
    std::lock_guard lock(svc_.mu_);
    if (svc_.generation_ == generation_) {
        svc_.queue_.detach();
        svc_.generation_ = 0;
        svc_.subscriber_token_.clear();
    }
}

StreamItem Subscription::next() {
    std::unique_lock lock(svc_.mu_);
    auto live = [&] { return !svc_.shutdown_ && svc_.generation_ == generation_; };
    if (pending_.empty() && live()) {
        svc_.cv_.wait_for(lock, svc_.options_.heartbeat, [&] { return !live() || svc_.queue_.has_outbox(); });
    }
    if (!live()) return StreamClosed{};
    for (auto& e : svc_.queue_.take_outbox()) pending_.push_back(std::move(e));
    if (!pending_.empty()) {
        auto e = std::move(pending_.front());
        pending_.pop_front();
        return e;
    }
    auto silent = BusService::Clock::now() - svc_.robot_seen_;
    if (silent > svc_.options_.heartbeat * svc_.options_.missed_heartbeats) {
        svc_.queue_.detach();
        svc_.generation_ = 0;
        svc_.subscriber_token_.clear();
        return StreamClosed{};
    }
    return Heartbeat{};
}

}  // namespace wolly::bus
