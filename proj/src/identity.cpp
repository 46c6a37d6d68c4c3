#include "wolly/identity.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "wolly/http_host.hpp"
#include "wolly/kernels.hpp"

namespace wolly::identity {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(IdentityError::Kind k, const std::string& what) { throw IdentityError(k, what); }

// 17 significant digits, so every double survives the text round trip.
std::string fixed_list(std::span<const double> v) {
    std::string out = "[";
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.16e", v[i]);
        if (i) out += ',';
        out += buf;
    }
    return out + "]";
}

ordered_json emotion_json(const EmotionEntry& e) {
    return {{"t", e.timestamp_ms}, {"categories", e.categories}, {"vad", e.vad}};
}

EmotionEntry emotion_from(const ordered_json& j) {
    EmotionEntry e;
    e.timestamp_ms = j.at("t").get<std::int64_t>();
    e.categories = j.at("categories").get<std::vector<std::string>>();
    auto vad = j.at("vad");
    if (vad.size() != 3) throw std::invalid_argument("vad needs 3 values");
    for (std::size_t d = 0; d < 3; ++d) e.vad[d] = vad[d].get<double>();
    return e;
}

// Field order is fixed so snapshots are byte-stable. The embedding is spliced
// in as fixed-precision text.
std::string profile_line(const UserProfile& p) {
    ordered_json j = {{"record", "profile"}, {"id", p.id}, {"name", p.name}, {"age", p.age}};
    j["picture"] = p.picture_ref ? ordered_json(*p.picture_ref) : ordered_json(nullptr);
    j["interests"] = p.interests;
    auto log = ordered_json::array();
    for (const auto& e : p.emotion_log) log.push_back(emotion_json(e));
    j["emotion_log"] = log;
    auto text = j.dump();
    text.pop_back();
    return text + ",\"embedding\":" + fixed_list(p.embedding) + "}";
}

std::string enroll_line(const UserProfile& p) {
    ordered_json j = {{"record", "enroll"}, {"id", p.id}, {"name", p.name}, {"age", p.age}};
    j["picture"] = p.picture_ref ? ordered_json(*p.picture_ref) : ordered_json(nullptr);
    auto text = j.dump();
    text.pop_back();
    return text + ",\"embedding\":" + fixed_list(p.embedding) + "}";
}

void add_interests(UserProfile& p, const std::vector<std::string>& delta) {
    for (const auto& i : delta) {
        if (std::find(p.interests.begin(), p.interests.end(), i) == p.interests.end()) p.interests.push_back(i);
    }
}

}  // namespace

Registry::Registry(std::optional<std::filesystem::path> file, RegistryOptions options)
    : file_(std::move(file)), options_(std::move(options)) {
    if (options_.dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
    if (!(options_.match_threshold >= 0)) throw std::invalid_argument("match threshold must be >= 0");
    if (!file_) return;
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    load();
    out_ = std::fopen(file_->c_str(), "a");
    if (!out_) fail(IdentityError::Kind::StorageError, "cannot open registry file " + file_->string());
}

Registry::~Registry() {
    if (out_) std::fclose(out_);
}

std::int64_t Registry::now() const {
    if (options_.clock) return options_.clock();
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void Registry::check_dimension(std::span<const double> e) const {
    if (e.size() != options_.dimension) {
        fail(IdentityError::Kind::DimensionMismatch, "embedding has dimension " + std::to_string(e.size()) +
                                                         ", registry uses " + std::to_string(options_.dimension));
    }
    for (double v : e) {
        if (!std::isfinite(v)) fail(IdentityError::Kind::DimensionMismatch, "embedding values must be finite");
    }
}

void Registry::load() {
    std::ifstream in(*file_, std::ios::binary);
    if (!in) return;  // new registry
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        bool terminated = nl != std::string::npos;
        auto line = content.substr(pos, terminated ? nl - pos : std::string::npos);
        pos = terminated ? nl + 1 : content.size();
        ++line_no;
        if (line.empty()) continue;
        try {
            apply_line(line, line_no);
        } catch (const std::exception& e) {
            // A torn final write is dropped; anything else is corruption.
            if (!terminated) {
                std::filesystem::resize_file(*file_, content.size() - line.size());
                break;
            }
            fail(IdentityError::Kind::StorageError,
                 file_->string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void Registry::apply_line(const std::string& line, std::size_t) {
    auto j = ordered_json::parse(line);
    auto kind = j.at("record").get<std::string>();
    if (kind == "profile" || kind == "enroll") {
        UserProfile p;
        p.id = j.at("id").get<std::string>();
        p.name = j.at("name").get<std::string>();
        p.age = j.at("age").get<unsigned>();
        if (!j.at("picture").is_null()) p.picture_ref = j.at("picture").get<std::string>();
        p.embedding = j.at("embedding").get<std::vector<double>>();
        check_dimension(p.embedding);
        if (kind == "profile") {
            p.interests = j.at("interests").get<std::vector<std::string>>();
            for (const auto& e : j.at("emotion_log")) p.emotion_log.push_back(emotion_from(e));
        }
        if (p.name.empty()) throw std::invalid_argument("empty name");
        if (index_.count(p.id)) throw std::invalid_argument("duplicate id " + p.id);
        if (p.id.size() > 1 && p.id[0] == 'u') {
            try {
                next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(p.id.substr(1)) + 1);
            } catch (const std::exception&) {
            }
        }
        index_[p.id] = profiles_.size();
        matrix_.insert(matrix_.end(), p.embedding.begin(), p.embedding.end());
        profiles_.push_back(std::move(p));
    } else if (kind == "interaction") {
        auto it = index_.find(j.at("id").get<std::string>());
        if (it == index_.end()) throw std::invalid_argument("interaction for unknown id");
        auto& p = profiles_[it->second];
        add_interests(p, j.value("interests", std::vector<std::string>{}));
        if (j.contains("emotion")) p.emotion_log.push_back(emotion_from(j.at("emotion")));
    } else {
        throw std::invalid_argument("unknown record kind '" + kind + "'");
    }
}

void Registry::append(const std::string& line) {
    if (!out_) return;
    auto text = line + "\n";
    if (std::fwrite(text.data(), 1, text.size(), out_) != text.size() || std::fflush(out_) != 0 ||
        ::fsync(fileno(out_)) != 0) {
        fail(IdentityError::Kind::StorageError, "write to " + file_->string() + " failed");
    }
    ++appended_;
}

void Registry::maybe_compact() {
    if (out_ && options_.compact_after && appended_ >= options_.compact_after) compact_locked();
}

std::string Registry::enroll(const std::string& name, unsigned age, std::span<const double> embedding,
                             std::optional<std::string> picture_ref) {
    if (name.empty()) fail(IdentityError::Kind::InvalidProfile, "name must be non-empty");
    check_dimension(embedding);
    std::unique_lock lock(mu_);
    UserProfile p;
    p.id = "u" + std::to_string(next_id_);
    p.name = name;
    p.age = age;
    p.embedding.assign(embedding.begin(), embedding.end());
    p.picture_ref = std::move(picture_ref);
    append(enroll_line(p));
    ++next_id_;
    index_[p.id] = profiles_.size();
    matrix_.insert(matrix_.end(), p.embedding.begin(), p.embedding.end());
    profiles_.push_back(p);
    maybe_compact();
    return p.id;
}

MatchResult Registry::recognize(std::span<const double> embedding) const {
    return recognize(embedding, options_.match_threshold);
}

MatchResult Registry::recognize(std::span<const double> embedding, double threshold) const {
    check_dimension(embedding);
    std::shared_lock lock(mu_);
    auto nearest = kernels::nearest_parallel(matrix_, options_.dimension, embedding);
    MatchResult r;
    if (!nearest) return r;
    r.distance = std::sqrt(nearest->squared_distance);
    if (r.distance <= threshold) r.profile_id = profiles_[nearest->index].id;
    return r;
}

void Registry::record_interaction(const std::string& profile_id, const std::vector<std::string>& interests_delta,
                                  const std::optional<EmotionEntry>& emotion) {
    std::unique_lock lock(mu_);
    auto it = index_.find(profile_id);
    if (it == index_.end()) fail(IdentityError::Kind::UnknownProfile, "no profile " + profile_id);
    std::optional<EmotionEntry> stamped = emotion;
    if (stamped) stamped->timestamp_ms = now();
    ordered_json j = {{"record", "interaction"}, {"id", profile_id}, {"interests", interests_delta}};
    if (stamped) j["emotion"] = emotion_json(*stamped);
    append(j.dump());
    auto& p = profiles_[it->second];
    add_interests(p, interests_delta);
    if (stamped) p.emotion_log.push_back(*stamped);
    maybe_compact();
}

std::optional<UserProfile> Registry::get(const std::string& profile_id) const {
    std::shared_lock lock(mu_);
    auto it = index_.find(profile_id);
    if (it == index_.end()) return std::nullopt;
    return profiles_[it->second];
}

std::vector<UserProfile> Registry::profiles() const {
    std::shared_lock lock(mu_);
    return profiles_;
}

std::size_t Registry::size() const {
    std::shared_lock lock(mu_);
    return profiles_.size();
}

std::string Registry::snapshot_locked() const {
    std::string out;
    for (const auto& p : profiles_) out += profile_line(p) + "\n";
    return out;
}

std::string Registry::snapshot_text() const {
    std::shared_lock lock(mu_);
    return snapshot_locked();
}

void Registry::compact() {
    std::unique_lock lock(mu_);
    compact_locked();
}

void Registry::compact_locked() {
    appended_ = 0;
    if (!file_) return;
    auto tmp = *file_;
    tmp += ".tmp";
    {
        std::FILE* f = std::fopen(tmp.c_str(), "w");
        if (!f) fail(IdentityError::Kind::StorageError, "cannot write " + tmp.string());
        auto text = snapshot_locked();
        bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() && std::fflush(f) == 0 &&
                  ::fsync(fileno(f)) == 0;
        std::fclose(f);
        if (!ok) fail(IdentityError::Kind::StorageError, "cannot write " + tmp.string());
    }
    if (out_) std::fclose(out_);
    out_ = nullptr;
    std::filesystem::rename(tmp, *file_);
    out_ = std::fopen(file_->c_str(), "a");
    if (!out_) fail(IdentityError::Kind::StorageError, "cannot reopen " + file_->string());
}

// --- HTTP -------------------------------------------------------------------

namespace {

nlohmann::json profile_json(const UserProfile& p) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : p.emotion_log) log.push_back({{"t", e.timestamp_ms}, {"categories", e.categories}, {"vad", e.vad}});
    return {{"id", p.id},
            {"name", p.name},
            {"age", p.age},
            {"picture_ref", p.picture_ref ? nlohmann::json(*p.picture_ref) : nlohmann::json(nullptr)},
            {"interests", p.interests},
            {"emotion_log", log},
            {"embedding", p.embedding}};
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const IdentityError& e) {
            switch (e.kind) {
                case IdentityError::Kind::DimensionMismatch: reply_error(res, 422, "DimensionMismatch", e.what()); break;
                case IdentityError::Kind::UnknownProfile: reply_error(res, 404, "UnknownProfile", e.what()); break;
                case IdentityError::Kind::InvalidProfile: reply_error(res, 422, "InvalidProfile", e.what()); break;
                case IdentityError::Kind::StorageError: reply_error(res, 500, "StorageError", e.what()); break;
            }
        } catch (const nlohmann::json::exception& e) {
            reply_error(res, 400, "BadRequest", e.what());
        }
    };
}

}  // namespace

void mount_identity_routes(httplib::Server& server, Registry& registry) {
    server.Post("/identity/enroll", guarded([&registry](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        std::optional<std::string> picture;
        if (body->contains("picture_ref") && !(*body)["picture_ref"].is_null()) picture = (*body)["picture_ref"];
        auto id = registry.enroll(body->at("name").get<std::string>(), body->at("age").get<unsigned>(),
                                  body->at("embedding").get<std::vector<double>>(), picture);
        reply_json(res, 201, {{"id", id}});
    }));
    server.Post("/identity/recognize", guarded([&registry](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto m = registry.recognize(body->at("embedding").get<std::vector<double>>());
        if (m.known()) {
            reply_json(res, 200, {{"outcome", "Known"}, {"profile_id", *m.profile_id}, {"distance", m.distance}});
        } else {
            reply_json(res, 200, {{"outcome", "Unknown"}});
        }
    }));
    server.Post("/identity/interaction", guarded([&registry](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        std::optional<EmotionEntry> emotion;
        if (body->contains("emotion")) {
            const auto& e = body->at("emotion");
            EmotionEntry entry;
            entry.categories = e.value("categories", std::vector<std::string>{});
            auto vad = e.at("vad").get<std::vector<double>>();
            if (vad.size() != 3) throw IdentityError(IdentityError::Kind::InvalidProfile, "vad needs 3 values");
            std::copy(vad.begin(), vad.end(), entry.vad.begin());
            emotion = entry;
        }
        registry.record_interaction(body->at("profile_id").get<std::string>(),
                                    body->value("interests", std::vector<std::string>{}), emotion);
        reply_json(res, 200, {{"status", "Ok"}});
    }));
    server.Get(R"(/identity/([A-Za-z0-9_-]+))", guarded([&registry](const httplib::Request& req, httplib::Response& res) {
        auto p = registry.get(req.matches[1]);
        if (!p) throw IdentityError(IdentityError::Kind::UnknownProfile, "no profile " + std::string(req.matches[1]));
        reply_json(res, 200, profile_json(*p));
    }));
}

}  // namespace wolly::identity
