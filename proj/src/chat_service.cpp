#include "wolly/chat_service.hpp"

#include "wolly/http_host.hpp"

namespace wolly::dialogue {

using nlohmann::json;

ChatService::ChatService(std::shared_ptr<const RuleSet> rules, const kb::KnowledgeBase* kb, identity::Registry* registry)
    : rules_(std::move(rules)), kb_(kb), registry_(registry) {
    if (!rules_) throw std::invalid_argument("ChatService needs a rule set");
}

ChatService::Reply ChatService::chat(const std::string& session, const std::string& text,
                                     const std::optional<std::vector<double>>& embedding,
                                     const std::optional<std::string>& picture_ref) {
    std::lock_guard lock(mu_);
    auto& s = sessions_[session];
    if (embedding) s.embedding = embedding;
    if (picture_ref) s.picture_ref = picture_ref;
    if (registry_ && s.embedding && (!s.ctx.profile || s.ctx.profile->id.empty()) && !s.ctx.pending) {
        auto m = registry_->recognize(*s.embedding);
        if (m.known()) s.ctx.profile = registry_->get(*m.profile_id);
    }

    auto r = respond(text, s.ctx, *rules_, kb_);
    for (const auto& a : r.acts) {
        if (auto* e = std::get_if<act::Enroll>(&a)) {
            if (registry_ && s.embedding) {
                auto id = registry_->enroll(e->name, e->age, *s.embedding,
                                            e->photo_consent ? s.picture_ref : std::nullopt);
                r.context.profile = registry_->get(id);
            }
        } else if (auto* i = std::get_if<act::RecordInterest>(&a)) {
            auto& p = r.context.profile;
            if (registry_ && p && !p->id.empty()) {
                registry_->record_interaction(p->id, {i->topic});
                p = registry_->get(p->id);
            } else if (p && std::find(p->interests.begin(), p->interests.end(), i->topic) == p->interests.end()) {
                p->interests.push_back(i->topic);
            }
        }
    }
    s.ctx = std::move(r.context);
    return {std::move(r.text), std::move(r.acts)};
}

void ChatService::apply_observation(Session& s, const emotion::EmotionReport& report, std::size_t& changed) {
    auto o = observe_emotion(s.ctx, report);
    if (!o.act) return;
    ++changed;
    s.ctx = std::move(o.context);
    const auto& p = s.ctx.profile;
    if (registry_ && p && !p->id.empty()) registry_->record_interaction(p->id, {}, o.act->entry);
}

std::size_t ChatService::observe(const std::optional<std::string>& session, const emotion::EmotionReport& report) {
    std::lock_guard lock(mu_);
    std::size_t changed = 0;
    if (session) {
        apply_observation(sessions_[*session], report, changed);
    } else {
        for (auto& [id, s] : sessions_) apply_observation(s, report, changed);
    }
    return changed;
}

std::optional<Context> ChatService::context(const std::string& session) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session);
    if (it == sessions_.end()) return std::nullopt;
    return it->second.ctx;
}

void mount_chat_routes(httplib::Server& server, ChatService& service) {
    server.Post("/api/chat", [&service](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        if (!body->contains("session") || !(*body)["session"].is_string() || !body->contains("text") ||
            !(*body)["text"].is_string())
            return reply_error(res, 400, "BadRequest", "session and text must be strings");
        std::optional<std::vector<double>> embedding;
        std::optional<std::string> picture;
        try {
            if (body->contains("embedding")) embedding = body->at("embedding").get<std::vector<double>>();
            if (body->contains("picture_ref")) picture = body->at("picture_ref").get<std::string>();
        } catch (const json::exception& e) {
            return reply_error(res, 400, "BadRequest", e.what());
        }
        auto session = body->at("session").get<std::string>();
        try {
            auto r = service.chat(session, body->at("text").get<std::string>(), embedding, picture);
            auto ctx = service.context(session);
            json out{{"text", r.text}, {"enrollment", nullptr}, {"profile_id", nullptr}};
            if (ctx && ctx->pending) out["enrollment"] = step_name(ctx->pending->step);
            if (ctx && ctx->profile && !ctx->profile->id.empty()) out["profile_id"] = ctx->profile->id;
            reply_json(res, 200, out);
        } catch (const identity::IdentityError& e) {
            reply_error(res, e.kind == identity::IdentityError::Kind::StorageError ? 500 : 422,
                        e.kind == identity::IdentityError::Kind::DimensionMismatch ? "DimensionMismatch" : "IdentityError",
                        e.what());
        }
    });

    server.Post("/api/emotion", [&service](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        if (!body->contains("report") || !(*body)["report"].is_object())
            return reply_error(res, 400, "BadRequest", "report must be an object");
        std::optional<std::string> session;
        if (body->contains("session")) {
            if (!(*body)["session"].is_string()) return reply_error(res, 400, "BadRequest", "session must be a string");
            session = (*body)["session"].get<std::string>();
        }
        try {
            auto report = emotion::parse_response(body->at("report").dump());
            reply_json(res, 200, json{{"updated", service.observe(session, report)}});
        } catch (const std::invalid_argument& e) {
            reply_error(res, 400, "BadReport", e.what());
        }
    });
}

}  // namespace wolly::dialogue
