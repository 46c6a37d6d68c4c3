#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "wolly/dialogue.hpp"
#include "wolly/identity.hpp"
#include "wolly/knowledge_base.hpp"

namespace wolly::dialogue {

/// One Context per session id. Applies the acts that respond() emits: Enroll
/// and RecordInterest go to the registry once the session is tied to a
/// profile. The KB and registry are optional and must outlive the service.
class ChatService {
public:
    ChatService(std::shared_ptr<const RuleSet> rules, const kb::KnowledgeBase* kb, identity::Registry* registry);

    struct Reply {
        std::string text;
        std::vector<Act> acts;
    };

    /// With an embedding, an unprofiled session is first matched against the
    /// registry; the embedding is kept for a later enrollment.
    Reply chat(const std::string& session, const std::string& text,
               const std::optional<std::vector<double>>& embedding = std::nullopt,
               const std::optional<std::string>& picture_ref = std::nullopt);

    /// Applies the report to one session, or to every session when unset.
    /// Returns the number of sessions whose context changed.
    std::size_t observe(const std::optional<std::string>& session, const emotion::EmotionReport& report);

    std::optional<Context> context(const std::string& session) const;

private:
    struct Session {
        Context ctx;
        std::optional<std::vector<double>> embedding;
        std::optional<std::string> picture_ref;
    };
    void apply_observation(Session& s, const emotion::EmotionReport& report, std::size_t& changed);

    std::shared_ptr<const RuleSet> rules_;
    const kb::KnowledgeBase* kb_;
    identity::Registry* registry_;
    mutable std::mutex mu_;
    std::map<std::string, Session> sessions_;
};

/// POST /api/chat {session, text, embedding?, picture_ref?}
///   -> {text, enrollment: step or null, profile_id: id or null}
/// POST /api/emotion {session?, report} -> {updated}
void mount_chat_routes(httplib::Server& server, ChatService& service);

}  // namespace wolly::dialogue
