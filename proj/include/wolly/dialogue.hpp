#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wolly/emotion.hpp"
#include "wolly/identity.hpp"
#include "wolly/knowledge_base.hpp"

namespace wolly::dialogue {

struct LoadError : std::runtime_error {
    LoadError(std::string rule_id, std::size_t line, std::string reason);
    std::string rule_id;  // empty outside a rule block
    std::size_t line;
    std::string reason;
};

/// Lowercase; '-', '_' and whitespace become single spaces; other ASCII
/// punctuation is dropped. Idempotent.
std::string normalize(std::string_view text);

struct Concept {
    std::string name;
    std::vector<std::vector<std::string>> synonyms;  // normalized phrases as token lists
};

enum class SlotKind { Entity, Any };

/// One trigger position: a concept reference or a capture slot.
struct TriggerItem {
    std::optional<std::size_t> concept_index;  // set for concept items
    SlotKind slot = SlotKind::Any;
    bool is_slot() const noexcept { return !concept_index; }
};

enum class KbQuery { None, CharactersIn, Costars, Related };
enum class Band { Low, Mid, High };

struct Rule {
    std::string id;
    std::vector<TriggerItem> trigger;
    std::string template_text;
    std::array<std::optional<std::string>, 3> variants;  // by Band
    KbQuery kb = KbQuery::None;
    std::optional<std::size_t> interest_slot;  // 1-based
    std::size_t concept_count = 0;
    std::size_t slot_count = 0;
    bool uses_user_name = false;
};

struct RuleSet {
    std::vector<Concept> concepts;
    std::vector<Rule> rules;  // definition order
    std::size_t size() const noexcept { return rules.size(); }
};

/// Format: docs/rules_format.md.
RuleSet load_rules(std::string_view document);
RuleSet load_rules_file(const std::filesystem::path& path);

struct Matched {
    std::size_t rule;  // index into RuleSet::rules
    std::vector<std::string> slots;  // captured text, normalized
    std::vector<std::string> entities;  // IRI per Entity slot, in order
};

/// Subsequence match with gaps; most concepts wins, then definition order.
/// With a KB, an Entity slot must name a KB entity.
std::optional<Matched> match(std::string_view utterance, const RuleSet& rules, const kb::KnowledgeBase* kb = nullptr);

Band valence_band(double valence);
const char* band_name(Band b);

enum class EnrollStep { AskName, AskAge, AskPhotoConsent, Done };
const char* step_name(EnrollStep s);

struct PendingEnrollment {
    EnrollStep step = EnrollStep::AskName;
    std::string name;
    unsigned age = 0;
};

struct ObservedEmotion {
    std::vector<std::string> categories;
    emotion::Vad vad{};
};

struct Context {
    std::optional<identity::UserProfile> profile;
    std::optional<ObservedEmotion> latest_emotion;
    std::optional<PendingEnrollment> pending;
};

namespace act {
struct RecordInterest {
    std::string topic;
};
struct RequestEnrollmentStep {
    EnrollStep step;
};
struct Query {
    KbQuery kind;
    std::vector<std::string> args;
};
struct Enroll {
    std::string name;
    unsigned age;
    bool photo_consent;
};
struct RecordInteraction {
    identity::EmotionEntry entry;  // timestamp filled by the registry
};
}  // namespace act

using Act = std::variant<act::RecordInterest, act::RequestEnrollmentStep, act::Query, act::Enroll, act::RecordInteraction>;

struct Response {
    std::string text;  // never empty
    std::vector<Act> acts;
    Context context;  // the successor context
};

inline constexpr std::string_view kFallback = "Sorry, I did not understand. Can you say it another way?";

/// Pure transition on (context, utterance); side effects are only described
/// by the returned acts.
Response respond(std::string_view utterance, const Context& ctx, const RuleSet& rules,
                 const kb::KnowledgeBase* kb = nullptr);

struct Observation {
    Context context;
    std::optional<act::RecordInteraction> act;
};

/// Takes person 0 of the report; an empty report changes nothing.
Observation observe_emotion(const Context& ctx, const emotion::EmotionReport& report);

}  // namespace wolly::dialogue
