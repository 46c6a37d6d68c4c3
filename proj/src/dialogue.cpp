#include "wolly/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace wolly::dialogue {

LoadError::LoadError(std::string id, std::size_t l, std::string r)
    : std::runtime_error("line " + std::to_string(l) + (id.empty() ? "" : " (rule " + id + ")") + ": " + r),
      rule_id(std::move(id)), line(l), reason(std::move(r)) {}

std::string normalize(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c) || c == '-' || c == '_') {
            pending_space = true;
        } else if (std::ispunct(c)) {
            continue;
        } else {
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(c));
        }
    }
    return out;
}

namespace {

std::vector<std::string> tokens(std::string_view normalized) {
    std::vector<std::string> out;
    std::istringstream in{std::string(normalized)};
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

std::string join(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    std::string out;
    for (std::size_t i = b; i < e; ++i) {
        if (i > b) out += ' ';
        out += toks[i];
    }
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool identifier(const std::string& s) {
    if (s.empty() || !(std::islower(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::islower(c) || std::isdigit(c) || c == '_'; });
}

const std::regex& placeholder_re() {
    static const std::regex re(R"(\$\{([^}]*)\})");
    return re;
}

struct RuleBuilder {
    Rule rule;
    std::size_t line = 0;
    bool has_trigger = false;
    bool has_template = false;
};

void check_placeholders(const RuleBuilder& b, const std::string& text, bool& uses_name) {
    if (text.empty()) throw LoadError(b.rule.id, b.line, "empty template");
    for (std::sregex_iterator it(text.begin(), text.end(), placeholder_re()), end; it != end; ++it) {
        auto name = (*it)[1].str();
        if (name == "user.name") {
            uses_name = true;
        } else if (name == "kb.answer") {
            if (b.rule.kb == KbQuery::None) throw LoadError(b.rule.id, b.line, "${kb.answer} without a kb query");
        } else if (name.rfind("slot.", 0) == 0) {
            auto n = name.substr(5);
            if (n.empty() || !std::all_of(n.begin(), n.end(), ::isdigit) || n.size() > 3)
                throw LoadError(b.rule.id, b.line, "bad placeholder ${" + name + "}");
            auto idx = std::stoul(n);
            if (idx == 0 || idx > b.rule.slot_count)
                throw LoadError(b.rule.id, b.line, "${" + name + "} names a slot the trigger does not have");
        } else {
            throw LoadError(b.rule.id, b.line, "unknown placeholder ${" + name + "}");
        }
    }
    if (text.find("${") != std::string::npos &&
        std::distance(std::sregex_iterator(text.begin(), text.end(), placeholder_re()), std::sregex_iterator()) == 0)
        throw LoadError(b.rule.id, b.line, "unterminated placeholder");
}

void finish_rule(RuleBuilder& b, RuleSet& set) {
    auto& r = b.rule;
    if (!b.has_trigger) throw LoadError(r.id, b.line, "missing trigger");
    if (!b.has_template) throw LoadError(r.id, b.line, "missing template");
    for (const auto& other : set.rules) {
        if (other.id == r.id) throw LoadError(r.id, b.line, "duplicate rule id");
    }
    bool has_entity = false;
    for (const auto& t : r.trigger) has_entity |= t.is_slot() && t.slot == SlotKind::Entity;
    if (r.kb != KbQuery::None && !has_entity) throw LoadError(r.id, b.line, "kb query needs an {entity} slot");
    if (r.interest_slot && *r.interest_slot > r.slot_count)
        throw LoadError(r.id, b.line, "interest names a slot the trigger does not have");
    check_placeholders(b, r.template_text, r.uses_user_name);
    for (const auto& v : r.variants) {
        if (v) check_placeholders(b, *v, r.uses_user_name);
    }
    set.rules.push_back(std::move(r));
}

}  // namespace

RuleSet load_rules(std::string_view document) {
    RuleSet set;
    std::map<std::string, std::size_t> concept_by_name;
    std::set<std::pair<std::string, std::string>> overlaps;
    std::map<std::string, std::size_t> concept_line;
    enum class Section { None, Concepts, Rules } section = Section::None;
    std::optional<RuleBuilder> current;

    std::istringstream in{std::string(document)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto fail = [&](const std::string& why) -> LoadError {
            return LoadError(current ? current->rule.id : std::string{}, line_no, why);
        };
        if (line == "[concepts]" || line == "[rules]") {
            if (current) {
                finish_rule(*current, set);
                current.reset();
            }
            section = line == "[concepts]" ? Section::Concepts : Section::Rules;
            continue;
        }
        if (section == Section::None) throw fail("text before the first section");

        if (section == Section::Concepts) {
            if (line.rfind("concept ", 0) == 0) {
                auto colon = line.find(':');
                if (colon == std::string::npos) throw fail("concept line needs ':'");
                auto name = trim(line.substr(8, colon - 8));
                if (!identifier(name)) throw fail("bad concept name '" + name + "'");
                if (concept_by_name.count(name)) throw fail("duplicate concept '" + name + "'");
                Concept c{name, {}};
                std::set<std::string> seen;
                std::istringstream list(line.substr(colon + 1));
                for (std::string item; std::getline(list, item, ',');) {
                    auto n = normalize(item);
                    if (n.empty()) throw fail("empty synonym in concept '" + name + "'");
                    if (seen.insert(n).second) c.synonyms.push_back(tokens(n));
                }
                if (c.synonyms.empty()) throw fail("concept '" + name + "' has no synonyms");
                // longest phrase first so "good morning" beats "good"
                std::stable_sort(c.synonyms.begin(), c.synonyms.end(),
                                 [](const auto& a, const auto& b) { return a.size() > b.size(); });
                concept_by_name[name] = set.concepts.size();
                concept_line[name] = line_no;
                set.concepts.push_back(std::move(c));
            } else if (line.rfind("overlap ", 0) == 0) {
                auto names = tokens(line.substr(8));
                if (names.size() != 2) throw fail("overlap needs two concept names");
                overlaps.insert(std::minmax(names[0], names[1]));
            } else {
                throw fail("expected 'concept' or 'overlap'");
            }
            continue;
        }

        if (line.rfind("rule ", 0) == 0) {
            if (current) finish_rule(*current, set);
            auto id = trim(line.substr(5));
            if (!identifier(id)) throw LoadError(id, line_no, "bad rule id");
            current = RuleBuilder{};
            current->rule.id = id;
            current->line = line_no;
            continue;
        }
        if (!current) throw fail("expected 'rule <id>'");
        auto colon = line.find(':');
        if (colon == std::string::npos) throw fail("expected 'key: value'");
        auto key = trim(line.substr(0, colon));
        auto value = trim(line.substr(colon + 1));
        auto& r = current->rule;
        if (key == "trigger") {
            if (current->has_trigger) throw fail("duplicate trigger");
            current->has_trigger = true;
            for (auto& word : tokens(value)) {
                TriggerItem item;
                if (word == "{entity}" || word == "{any}") {
                    if (!r.trigger.empty() && r.trigger.back().is_slot()) throw fail("adjacent slots are ambiguous");
                    item.slot = word == "{entity}" ? SlotKind::Entity : SlotKind::Any;
                    ++r.slot_count;
                } else {
                    auto it = concept_by_name.find(word);
                    if (it == concept_by_name.end()) throw fail("undefined concept '" + word + "'");
                    item.concept_index = it->second;
                    ++r.concept_count;
                }
                r.trigger.push_back(item);
            }
            if (r.concept_count == 0) throw fail("trigger needs at least one concept");
        } else if (key == "template") {
            if (current->has_template) throw fail("duplicate template");
            current->has_template = true;
            r.template_text = value;
        } else if (key.rfind("variant ", 0) == 0) {
            auto band = trim(key.substr(8));
            std::size_t idx = band == "low" ? 0 : band == "mid" ? 1 : band == "high" ? 2 : 3;
            if (idx == 3) throw fail("variant band must be low, mid or high");
            if (r.variants[idx]) throw fail("duplicate variant " + band);
            r.variants[idx] = value;
        } else if (key == "kb") {
            if (value == "characters_in") r.kb = KbQuery::CharactersIn;
            else if (value == "costars") r.kb = KbQuery::Costars;
            else if (value == "related") r.kb = KbQuery::Related;
            else throw fail("unknown kb query '" + value + "'");
        } else if (key == "interest") {
            if (value.empty() || value.size() > 3 || !std::all_of(value.begin(), value.end(), ::isdigit) || value == "0")
                throw fail("interest must be a slot number");
            r.interest_slot = std::stoul(value);
        } else {
            throw fail("unknown key '" + key + "'");
        }
    }
    if (current) finish_rule(*current, set);

    // identical phrases in two concepts must be declared
    std::map<std::string, std::string> owner;
    for (const auto& c : set.concepts) {
        for (const auto& syn : c.synonyms) {
            auto phrase = join(syn, 0, syn.size());
            auto [it, fresh] = owner.emplace(phrase, c.name);
            if (!fresh && !overlaps.count(std::minmax(it->second, c.name)))
                throw LoadError({}, concept_line[c.name],
                                "'" + phrase + "' is in both " + it->second + " and " + c.name + " without an overlap line");
        }
    }
    return set;
}

RuleSet load_rules_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_rules(ss.str());
}

namespace {

struct Matcher {
    const RuleSet& set;
    const Rule& rule;
    const std::vector<std::string>& toks;
    const kb::KnowledgeBase* kb;
    std::vector<std::string> slots;
    std::vector<std::string> entities;

    // length of a synonym hit at p, or 0
    std::size_t hit(std::size_t concept_index, std::size_t p) const {
        for (const auto& syn : set.concepts[concept_index].synonyms) {
            if (p + syn.size() <= toks.size() && std::equal(syn.begin(), syn.end(), toks.begin() + static_cast<long>(p)))
                return syn.size();
        }
        return 0;
    }

    // Fills a slot from toks[b, e); Entity slots take the longest, then
    // earliest, sub-span naming a KB entity.
    bool capture(SlotKind kind, std::size_t b, std::size_t e) {
        if (b >= e) return false;
        if (kind == SlotKind::Any || !kb) {
            slots.push_back(join(toks, b, e));
            if (kind == SlotKind::Entity) entities.emplace_back();
            return true;
        }
        for (std::size_t len = e - b; len >= 1; --len) {
            for (std::size_t s = b; s + len <= e; ++s) {
                auto found = kb->find_by_name(join(toks, s, s + len));
                if (!found.empty()) {
                    slots.push_back(kb->name_of(found.front()).value_or(join(toks, s, s + len)));
                    entities.push_back(found.front());
                    return true;
                }
            }
        }
        return false;
    }

    bool search(std::size_t item, std::size_t pos) {
        if (item == rule.trigger.size()) return true;
        const auto& t = rule.trigger[item];
        auto saved_slots = slots.size();
        auto saved_entities = entities.size();
        auto undo = [&] {
            slots.resize(saved_slots);
            entities.resize(saved_entities);
        };
        if (t.is_slot()) {
            if (item + 1 == rule.trigger.size()) {
                if (capture(t.slot, pos, toks.size())) return true;
                undo();
                return false;
            }
            // the next item is a concept; the slot spans up to its hit
            const auto& next = rule.trigger[item + 1];
            for (std::size_t p = pos + 1; p < toks.size(); ++p) {
                auto len = hit(*next.concept_index, p);
                if (!len) continue;
                if (capture(t.slot, pos, p) && search(item + 2, p + len)) return true;
                undo();
            }
            return false;
        }
        for (std::size_t p = pos; p < toks.size(); ++p) {
            auto len = hit(*t.concept_index, p);
            if (len && search(item + 1, p + len)) return true;
            undo();
        }
        return false;
    }
};

}  // namespace

std::optional<Matched> match(std::string_view utterance, const RuleSet& rules, const kb::KnowledgeBase* kb) {
    auto toks = tokens(normalize(utterance));
    std::optional<Matched> best;
    for (std::size_t i = 0; i < rules.rules.size(); ++i) {
        const auto& r = rules.rules[i];
        if (best && r.concept_count <= rules.rules[best->rule].concept_count) continue;
        Matcher m{rules, r, toks, kb, {}, {}};
        if (m.search(0, 0)) best = Matched{i, std::move(m.slots), std::move(m.entities)};
    }
    return best;
}

Band valence_band(double v) {
    if (v < 3.33) return Band::Low;
    if (v < 6.67) return Band::Mid;
    return Band::High;
}

const char* band_name(Band b) {
    switch (b) {
        case Band::Low: return "low";
        case Band::Mid: return "mid";
        case Band::High: return "high";
    }
    return "?";
}

const char* step_name(EnrollStep s) {
    switch (s) {
        case EnrollStep::AskName: return "ask_name";
        case EnrollStep::AskAge: return "ask_age";
        case EnrollStep::AskPhotoConsent: return "ask_photo_consent";
        case EnrollStep::Done: return "done";
    }
    return "?";
}

namespace {

std::string capitalize_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
        out[out.size() - w.size()] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[out.size() - w.size()])));
    }
    return out;
}

std::optional<std::string> extract_name(std::string_view utterance) {
    auto toks = tokens(normalize(utterance));
    static const std::vector<std::vector<std::string>> lead = {
        {"my", "name", "is"}, {"name", "is"}, {"i", "am"}, {"im"}, {"call", "me"}, {"it", "is"}, {"its"}, {"i", "m"}};
    for (const auto& l : lead) {
        if (toks.size() > l.size() && std::equal(l.begin(), l.end(), toks.begin())) {
            toks.erase(toks.begin(), toks.begin() + static_cast<long>(l.size()));
            break;
        }
    }
    if (toks.empty() || toks.size() > 3) return std::nullopt;
    for (const auto& t : toks) {
        if (!std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isalpha(c) || c >= 0x80; })) return std::nullopt;
    }
    return capitalize_words(toks);
}

std::optional<unsigned> extract_age(std::string_view utterance) {
    static const std::vector<std::string> words = {"zero",    "one",     "two",       "three",    "four",
                                                   "five",    "six",     "seven",     "eight",    "nine",
                                                   "ten",     "eleven",  "twelve",    "thirteen", "fourteen",
                                                   "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
                                                   "twenty"};
    for (const auto& t : tokens(normalize(utterance))) {
        if (!t.empty() && t.size() <= 3 && std::all_of(t.begin(), t.end(), ::isdigit)) {
            auto v = static_cast<unsigned>(std::stoul(t));
            if (v >= 1 && v <= 120) return v;
            return std::nullopt;
        }
        auto it = std::find(words.begin(), words.end(), t);
        if (it != words.end() && it != words.begin()) return static_cast<unsigned>(it - words.begin());
    }
    return std::nullopt;
}

std::optional<bool> extract_consent(std::string_view utterance) {
    static const std::set<std::string> yes = {"yes", "yeah", "yep", "sure", "ok", "okay", "course", "y"};
    static const std::set<std::string> no = {"no", "nope", "not", "dont", "n", "never"};
    std::optional<bool> out;
    for (const auto& t : tokens(normalize(utterance))) {
        if (no.count(t)) return false;  // "yes, no" and "not sure" are refusals
        if (yes.count(t)) out = true;
    }
    return out;
}

std::string english_list(std::vector<std::string> items) {
    if (items.empty()) return {};
    std::string out = items[0];
    for (std::size_t i = 1; i < items.size(); ++i) out += (i + 1 == items.size() ? " and " : ", ") + items[i];
    return out;
}

std::string kb_answer(KbQuery kind, const std::string& entity, const kb::KnowledgeBase* kb) {
    const char* none = kind == KbQuery::Related ? "nothing I know of" : "nobody I know of";
    if (!kb || entity.empty()) return none;
    std::vector<std::string> iris;
    if (kind == KbQuery::CharactersIn) {
        auto s = kb->characters_in(entity);
        iris.assign(s.begin(), s.end());
    } else if (kind == KbQuery::Costars) {
        auto s = kb->costars(entity);
        iris.assign(s.begin(), s.end());
    } else {
        iris = kb->related_topics(entity, 3);
    }
    std::vector<std::string> names;
    for (const auto& iri : iris) {
        auto n = kb->name_of(iri);
        if (!n) {
            auto cut = iri.find_last_of("#/:");
            n = cut == std::string::npos ? iri : iri.substr(cut + 1);
        }
        names.push_back(*n);
    }
    // ranked queries keep rank order; sets read best alphabetically
    if (kind != KbQuery::Related) std::sort(names.begin(), names.end());
    return names.empty() ? none : english_list(names);
}

std::string render(const std::string& tmpl, const Context& ctx, const Matched& m, const std::string& answer) {
    std::string out;
    auto last = tmpl.cbegin();
    for (std::sregex_iterator it(tmpl.begin(), tmpl.end(), placeholder_re()), end; it != end; ++it) {
        out.append(last, tmpl.cbegin() + it->position(0));
        auto name = (*it)[1].str();
        if (name == "user.name") {
            out += ctx.profile ? ctx.profile->name : "friend";
        } else if (name == "kb.answer") {
            out += answer;
        } else {
            out += m.slots.at(std::stoul(name.substr(5)) - 1);
        }
        last = tmpl.cbegin() + it->position(0) + it->length(0);
    }
    out.append(last, tmpl.cend());
    return out;
}

Response continue_enrollment(std::string_view utterance, const Context& ctx) {
    Response r{{}, {}, ctx};
    auto& p = *r.context.pending;
    switch (p.step) {
        case EnrollStep::AskName:
            if (auto name = extract_name(utterance)) {
                p.name = *name;
                p.step = EnrollStep::AskAge;
                r.text = "Nice to meet you, " + p.name + "! How old are you?";
                r.acts.emplace_back(act::RequestEnrollmentStep{EnrollStep::AskAge});
            } else {
                r.text = "I did not catch your name. What is your name?";
            }
            break;
        case EnrollStep::AskAge:
            if (auto age = extract_age(utterance)) {
                p.age = *age;
                p.step = EnrollStep::AskPhotoConsent;
                r.text = "Thank you! May I keep a picture of you, so I can recognize you next time? Please answer yes or no.";
                r.acts.emplace_back(act::RequestEnrollmentStep{EnrollStep::AskPhotoConsent});
            } else {
                r.text = "How old are you? Please tell me a number.";
            }
            break;
        case EnrollStep::AskPhotoConsent:
            if (auto consent = extract_consent(utterance)) {
                r.acts.emplace_back(act::RequestEnrollmentStep{EnrollStep::Done});
                r.acts.emplace_back(act::Enroll{p.name, p.age, *consent});
                r.text = "Great, " + p.name + "! Now I will remember you." +
                         (*consent ? " I saved your picture." : " I will not keep any picture.");
                identity::UserProfile provisional;
                provisional.name = p.name;
                provisional.age = p.age;
                r.context.profile = std::move(provisional);
                r.context.pending.reset();  // done is terminal
            } else {
                r.text = "Please answer yes or no: may I keep your picture?";
            }
            break;
        case EnrollStep::Done:
            r.context.pending.reset();
            r.text = std::string(kFallback);
            break;
    }
    return r;
}

}  // namespace

Response respond(std::string_view utterance, const Context& ctx, const RuleSet& rules, const kb::KnowledgeBase* kb) {
    if (ctx.pending && ctx.pending->step != EnrollStep::Done) return continue_enrollment(utterance, ctx);

    Response r{{}, {}, ctx};
    r.context.pending.reset();
    auto m = match(utterance, rules, kb);
    if (!m) {
        r.text = std::string(kFallback);
        return r;
    }
    const auto& rule = rules.rules[m->rule];
    if (rule.uses_user_name && !ctx.profile) {
        r.context.pending = PendingEnrollment{};
        r.text = "Hi! I don't think we have met yet. What is your name?";
        r.acts.emplace_back(act::RequestEnrollmentStep{EnrollStep::AskName});
        return r;
    }
    const std::string* tmpl = &rule.template_text;
    if (ctx.latest_emotion) {
        auto band = static_cast<std::size_t>(valence_band(ctx.latest_emotion->vad[0]));
        if (rule.variants[band]) tmpl = &*rule.variants[band];
    }
    std::string answer;
    if (rule.kb != KbQuery::None) {
        const auto& entity = m->entities.front();
        r.acts.emplace_back(act::Query{rule.kb, {entity}});
        answer = kb_answer(rule.kb, entity, kb);
    }
    if (rule.interest_slot) r.acts.emplace_back(act::RecordInterest{m->slots.at(*rule.interest_slot - 1)});
    r.text = render(*tmpl, ctx, *m, answer);
    if (r.text.empty()) r.text = std::string(kFallback);
    return r;
}

Observation observe_emotion(const Context& ctx, const emotion::EmotionReport& report) {
    Observation o{ctx, std::nullopt};
    auto it = report.persons.find(0);
    if (it == report.persons.end()) return o;
    ObservedEmotion e;
    for (const auto& [name, pct] : it->second.emotions) e.categories.push_back(name);
    e.vad = it->second.vad;
    o.act = act::RecordInteraction{identity::EmotionEntry{0, e.categories, e.vad}};
    o.context.latest_emotion = std::move(e);
    return o;
}

}  // namespace wolly::dialogue
