#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "wolly/chat_service.hpp"
#include "wolly/dialogue.hpp"
#include "wolly/http_host.hpp"

using namespace wolly;
using namespace wolly::dialogue;

namespace {

std::string data(const std::string& rel) { return std::string(WOLLY_DATA_DIR) + "/" + rel; }

std::string read_all(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Shipped {
    kb::KnowledgeBase kb;
    RuleSet rules = load_rules_file(data("dialogue/rules.txt"));
    Shipped() { kb.load_file(data("kb/movies.nt")); }
};

emotion::EmotionReport listing_report() { return emotion::parse_response(read_all(data("fixtures/emotion_listing.json"))); }

template <class A>
bool has_act(const Response& r) {
    for (auto& a : r.acts)
        if (std::holds_alternative<A>(a)) return true;
    return false;
}

std::optional<EnrollStep> requested_step(const Response& r) {
    for (auto& a : r.acts)
        if (auto* s = std::get_if<act::RequestEnrollmentStep>(&a)) return s->step;
    return std::nullopt;
}

// Independent oracle for concept-only triggers: try every increasing choice
// of hit positions.
bool brute_match(const std::vector<std::string>& toks, const std::vector<std::vector<std::string>>& trigger_syns,
                 std::size_t item = 0, std::size_t from = 0) {
    if (item == trigger_syns.size()) return true;
    for (std::size_t p = from; p < toks.size(); ++p) {
        const auto& syn = trigger_syns[item];  // one-token synonyms in this generator
        for (const auto& word : syn) {
            if (toks[p] == word && brute_match(toks, trigger_syns, item + 1, p + 1)) return true;
        }
    }
    return false;
}

}  // namespace

TEST_SUITE("dialogue") {

TEST_CASE("normalize") {
    CHECK(normalize("Hi!!") == "hi");
    CHECK(normalize("  Who   STARS in\tThe Lion-King?? ") == "who stars in the lion king");
    CHECK(normalize("don't") == "dont");
    CHECK(normalize("...").empty());
    std::mt19937_64 rng(3);
    const std::string alphabet = "aZ 9!?-_.,\t'\"()x";
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        for (int n = rng() % 20; n > 0; --n) s += alphabet[rng() % alphabet.size()];
        auto once = normalize(s);
        CHECK(normalize(once) == once);
        CHECK(once.find("  ") == std::string::npos);
    }
}

TEST_CASE("load_rules validation") {
    const std::string concepts = "[concepts]\nconcept greet: hello, hi, hey\nconcept who: who\n[rules]\n";
    CHECK(load_rules(concepts + "rule g\n  trigger: greet\n  template: Hello!\n").size() == 1);

    auto rejects = [&](const std::string& rules, const std::string& id) {
        CAPTURE(rules);
        try {
            load_rules(concepts + rules);
            FAIL("accepted");
        } catch (const LoadError& e) {
            CHECK(e.rule_id == id);
            CHECK(e.line >= 1);
        }
    };
    rejects("rule g\n  trigger: wave\n  template: x\n", "g");
    rejects("rule g\n  trigger: greet\n  template: a\nrule g\n  trigger: who\n  template: b\n", "g");
    rejects("rule g\n  trigger: greet\n  template: ${user.age}\n", "g");
    rejects("rule g\n  trigger: greet {any}\n  template: ${slot.2}\n", "g");
    rejects("rule g\n  trigger: greet\n  template: ${kb.answer}\n", "g");
    rejects("rule g\n  trigger: greet {any}\n  kb: characters_in\n  template: ${kb.answer}\n", "g");
    rejects("rule g\n  trigger: greet {any} {entity}\n  template: x\n", "g");
    rejects("rule g\n  trigger: greet\n", "g");
    rejects("rule g\n  trigger: greet\n  template: ok\n  variant sideways: x\n", "g");
    rejects("rule g\n  trigger: {any}\n  template: x\n", "g");
    rejects("rule g\n  trigger: greet {any}\n  interest: 2\n  template: x\n", "g");
    rejects("rule g\n  trigger: greet\n  template: ${unterminated\n", "g");

    CHECK_THROWS_AS(load_rules("concept greet: hi\n"), LoadError);
    CHECK_THROWS_AS(load_rules("[concepts]\nconcept greet: hi\nconcept greet: hey\n"), LoadError);
    CHECK_THROWS_AS(load_rules("[concepts]\nconcept greet: hi, ,hey\n"), LoadError);
    // shared synonyms must be declared
    CHECK_THROWS_AS(load_rules("[concepts]\nconcept a: hi, yo\nconcept b: Yo!\n"), LoadError);
    CHECK_NOTHROW(load_rules("[concepts]\nconcept a: hi, yo\nconcept b: Yo!\noverlap b a\n"));

    Shipped s;
    CHECK(s.rules.size() >= 8);
}

TEST_CASE("match examples") {
    auto rules = load_rules(
        "[concepts]\n"
        "concept greet: hello, hi, hey\n"
        "concept robot: robot, wolly\n"
        "concept morning: good morning\n"
        "[rules]\n"
        "rule plain\n  trigger: greet\n  template: a\n"
        "rule robot_hi\n  trigger: greet robot\n  template: b\n"
        "rule also_plain\n  trigger: greet\n  template: c\n"
        "rule morning\n  trigger: morning\n  template: d\n");
    auto hit = match("Hi!!", rules);
    REQUIRE(hit);
    CHECK(rules.rules[hit->rule].id == "plain");
    CHECK_FALSE(match("zzz", rules));
    CHECK(rules.rules[match("hey there little robot", rules)->rule].id == "robot_hi");
    CHECK(rules.rules[match("robot hey", rules)->rule].id == "plain");  // order matters
    CHECK(rules.rules[match("Good   morning!", rules)->rule].id == "morning");
    CHECK_FALSE(match("good evening morning", rules));  // phrases are contiguous
    CHECK_FALSE(match("", rules));
}

TEST_CASE("slots and KB entities") {
    Shipped s;
    auto m = match("Who stars in The Lion King, please?", s.rules, &s.kb);
    REQUIRE(m);
    CHECK(s.rules.rules[m->rule].id == "who_stars");
    CHECK(m->slots == std::vector<std::string>{"The Lion King"});
    CHECK(m->entities == std::vector<std::string>{"http://example.org/wolly#LionKing"});

    m = match("who stars with woody", s.rules, &s.kb);
    REQUIRE(m);
    CHECK(s.rules.rules[m->rule].id == "who_costars");
    CHECK(m->entities == std::vector<std::string>{"http://example.org/wolly#Woody"});

    // an entity slot that names nothing does not match
    m = match("who stars in atlantis", s.rules, &s.kb);
    CHECK((!m || s.rules.rules[m->rule].id != "who_stars"));

    m = match("I like dinosaurs and trains", s.rules, &s.kb);
    REQUIRE(m);
    CHECK(s.rules.rules[m->rule].id == "likes");
    CHECK(m->slots == std::vector<std::string>{"dinosaurs and trains"});
}

TEST_CASE("concept-only matching equals brute force; extra concepts restrict; selection is deterministic") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 200; ++trial) {
        // four concepts over disjoint one-token synonym sets
        std::vector<std::vector<std::string>> syns(4);
        for (std::size_t w = 0; w < vocab.size(); ++w) syns[rng() % 4].push_back(vocab[w]);
        std::string doc = "[concepts]\n";
        for (std::size_t c = 0; c < 4; ++c) {
            if (syns[c].empty()) syns[c].push_back("z" + std::to_string(c));
            doc += "concept c" + std::to_string(c) + ":";
            for (std::size_t i = 0; i < syns[c].size(); ++i) doc += (i ? ", " : " ") + syns[c][i];
            doc += "\n";
        }
        std::vector<std::size_t> trig;
        for (int n = 1 + rng() % 3; n > 0; --n) trig.push_back(rng() % 4);
        auto extended = trig;
        extended.insert(extended.begin() + static_cast<long>(rng() % (trig.size() + 1)), rng() % 4);
        auto rule_doc = [&](const std::vector<std::size_t>& t) {
            std::string r = "[rules]\nrule r\n  trigger:";
            for (auto c : t) r += " c" + std::to_string(c);
            return doc + r + "\n  template: x\n";
        };
        auto base = load_rules(rule_doc(trig));
        auto extra = load_rules(rule_doc(extended));
        std::vector<std::vector<std::string>> trig_syns;
        for (auto c : trig) trig_syns.push_back(syns[c]);

        for (int q = 0; q < 30; ++q) {
            std::vector<std::string> toks;
            std::string text;
            for (int n = rng() % 9; n > 0; --n) {
                toks.push_back(vocab[rng() % vocab.size()]);
                text += toks.back() + (rng() % 3 ? " " : "!? ");
            }
            bool got = match(text, base).has_value();
            CHECK(got == brute_match(toks, trig_syns));
            if (match(text, extra)) CHECK(got);
        }
    }

    Shipped s;
    for (const char* u : {"hello", "who stars in frozen", "i like cars", "thanks a lot", "qq"}) {
        auto a = match(u, s.rules, &s.kb), b = match(u, s.rules, &s.kb);
        CHECK(a.has_value() == b.has_value());
        if (a) CHECK(a->rule == b->rule);
    }
}

TEST_CASE("known user is greeted by name; unknown user is enrolled") {
    Shipped s;
    Context known;
    known.profile = identity::UserProfile{"u1", "Ada", 9, {}, {}, {}, {}};
    auto r = respond("Hello!", known, s.rules, &s.kb);
    CHECK(r.text.find("Ada") != std::string::npos);
    CHECK_FALSE(r.context.pending);

    Context ctx;
    r = respond("hello", ctx, s.rules, &s.kb);
    REQUIRE(r.context.pending);
    CHECK(r.context.pending->step == EnrollStep::AskName);
    CHECK(requested_step(r) == EnrollStep::AskName);
    CHECK(r.text.find("name") != std::string::npos);

    // invalid answers keep the step
    auto again = respond("123", r.context, s.rules, &s.kb);
    CHECK(again.context.pending->step == EnrollStep::AskName);

    auto age = respond("My name is ada lovelace", again.context, s.rules, &s.kb);
    CHECK(age.context.pending->step == EnrollStep::AskAge);
    CHECK(age.context.pending->name == "Ada Lovelace");
    CHECK(age.text.find("Ada Lovelace") != std::string::npos);

    auto still = respond("hello", age.context, s.rules, &s.kb);  // scripts continue verbatim
    CHECK(still.context.pending->step == EnrollStep::AskAge);

    auto consent = respond("I am nine", still.context, s.rules, &s.kb);
    CHECK(consent.context.pending->step == EnrollStep::AskPhotoConsent);
    CHECK(consent.context.pending->age == 9);

    auto unsure = respond("maybe", consent.context, s.rules, &s.kb);
    CHECK(unsure.context.pending->step == EnrollStep::AskPhotoConsent);

    auto done = respond("yes!", unsure.context, s.rules, &s.kb);
    CHECK_FALSE(done.context.pending);
    CHECK(requested_step(done) == EnrollStep::Done);
    const act::Enroll* e = nullptr;
    for (auto& a : done.acts)
        if ((e = std::get_if<act::Enroll>(&a))) break;
    REQUIRE(e);
    CHECK(e->name == "Ada Lovelace");
    CHECK(e->age == 9);
    CHECK(e->photo_consent);
    REQUIRE(done.context.profile);

    auto greeted = respond("hi", done.context, s.rules, &s.kb);
    CHECK(greeted.text.find("Ada Lovelace") != std::string::npos);

    Context refusing;
    refusing.pending = PendingEnrollment{EnrollStep::AskPhotoConsent, "Bo", 7};
    auto no = respond("no thanks", refusing, s.rules, &s.kb);
    for (auto& a : no.acts)
        if (auto* en = std::get_if<act::Enroll>(&a)) CHECK_FALSE(en->photo_consent);
}

TEST_CASE("enrollment script visits exactly ask_age, ask_photo_consent, done") {
    Shipped s;
    std::mt19937_64 rng(8);
    // invalid at every step: not a name, not an age in 1..120, not yes/no
    const std::vector<std::string> noise = {"", "!!", "7000", "?", "0", "la la la la"};
    for (int trial = 0; trial < 100; ++trial) {
        Context ctx;
        auto r = respond("hey", ctx, s.rules, &s.kb);
        std::vector<EnrollStep> visited{r.context.pending->step};
        const std::vector<std::string> answers = {"Zoe", std::to_string(5 + rng() % 8), rng() % 2 ? "yes" : "no"};
        for (const auto& answer : answers) {
            for (int n = rng() % 3; n > 0; --n) {
                auto step = r.context.pending->step;
                r = respond(noise[rng() % noise.size()], r.context, s.rules, &s.kb);
                if (r.context.pending && r.context.pending->step != step) visited.push_back(r.context.pending->step);
            }
            r = respond(answer, r.context, s.rules, &s.kb);
            auto st = requested_step(r);
            REQUIRE(st);
            visited.push_back(*st);
        }
        CHECK(visited == std::vector<EnrollStep>{EnrollStep::AskName, EnrollStep::AskAge, EnrollStep::AskPhotoConsent,
                                                 EnrollStep::Done});
        CHECK(has_act<act::Enroll>(r));
    }
}

TEST_CASE("KB-backed answers and interests") {
    Shipped s;
    Context ctx;
    auto r = respond("Who stars in Frozen?", ctx, s.rules, &s.kb);
    CHECK(r.text == "In Frozen you can meet Anna and Elsa.");
    CHECK(has_act<act::Query>(r));
    CHECK(respond("who stars with Buzz Lightyear", ctx, s.rules, &s.kb).text.find("Woody") != std::string::npos);
    CHECK(respond("something like frozen", ctx, s.rules, &s.kb).text.find("The Lion King") != std::string::npos);

    r = respond("I like dinosaurs", ctx, s.rules, &s.kb);
    REQUIRE(has_act<act::RecordInterest>(r));
    CHECK(std::get<act::RecordInterest>(r.acts.front()).topic == "dinosaurs");
}

TEST_CASE("emotion adaptation") {
    CHECK(valence_band(0.0) == Band::Low);
    CHECK(valence_band(3.3299) == Band::Low);
    CHECK(valence_band(3.33) == Band::Mid);
    CHECK(valence_band(6.6699) == Band::Mid);
    CHECK(valence_band(6.67) == Band::High);
    CHECK(valence_band(10.0) == Band::High);

    Context ctx;
    ctx.profile = identity::UserProfile{"u1", "Ada", 9, {}, {}, {}, {}};
    auto o = observe_emotion(ctx, listing_report());
    REQUIRE(o.context.latest_emotion);
    CHECK(std::abs(o.context.latest_emotion->vad[0] - 6.384) < 1e-3);
    CHECK(valence_band(o.context.latest_emotion->vad[0]) == Band::Mid);
    REQUIRE(o.act);
    CHECK(o.act->entry.vad == o.context.latest_emotion->vad);

    auto empty = observe_emotion(o.context, emotion::EmotionReport{});
    CHECK_FALSE(empty.act);
    CHECK(empty.context.latest_emotion->vad == o.context.latest_emotion->vad);

    emotion::EmotionReport sad;
    sad.persons[0] = emotion::PersonEmotion{{{"Sadness", "71.00"}}, {1.5, 4.0, 3.0}};
    auto latest = observe_emotion(o.context, sad);
    CHECK(latest.context.latest_emotion->categories == std::vector<std::string>{"Sadness"});

    Shipped s;
    CHECK(respond("hello", latest.context, s.rules, &s.kb).text.find("sad") != std::string::npos);
    emotion::EmotionReport happy;
    happy.persons[0] = emotion::PersonEmotion{{}, {8.0, 5.0, 5.0}};
    auto up = observe_emotion(latest.context, happy).context;
    CHECK(respond("hello", up, s.rules, &s.kb).text.find("happy") != std::string::npos);
    CHECK(respond("hello", o.context, s.rules, &s.kb).text == "Hi Ada! Do you want to write a program with me?");
}

TEST_CASE("respond always answers") {
    Shipped s;
    std::mt19937_64 rng(4);
    const std::vector<std::string> words = {"who", "stars", "in", "frozen", "hi", "i", "like", "", "?", "zz", "with"};
    Context ctx;
    for (int i = 0; i < 500; ++i) {
        std::string u;
        for (int n = rng() % 6; n > 0; --n) u += words[rng() % words.size()] + " ";
        auto r = respond(u, ctx, s.rules, &s.kb);
        CHECK_FALSE(r.text.empty());
        ctx = r.context;
    }
    CHECK(respond("qwerty", Context{}, s.rules, nullptr).text == kFallback);
}

TEST_CASE("chat service enrolls into the registry and recognizes later") {
    Shipped s;
    identity::RegistryOptions opts;
    opts.dimension = 4;
    identity::Registry reg(std::nullopt, opts);
    ChatService chat(std::make_shared<RuleSet>(s.rules), &s.kb, &reg);
    std::vector<double> face{0.1, 0.2, 0.3, 0.4};

    chat.chat("s1", "hello", face, std::string("pictures/ada.ppm"));
    chat.chat("s1", "Ada");
    chat.chat("s1", "8");
    auto done = chat.chat("s1", "yes");
    CHECK(done.text.find("Ada") != std::string::npos);
    REQUIRE(reg.size() == 1);
    auto p = reg.profiles().front();
    CHECK(p.name == "Ada");
    CHECK(p.age == 8);
    CHECK(p.picture_ref == "pictures/ada.ppm");

    chat.chat("s1", "I like robots");
    CHECK(reg.get(p.id)->interests == std::vector<std::string>{"robots"});
    CHECK(chat.observe("s1", listing_report()) == 1);
    CHECK(reg.get(p.id)->emotion_log.size() == 1);

    // a new session with a nearby face is greeted by the stored name
    auto hi = chat.chat("s2", "hi", std::vector<double>{0.1, 0.2, 0.3, 0.41});
    CHECK(hi.text.find("Ada") != std::string::npos);
    // nobody enrolled for a far face
    auto stranger = chat.chat("s3", "hi", std::vector<double>{5, 5, 5, 5});
    CHECK(chat.context("s3")->pending);
    CHECK(stranger.text.find("name") != std::string::npos);
    CHECK(chat.observe(std::nullopt, listing_report()) == 3);
}

TEST_CASE("chat HTTP endpoints") {
    Shipped s;
    ChatService chat(std::make_shared<RuleSet>(s.rules), &s.kb, nullptr);
    HttpHost host;
    mount_chat_routes(host.server(), chat);
    int port = host.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);
    using nlohmann::json;
    auto post = [&](const char* path, const json& body) { return c.Post(path, body.dump(), "application/json"); };

    auto r = post("/api/chat", {{"session", "a"}, {"text", "who stars in frozen"}});
    REQUIRE(r->status == 200);
    CHECK(json::parse(r->body).at("text") == "In Frozen you can meet Anna and Elsa.");
    r = post("/api/chat", {{"session", "a"}, {"text", "hello"}});
    CHECK(json::parse(r->body).at("enrollment") == "ask_name");
    CHECK(post("/api/chat", {{"session", "a"}})->status == 400);
    CHECK(c.Post("/api/chat", "nope", "application/json")->status == 400);

    r = post("/api/emotion", {{"session", "a"}, {"report", json::parse(read_all(data("fixtures/emotion_listing.json")))}});
    REQUIRE(r->status == 200);
    CHECK(json::parse(r->body).at("updated") == 1);
    CHECK(chat.context("a")->latest_emotion);
    CHECK(post("/api/emotion", {{"report", {{"data", 5}}}})->status == 400);
}

}
