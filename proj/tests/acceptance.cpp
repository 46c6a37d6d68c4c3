// Runs the eleven acceptance criteria and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "block_gen.hpp"
#include "cli_harness.hpp"
#include "identity_oracle.hpp"
#include "json.hpp"
#include "kb_oracles.hpp"
#include "kinematics_oracle.hpp"
#include "mini_json.hpp"
#include "protocol_sim.hpp"
#include "spdlog/spdlog.h"
#include "wolly/block_compiler.hpp"
#include "wolly/chat_service.hpp"
#include "wolly/dialogue.hpp"
#include "wolly/emotion.hpp"
#include "wolly/identity.hpp"
#include "wolly/knowledge_base.hpp"
#include "wolly/robot_runtime.hpp"

using namespace wolly;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = WOLLY_DATA_DIR;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "wolly_acceptance";
    fs::create_directories(dir);
    auto p = dir / name;
    fs::remove(p);
    return p;
}

// Collects the first few failures of one criterion.
class Check {
public:
    void operator()(bool ok, const std::string& what) {
        if (ok) return;
        if (++failures_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
    }
    bool ok() const { return failures_ == 0; }
    std::string notes() const {
        return failures_ > 3 ? notes_ + "; +" + std::to_string(failures_ - 3) + " more" : notes_;
    }

private:
    int failures_ = 0;
    std::string notes_;
};

// Strips whitespace outside string literals.
std::string squeeze(const std::string& s) {
    std::string out;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            out += c;
            if (c == '\\') out += s[++i];
            else if (c == '"') in_string = false;
        } else if (c == '"') {
            in_string = true;
            out += c;
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            out += c;
        }
    }
    return out;
}

void loss_combination(Check& check) {
    std::istringstream log(slurp(kData + "/fixtures/training_log.txt"));
    std::regex line(R"(epoch = (\d+) (validation )?loss = ([\d.]+) cat loss = ([\d.]+) cont_loss = ([\d.]+))");
    std::set<std::pair<int, bool>> seen;
    for (std::string l; std::getline(log, l);) {
        if (l.empty()) continue;
        std::smatch m;
        if (!std::regex_match(l, m, line)) {
            check(false, "unparsed line: " + l);
            continue;
        }
        double got = emotion::combined_loss(std::stod(m[4]), std::stod(m[5]), {0.5, 0.5});
        check(std::abs(got - std::stod(m[3])) <= 1e-3, "epoch " + m[1].str() + " off by " + std::to_string(got - std::stod(m[3])));
        seen.insert({std::stoi(m[1]), m[2].matched});
    }
    for (int e : {0, 1, 2})
        for (bool v : {false, true}) check(seen.count({e, v}) == 1, "missing epoch " + std::to_string(e));
    check(std::abs(emotion::combined_loss(28637.7351, 89312.7287) - 58975.2319) <= 1e-3, "worked example");
}

void mean_ap_fixture(Check& check) {
    std::istringstream log(slurp(kData + "/fixtures/evaluation_log.txt"));
    std::regex line(R"(^Category (\S+) ([0-9.]+)\s*$)");
    std::vector<double> aps;
    std::vector<std::string> names;
    for (std::string l; std::getline(log, l);) {
        std::smatch m;
        if (std::regex_match(l, m, line)) {
            names.push_back(m[1]);
            aps.push_back(std::stod(m[2]));
        }
    }
    check(aps.size() == 26, "found " + std::to_string(aps.size()) + " categories");
    check(names == std::vector<std::string>(emotion::categories().begin(), emotion::categories().end()),
          "category names differ from the category set");
    if (aps.size() != 26) return;
    double independent = 0;
    for (double a : aps) independent += a / 26;
    double got = emotion::mean_ap(aps);
    check(std::abs(got - 0.26862) <= 5e-5, "mean_ap " + std::to_string(got));
    check(std::abs(got - independent) <= 1e-12, "disagrees with a plain sum");
}

void mean_vad_fixture(Check& check) {
    double got = emotion::mean_vad_error({0.70991, 0.87199, 0.90254});
    check(std::abs(got - 0.82815) <= 1e-5, "mean_vad_error " + std::to_string(got));
}

void wire_format(Check& check) {
    auto bank = emotion::FixtureBank::load(kData + "/fixtures/emotion_fixtures.json");
    auto thresholds = emotion::load_thresholds(kData + "/fixtures/listing_thresholds.txt");
    auto raw = slurp(kData + "/fixtures/listing.ppm");
    auto report = emotion::analyze(std::vector<std::uint8_t>(raw.begin(), raw.end()), *bank, *bank, thresholds);
    check(report.persons.size() == 2, "expected two persons");
    auto listing = slurp(kData + "/fixtures/emotion_listing.json");
    auto rendered = emotion::render_response(report);
    check(rendered == squeeze(listing), "rendered bytes differ from the listing");
    check(testjson::compact(testjson::parse(rendered)) == rendered, "independent parser does not round-trip");
    check(emotion::parse_response(listing) == report, "parse_response(listing) differs from the report");
    check(emotion::render_response(emotion::parse_response(rendered)) == rendered, "render . parse is not the identity");
}

void compiler_oracle(Check& check) {
    testgen::BlockTreeGen gen(20240501, 4, 5);
    for (int i = 0; i < 1000; ++i) {
        auto tree = gen.tree();
        auto a = testgen::run_route([&] { return blocks::compile(tree); });
        auto b = testgen::run_route([&] { return blocks::interpret(tree); });
        check(testgen::same_outcome(a, b), "tree " + std::to_string(i) + " diverges");
    }
}

void kinematics(Check& check) {
    using robot::apply;
    std::mt19937_64 rng(77);
    for (int n = 0; n < 10000; ++n) {
        robot::KinematicConfig cfg;
        if (n % 2) {
            cfg.step_distance = std::uniform_real_distribution<double>(0.01, 2)(rng);
            cfg.turn_angle = std::uniform_real_distribution<double>(1, 180)(rng);
        }
        auto start = testgen::random_state(rng);
        std::vector<Instruction> seq;
        for (auto n_moves = 1 + rng() % 40; n_moves > 0; --n_moves) seq.push_back(testgen::random_move(rng));

        auto s = start;
        for (const auto& i : seq) {
            auto there_and_back = apply(apply(s, i, cfg), testgen::inverse(i), cfg);
            check(std::hypot(there_and_back.pose.x - s.pose.x, there_and_back.pose.y - s.pose.y) <= 1e-6 &&
                      testgen::angle_gap(there_and_back.pose.heading, s.pose.heading) <= 1e-6,
                  "inverse pair, sequence " + std::to_string(n));
            s = apply(s, i, cfg);
        }
        robot::KinematicConfig quarter = cfg;
        quarter.turn_angle = 90;
        auto spun = s;
        for (int k = 0; k < 4; ++k) spun = apply(spun, Instruction::left(), quarter);
        check(spun.pose.x == s.pose.x && spun.pose.y == s.pose.y && testgen::angle_gap(spun.pose.heading, s.pose.heading) <= 1e-6,
              "four lefts, sequence " + std::to_string(n));
        for (auto it = seq.rbegin(); it != seq.rend(); ++it) s = apply(s, testgen::inverse(*it), cfg);
        check(std::hypot(s.pose.x - start.pose.x, s.pose.y - start.pose.y) <= 1e-6 &&
                  testgen::angle_gap(s.pose.heading, start.pose.heading) <= 1e-6,
              "walk reversal, sequence " + std::to_string(n));
    }
}

void protocol(Check& check) {
    int redeliveries = 0, stops = 0, dups = 0, completions = 0;
    for (std::uint64_t seed = 1000; seed < 1500; ++seed) {
        auto r = testgen::simulate_session(seed);
        testgen::check_invariants(r);
        for (const auto& v : r.violations) check(false, "seed " + std::to_string(seed) + ": " + v);
        redeliveries += r.redeliveries;
        stops += r.stops;
        dups += r.duplicate_acks;
        completions += r.completions;
    }
    // the sessions must actually exercise each scenario
    check(redeliveries > 0, "no redelivery exercised");
    check(stops > 0, "no stop exercised");
    check(dups > 0, "no duplicate ack exercised");
    check(completions > 0, "no completion exercised");
}

void kb_compare(Check& check, const kb::KnowledgeBase& store, const std::vector<kb::Triple>& ts, const std::string& label) {
    std::set<std::string> entities;
    for (const auto& t : ts) {
        entities.insert(t.subject);
        if (t.object.is_iri()) entities.insert(t.object.value);
    }
    entities.insert(testgen::ex("absent"));
    for (const auto& e : entities) {
        check(store.characters_in(e) == testgen::stars_oracle(ts, e), label + ": characters_in " + e);
        auto co = store.costars(e);
        check(co == testgen::costars_oracle(ts, e), label + ": costars " + e);
        check(!co.count(e), label + ": costars reflexive at " + e);
        for (const auto& c : co) check(store.costars(c).count(e) == 1, label + ": costars asymmetric at " + e);
        if (e == testgen::ex("absent")) continue;
        for (std::size_t k : {1u, 3u, 1000u})
            check(store.related_topics(e, k) == testgen::related_oracle(ts, e, k), label + ": related_topics " + e);
    }
}

void kb_oracle(Check& check) {
    std::mt19937_64 rng(8080);
    for (int trial = 0; trial < 100; ++trial) {
        auto r = testgen::random_kb(rng);
        kb::KnowledgeBase store;
        store.load_triples(r.text);
        kb_compare(check, store, r.triples, "random kb " + std::to_string(trial));
    }
    kb::KnowledgeBase fixture;
    fixture.load_file(kData + "/kb/movies.nt");
    auto ts = kb::parse_triples(slurp(kData + "/kb/movies.nt"));
    kb_compare(check, fixture, ts, "fixture");
    check(fixture.characters_in(testgen::ex("Frozen")).size() == 2, "fixture Frozen cast");
}

void identity_oracle(Check& check) {
    std::mt19937_64 rng(128);
    const std::size_t d = 128;
    for (int trial = 0; trial < 100; ++trial) {
        identity::Registry reg(std::nullopt, identity::RegistryOptions{d, 0.6, 0, {}});
        auto n = 1 + rng() % 1000;
        for (std::size_t i = 0; i < n; ++i) reg.enroll("p" + std::to_string(i), 5 + i % 10, testgen::random_embedding(rng, d));
        auto ps = reg.profiles();
        for (int q = 0; q < 10; ++q) {
            std::vector<double> probe;
            if (q % 2) {
                probe = ps[rng() % ps.size()].embedding;
                for (auto& x : probe) x += std::normal_distribution<double>(0, 0.02)(rng);
            } else {
                probe = testgen::random_embedding(rng, d);
            }
            auto got = reg.recognize(probe);
            auto want = testgen::scan_oracle(ps, probe, 0.6);
            check(got.profile_id == want.profile_id, "trial " + std::to_string(trial) + ": nearest differs");
            check(std::abs(got.distance - want.distance) <= 1e-9, "trial " + std::to_string(trial) + ": distance differs");
            double lo = std::uniform_real_distribution<double>(0, 6)(rng);
            double hi = lo + std::uniform_real_distribution<double>(0, 3)(rng);
            if (reg.recognize(probe, lo).known()) check(reg.recognize(probe, hi).known(), "threshold not monotone");
            if (!reg.recognize(probe, hi).known()) check(!reg.recognize(probe, lo).known(), "threshold not monotone");
        }
    }

    // persistence: reopen equals the original, and the compacted file is the snapshot
    for (int trial = 0; trial < 5; ++trial) {
        auto path = scratch("registry" + std::to_string(trial) + ".jsonl");
        identity::RegistryOptions opts{d, 0.6, 0, [t = std::int64_t{1700000000000}]() mutable { return t += 7; }};
        std::string snapshot;
        std::vector<identity::UserProfile> before;
        {
            identity::Registry reg(path, opts);
            auto n = 1 + rng() % 60;
            for (std::size_t i = 0; i < n; ++i) {
                auto id = reg.enroll("kid " + std::to_string(i), 6 + i % 6, testgen::random_embedding(rng, d),
                                     i % 2 ? std::nullopt : std::optional<std::string>("pictures/" + std::to_string(i) + ".ppm"));
                if (i % 3 == 0)
                    reg.record_interaction(id, {"topic" + std::to_string(i % 4)},
                                           identity::EmotionEntry{0, {"Engagement"}, {6.384382724761963, 1.0 / 3.0, 4.8}});
            }
            snapshot = reg.snapshot_text();
            before = reg.profiles();
        }
        identity::Registry again(path, opts);
        check(again.profiles() == before, "reopened profiles differ");
        check(again.snapshot_text() == snapshot, "reopened snapshot differs");
        again.compact();
        check(slurp(path.string()) == snapshot, "compacted file differs from the snapshot");
        identity::Registry third(path, opts);
        check(third.snapshot_text() == snapshot, "second reopen differs");
    }
}

// Waits until the bus reports the robot's state after the given sequence
// number of a program other than `not_program`.
json robot_state_after(const std::vector<std::string>& base, std::size_t seq, const std::string& not_program) {
    auto args = base;
    args.push_back("status");
    json last;
    for (int i = 0; i < 300; ++i) {
        auto r = cliharness::run(args);
        if (r.code == 0) {
            last = json::parse(r.out);
            const auto& rs = last.at("robot_state");
            if (!rs.is_null() && rs.at("seq") == seq && rs.at("program_id") != not_program) return last;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return last;
}

void end_to_end(Check& check) {
    auto registry = scratch("e2e_registry.jsonl");
    cliharness::Background serve(cliharness::serve_args(kData, registry), true);
    std::vector<std::string> base = {"--bus", serve.bus(), "--log-level", "warn"};
    cliharness::Background robot(cliharness::robot_args(serve.bus()));

    auto submit = [&](const std::string& file) {
        auto args = base;
        for (const char* a : {"submit", "--wait", "--timeout", "5"}) args.push_back(a);
        args.push_back(file);
        return cliharness::run(args);
    };
    auto near = [](const json& pose, double x, double y, double heading) {
        return std::abs(pose.at("x").get<double>() - x) <= 1e-6 && std::abs(pose.at("y").get<double>() - y) <= 1e-6 &&
               testgen::angle_gap(pose.at("heading").get<double>(), heading) <= 1e-6;
    };

    auto first = submit(kData + "/blocks/square_corner.json");
    check(first.code == 0, "submit repeat(3){forward, left}: " + first.err);
    if (first.code != 0) return;
    auto st = robot_state_after(base, 5, "");
    check(st.at("phase") == "IDLE", "bus not IDLE after the program");
    check(near(st.at("robot_state").at("pose"), 0.0, 0.1, 270.0), "three corners: " + st.at("robot_state").dump());

    auto closing = scratch("closing.json");
    std::ofstream(closing) << R"({"kind": "sequence", "body": [{"kind": "move_forward"}, {"kind": "move_left"}]})";
    auto second = submit(closing.string());
    check(second.code == 0, "submit {forward, left}: " + second.err);
    if (second.code != 0) return;
    st = robot_state_after(base, 1, st.at("robot_state").at("program_id").get<std::string>());
    check(st.at("phase") == "IDLE", "bus not IDLE at the end");
    check(near(st.at("robot_state").at("pose"), 0.0, 0.0, 0.0), "fourth corner: " + st.at("robot_state").dump());

    check(robot.stop() == 0, "robot exit code");
    auto final_state = json::parse(robot.out());
    check(near(final_state, 0.0, 0.0, 0.0), "robot final state " + final_state.dump());
    check(serve.stop() == 0, "serve exit code");
}

const dialogue::act::Enroll* find_enroll(const dialogue::Response& r) {
    for (const auto& a : r.acts)
        if (auto* e = std::get_if<dialogue::act::Enroll>(&a)) return e;
    return nullptr;
}

std::optional<dialogue::EnrollStep> step_of(const dialogue::Response& r) {
    for (const auto& a : r.acts)
        if (auto* s = std::get_if<dialogue::act::RequestEnrollmentStep>(&a)) return s->step;
    return std::nullopt;
}

void dialogue_flows(Check& check) {
    using dialogue::EnrollStep;
    kb::KnowledgeBase store;
    store.load_file(kData + "/kb/movies.nt");
    auto rules = std::make_shared<dialogue::RuleSet>(dialogue::load_rules_file(kData + "/dialogue/rules.txt"));

    // the pure transition walks the whole script
    dialogue::Context ctx;
    std::vector<std::optional<EnrollStep>> steps;
    dialogue::Response r = dialogue::respond("Hello!", ctx, *rules, &store);
    steps.push_back(step_of(r));
    for (const char* answer : {"My name is Mia", "I am eight", "yes"}) {
        r = dialogue::respond(answer, r.context, *rules, &store);
        steps.push_back(step_of(r));
    }
    check(steps == std::vector<std::optional<EnrollStep>>{EnrollStep::AskName, EnrollStep::AskAge,
                                                          EnrollStep::AskPhotoConsent, EnrollStep::Done},
          "enrollment steps out of order");
    auto* e = find_enroll(r);
    check(e && e->name == "Mia" && e->age == 8 && e->photo_consent, "enroll act");
    check(!r.context.pending, "enrollment still pending");

    // through the service: the registry holds the profile and a later session is greeted by name
    identity::RegistryOptions opts;
    opts.dimension = 4;
    identity::Registry reg(std::nullopt, opts);
    dialogue::ChatService chat(rules, &store, &reg);
    std::vector<double> face{0.2, 0.1, 0.4, 0.3};
    auto ask = chat.chat("a", "hi there", face);
    check(ask.text.find("name") != std::string::npos, "unknown user not asked for a name");
    chat.chat("a", "Leo");
    chat.chat("a", "7");
    chat.chat("a", "no");
    check(reg.size() == 1 && reg.profiles().front().name == "Leo" && reg.profiles().front().age == 7, "registry profile");
    auto hello = chat.chat("b", "hello", std::vector<double>{0.2, 0.1, 0.4, 0.31});
    check(hello.text.find("Leo") != std::string::npos, "known user greeted as: " + hello.text);

    auto who = dialogue::respond("who stars in Frozen?", dialogue::Context{}, *rules, &store).text;
    check(who.find("Anna") != std::string::npos && who.find("Elsa") != std::string::npos, "who stars in Frozen: " + who);
    // deterministic
    check(dialogue::respond("who stars in Frozen?", dialogue::Context{}, *rules, &store).text == who, "answer not repeatable");
}

struct Criterion {
    int number;
    const char* name;
    double budget_s;
    std::function<void(Check&)> run;
};

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<Criterion> criteria = {
        {1, "loss combination", 1, loss_combination},
        {2, "mean AP", 1, mean_ap_fixture},
        {3, "mean VAD error", 1, mean_vad_fixture},
        {4, "wire format", 1, wire_format},
        {5, "compiler oracle", 10, compiler_oracle},
        {6, "kinematics properties", 10, kinematics},
        {7, "protocol simulation", 30, protocol},
        {8, "knowledge base oracle", 10, kb_oracle},
        {9, "identity oracle", 20, identity_oracle},
        {10, "end-to-end headless", 5, end_to_end},
        {11, "dialogue flows", 5, dialogue_flows},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Check check;
        auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(check);
        } catch (const std::exception& ex) {
            check(false, std::string("exception: ") + ex.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        check(secs <= c.budget_s, "over the " + std::to_string(static_cast<int>(c.budget_s)) + " s budget");
        std::printf("%s %2d %-22s %7.3f s%s%s\n", check.ok() ? "PASS" : "FAIL", c.number, c.name, secs,
                    check.ok() ? "" : "  ", check.notes().c_str());
        failed += !check.ok();
    }
    std::fflush(stdout);
    return failed;
}
