#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "wolly/http_host.hpp"
#include "wolly/identity.hpp"
#include "identity_oracle.hpp"

using namespace wolly;
using namespace wolly::identity;
using wolly::testgen::random_embedding;
using wolly::testgen::scan_oracle;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    auto dir = fs::temp_directory_path() / "wolly_identity_tests";
    fs::create_directories(dir);
    auto p = dir / name;
    fs::remove(p);
    return p;
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RegistryOptions small(std::size_t d = 4) {
    RegistryOptions o;
    o.dimension = d;
    std::int64_t t = 1000;
    o.clock = [t]() mutable { return t += 10; };
    return o;
}

}  // namespace

TEST_SUITE("identity") {

TEST_CASE("enroll and recognize") {
    Registry reg(std::nullopt, small());
    std::vector<double> zero(4, 0.0);
    CHECK_FALSE(reg.recognize(zero).known());

    auto a = reg.enroll("Ada", 9, std::vector<double>{0, 0, 0, 0});
    auto b = reg.enroll("Bo", 8, std::vector<double>{1, 1, 1, 1});
    CHECK(a != b);
    auto self = reg.recognize(std::vector<double>{1, 1, 1, 1});
    CHECK(self.profile_id == b);
    CHECK(self.distance == 0.0);

    auto near_b = reg.recognize(std::vector<double>{0.9, 0.9, 0.9, 0.9});
    CHECK(near_b.profile_id == b);
    CHECK(near_b.distance == doctest::Approx(0.2));

    // exactly at the threshold is still known
    auto edge = reg.recognize(std::vector<double>{0.6, 0, 0, 0});
    CHECK(edge.distance == 0.6);
    CHECK(edge.profile_id == a);
    auto beyond = reg.recognize(std::vector<double>{0.61, 0, 0, 0});
    CHECK_FALSE(beyond.known());
    CHECK(beyond.distance == doctest::Approx(0.61));

    CHECK_THROWS_AS(reg.enroll("Cy", 7, std::vector<double>{1, 2, 3}), IdentityError);
    CHECK_THROWS_AS(reg.recognize(std::vector<double>{1, 2, 3, 4, 5}), IdentityError);
    CHECK_THROWS_AS(reg.enroll("", 7, zero), IdentityError);
}

TEST_CASE("ties go to the earliest enrollment") {
    Registry reg(std::nullopt, small(2));
    auto first = reg.enroll("A", 1, std::vector<double>{1, 0});
    reg.enroll("B", 1, std::vector<double>{-1, 0});
    reg.enroll("C", 1, std::vector<double>{1, 0});
    CHECK(reg.recognize(std::vector<double>{0, 0}, 5.0).profile_id == first);
    CHECK(reg.recognize(std::vector<double>{1, 0}).profile_id == first);
}

TEST_CASE("interactions") {
    Registry reg(std::nullopt, small());
    auto id = reg.enroll("Ada", 9, std::vector<double>(4, 0.5));
    reg.record_interaction(id, {"movies"});
    reg.record_interaction(id, {"movies", "cartoons"});
    reg.record_interaction(id, {}, EmotionEntry{0, {"Happiness"}, {6.5, 5, 6}});
    auto p = reg.get(id);
    REQUIRE(p);
    CHECK(p->interests == std::vector<std::string>{"movies", "cartoons"});
    REQUIRE(p->emotion_log.size() == 1);
    CHECK(p->emotion_log[0].timestamp_ms > 1000);
    CHECK(p->emotion_log[0].categories == std::vector<std::string>{"Happiness"});
    CHECK_THROWS_AS(reg.record_interaction("u999", {"x"}), IdentityError);
    CHECK_FALSE(reg.get("u999"));
}

TEST_CASE("recognize matches a linear scan and is monotone in the threshold") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        Registry reg(std::nullopt, RegistryOptions{128, 0.6, 0, {}});
        auto n = 1 + rng() % 400;
        for (std::size_t i = 0; i < n; ++i) reg.enroll("p" + std::to_string(i), 10, random_embedding(rng, 128));
        auto ps = reg.profiles();
        for (int q = 0; q < 40; ++q) {
            std::vector<double> probe;
            if (q % 2) {
                probe = ps[rng() % ps.size()].embedding;
                for (auto& x : probe) x += std::normal_distribution<double>(0, 0.02)(rng);
            } else {
                probe = random_embedding(rng, 128);
            }
            auto got = reg.recognize(probe);
            auto want = scan_oracle(ps, probe, 0.6);
            CHECK(got.profile_id == want.profile_id);
            CHECK(std::abs(got.distance - want.distance) <= 1e-9);
            for (double t : {0.1, 0.3, 0.6, 1.0, 3.0, 10.0}) {
                if (reg.recognize(probe, t).known()) {
                    CHECK(reg.recognize(probe, t * 1.5).known());
                    CHECK(reg.recognize(probe, t + 1e-9).known());
                }
            }
        }
    }
}

TEST_CASE("persistence round trip is byte-identical") {
    auto path = temp_file("roundtrip.jsonl");
    std::mt19937_64 rng(7);
    std::string snapshot;
    std::vector<UserProfile> before;
    {
        Registry reg(path, small(16));
        for (int i = 0; i < 20; ++i) {
            auto id = reg.enroll("kid" + std::to_string(i), 6 + i % 5, random_embedding(rng, 16),
                                 i % 3 ? std::nullopt : std::optional<std::string>("pictures/" + std::to_string(i) + ".ppm"));
            reg.record_interaction(id, {"movies", "topic" + std::to_string(i % 4)},
                                   EmotionEntry{0, {"Engagement", "Happiness"}, {6.384382724761963, 4.8, 1.0 / 3.0}});
        }
        snapshot = reg.snapshot_text();
        before = reg.profiles();
    }
    {
        Registry again(path, small(16));
        CHECK(again.profiles() == before);
        CHECK(again.snapshot_text() == snapshot);
        again.compact();
        CHECK(read_all(path) == snapshot);
    }
    Registry third(path, small(16));
    CHECK(third.profiles() == before);
    CHECK(third.snapshot_text() == snapshot);
    // ids continue after reopening
    auto fresh = third.enroll("new", 5, random_embedding(rng, 16));
    for (const auto& p : before) CHECK(p.id != fresh);
}

TEST_CASE("append-only file, automatic compaction and torn writes") {
    auto path = temp_file("compact.jsonl");
    RegistryOptions o = small(2);
    o.compact_after = 5;
    {
        Registry reg(path, o);
        auto id = reg.enroll("A", 1, std::vector<double>{0, 1});
        reg.record_interaction(id, {"x"});
        reg.record_interaction(id, {"y"});
        CHECK(read_all(path).find("\"record\":\"interaction\"") != std::string::npos);
        reg.record_interaction(id, {"z"});
        reg.record_interaction(id, {"w"});  // 5th record triggers the rewrite
        auto text = read_all(path);
        CHECK(text.find("\"record\":\"interaction\"") == std::string::npos);
        CHECK(text.find("\"record\":\"profile\"") != std::string::npos);
    }
    {
        std::ofstream torn(path, std::ios::app);
        torn << "{\"record\":\"interaction\",\"id\":\"u1\",\"inter";
    }
    Registry reopened(path, o);
    CHECK(reopened.get("u1")->interests == std::vector<std::string>{"x", "y", "z", "w"});

    auto bad = temp_file("corrupt.jsonl");
    {
        std::ofstream out(bad);
        out << "not json\n{\"record\":\"enroll\"}\n";
    }
    CHECK_THROWS_AS(Registry(bad, o), IdentityError);
}

TEST_CASE("concurrent readers with one writer") {
    Registry reg(std::nullopt, RegistryOptions{32, 0.6, 0, {}});
    std::mt19937_64 rng(1);
    std::vector<std::vector<double>> enrolled;
    for (int i = 0; i < 50; ++i) {
        enrolled.push_back(random_embedding(rng, 32));
        reg.enroll("p", 1, enrolled.back());
    }
    std::atomic<int> mismatches{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t) {
        readers.emplace_back([&, t] {
            for (int i = 0; i < 200; ++i) {
                auto& e = enrolled[(t * 13 + i) % enrolled.size()];
                if (reg.recognize(e).distance != 0.0) ++mismatches;
            }
        });
    }
    std::mt19937_64 wrng(2);
    for (int i = 0; i < 100; ++i) reg.enroll("w", 2, random_embedding(wrng, 32));
    for (auto& r : readers) r.join();
    CHECK(mismatches == 0);
    CHECK(reg.size() == 150);
}

TEST_CASE("HTTP endpoints") {
    Registry reg(std::nullopt, small(3));
    HttpHost host;
    mount_identity_routes(host.server(), reg);
    int port = host.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);
    using nlohmann::json;
    auto r = c.Post("/identity/enroll", json{{"name", "Ada"}, {"age", 9}, {"embedding", {0.1, 0.2, 0.3}}}.dump(),
                    "application/json");
    REQUIRE(r->status == 201);
    auto id = json::parse(r->body).at("id").get<std::string>();
    r = c.Post("/identity/recognize", json{{"embedding", {0.1, 0.2, 0.3}}}.dump(), "application/json");
    CHECK(json::parse(r->body).at("outcome") == "Known");
    CHECK(json::parse(r->body).at("profile_id") == id);
    r = c.Post("/identity/recognize", json{{"embedding", {5, 5, 5}}}.dump(), "application/json");
    CHECK(json::parse(r->body).at("outcome") == "Unknown");
    r = c.Post("/identity/recognize", json{{"embedding", {5, 5}}}.dump(), "application/json");
    CHECK(r->status == 422);
    r = c.Post("/identity/interaction",
               json{{"profile_id", id}, {"interests", {"movies"}}, {"emotion", {{"categories", {"Happiness"}}, {"vad", {6, 5, 6}}}}}
                   .dump(),
               "application/json");
    CHECK(r->status == 200);
    r = c.Get(("/identity/" + id).c_str());
    REQUIRE(r->status == 200);
    auto p = json::parse(r->body);
    CHECK(p.at("name") == "Ada");
    CHECK(p.at("interests") == json::array({"movies"}));
    CHECK(p.at("emotion_log").size() == 1);
    CHECK(c.Get("/identity/u404")->status == 404);
    CHECK(c.Post("/identity/interaction", json{{"profile_id", "u404"}}.dump(), "application/json")->status == 404);
}

}
