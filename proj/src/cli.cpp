#include "wolly/cli.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "wolly/block_compiler.hpp"
#include "wolly/bus_server.hpp"
#include "wolly/bus_service.hpp"
#include "wolly/chat_service.hpp"
#include "wolly/emotion_server.hpp"
#include "wolly/http_host.hpp"
#include "wolly/identity.hpp"
#include "wolly/knowledge_base.hpp"
#include "wolly/robot_runtime.hpp"

namespace wolly::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    Failure(int exit_code, std::string code, const std::string& reason)
        : std::runtime_error(reason), exit_code(exit_code), code(std::move(code)) {}
    int exit_code;
    std::string code;
};

Failure domain(std::string code, const std::string& reason) { return {kDomainError, std::move(code), reason}; }
Failure usage(const std::string& reason) { return {kUsageError, "Usage", reason}; }

struct Config {
    std::string bus = "127.0.0.1:8080";
    std::string emotion = "127.0.0.1:8090";
    std::string data_dir = WOLLY_DEFAULT_DATA_DIR;
    double step = 0.1;
    double turn = 90.0;
    std::string log_level = "info";
    std::string user = "teacher";
    std::string password = "teacher";
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw domain("FileNotFound", "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::pair<std::string, int> address(const std::string& a, const char* what) {
    try {
        auto hp = split_address(a);
        if (hp.first.empty() || hp.second < 0 || hp.second > 65535) throw std::invalid_argument("port out of range");
        return hp;
    } catch (const std::exception& e) {
        throw usage(std::string("bad ") + what + " address '" + a + "': " + e.what());
    }
}

/// Thin JSON client for the bus host; non-2xx answers become domain errors.
class Api {
public:
    explicit Api(const std::string& addr) {
        auto [host, port] = address(addr, "bus");
        client_ = std::make_unique<httplib::Client>(host, port);
        client_->set_connection_timeout(3);
        client_->set_read_timeout(10);
    }

    void login(const std::string& user, const std::string& password) {
        token_ = call("POST", "/api/login", json{{"name", user}, {"password", password}}).at("token").get<std::string>();
    }

    json call(const std::string& method, const std::string& path, const json& body = nullptr) {
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        auto res = method == "GET" ? client_->Get(path, headers)
                                   : client_->Post(path, headers, body.is_null() ? "{}" : body.dump(), "application/json");
        if (!res) throw domain("Unreachable", "no answer from the bus at " + path + ": " + httplib::to_string(res.error()));
        json j = json::parse(res->body, nullptr, false);
        if (res->status / 100 != 2) {
            if (j.is_object() && j.contains("code"))
                throw domain(j.at("code").get<std::string>(), j.value("reason", std::string()));
            throw domain("Http" + std::to_string(res->status), res->body);
        }
        if (j.is_discarded()) throw domain("BadResponse", "non-JSON answer from " + path);
        return j;
    }

private:
    std::unique_ptr<httplib::Client> client_;
    std::string token_;
};

std::vector<std::vector<double>> read_matrix(const std::string& path, std::size_t cols) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<double> row;
        std::string cell;
        while (ls >> cell) {
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (*end != '\0' || !std::isfinite(v))
                throw domain("ParseError", path + ":" + std::to_string(line_no) + ": not a number '" + cell + "'");
            row.push_back(v);
        }
        if (row.empty()) continue;
        if (row.size() != cols)
            throw domain("DimensionMismatch", path + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                                                  " columns, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string fixed5(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.5f", v);
    return buf;
}

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// ---- metrics ---------------------------------------------------------------

int metrics_ap(const std::string& scores_path, const std::string& labels_path, std::ostream& out) {
    auto scores = read_matrix(scores_path, emotion::kCategoryCount);
    auto labels = read_matrix(labels_path, emotion::kCategoryCount);
    if (scores.size() != labels.size())
        throw domain("DimensionMismatch", "scores and labels have different row counts");
    std::vector<double> aps;
    for (std::size_t c = 0; c < emotion::kCategoryCount; ++c) {
        std::vector<double> col;
        std::vector<std::uint8_t> lab;
        for (std::size_t r = 0; r < scores.size(); ++r) {
            col.push_back(scores[r][c]);
            if (labels[r][c] != 0.0 && labels[r][c] != 1.0) throw domain("ParseError", "labels must be 0 or 1");
            lab.push_back(labels[r][c] == 1.0);
        }
        aps.push_back(emotion::average_precision(lab, col));
        out << "Category " << emotion::categories()[c] << " " << fixed5(aps.back()) << "\n";
    }
    out << "Mean AP " << fixed5(emotion::mean_ap(aps)) << "\n";
    return kOk;
}

int metrics_vad(const std::string& pred_path, const std::string& truth_path, std::ostream& out) {
    auto to_vad = [](const std::vector<std::vector<double>>& m) {
        std::vector<emotion::Vad> v;
        for (auto& r : m) v.push_back({r[0], r[1], r[2]});
        return v;
    };
    auto pred = to_vad(read_matrix(pred_path, 3));
    auto truth = to_vad(read_matrix(truth_path, 3));
    auto err = emotion::vad_error(pred, truth);
    out << "Continuous Valence " << fixed5(err[0]) << "\n"
        << "Continuous Arousal " << fixed5(err[1]) << "\n"
        << "Continuous Dominance " << fixed5(err[2]) << "\n"
        << "Mean VAD Error " << fixed5(emotion::mean_vad_error(err)) << "\n";
    return kOk;
}

// Recomputes the aggregates of an evaluation log from its own detail lines.
int metrics_summary(const std::string& path, std::ostream& out) {
    std::istringstream in(read_file(path));
    static const std::regex category(R"(^Category (\S+) ([0-9.]+)\s*$)");
    static const std::regex continuous(R"(^Continuous (Valence|Arousal|Dominance) ([0-9.]+)\s*$)");
    static const std::regex mean_ap(R"(^Mean AP ([0-9.]+)\s*$)");
    static const std::regex mean_vad(R"(^Mean VAD Error ([0-9.]+)\s*$)");
    std::map<std::string, double> cats;
    std::map<std::string, double> dims;
    std::optional<double> printed_ap, printed_vad;
    std::smatch m;
    for (std::string line; std::getline(in, line);) {
        if (std::regex_match(line, m, category)) {
            if (!emotion::category_index(m[1].str())) throw domain("ParseError", "unknown category " + m[1].str());
            cats[m[1].str()] = std::stod(m[2].str());
        } else if (std::regex_match(line, m, continuous)) {
            dims[m[1].str()] = std::stod(m[2].str());
        } else if (std::regex_match(line, m, mean_ap)) {
            printed_ap = std::stod(m[1].str());
        } else if (std::regex_match(line, m, mean_vad)) {
            printed_vad = std::stod(m[1].str());
        }
    }
    if (cats.size() != emotion::kCategoryCount)
        throw domain("ParseError", "expected 26 Category lines, found " + std::to_string(cats.size()));
    if (dims.size() != 3) throw domain("ParseError", "expected 3 Continuous lines");
    std::vector<double> aps;
    for (auto [name, v] : cats) aps.push_back(v);
    double ap = emotion::mean_ap(aps);
    double vad = emotion::mean_vad_error({dims["Valence"], dims["Arousal"], dims["Dominance"]});
    out << "Mean AP " << fixed5(ap) << "\n" << "Mean VAD Error " << fixed5(vad) << "\n";
    // printed aggregates carry five decimals
    if ((printed_ap && std::abs(*printed_ap - ap) > 5e-6 + 1e-12) || (printed_vad && std::abs(*printed_vad - vad) > 5e-6 + 1e-12))
        throw domain("Mismatch", "recomputed aggregates differ from the printed ones");
    return kOk;
}

int metrics_loss(const std::string& path, std::ostream& out) {
    std::istringstream in(read_file(path));
    static const std::regex epoch(
        R"(^epoch = (\d+) (validation )?loss = ([0-9.]+) cat loss = ([0-9.]+) cont_loss = ([0-9.]+)\s*$)");
    std::smatch m;
    std::size_t lines = 0;
    bool mismatch = false;
    for (std::string line; std::getline(in, line);) {
        if (!std::regex_match(line, m, epoch)) continue;
        ++lines;
        double total = std::stod(m[3].str());
        double combined = emotion::combined_loss(std::stod(m[4].str()), std::stod(m[5].str()));
        bool ok = std::abs(combined - total) <= 1e-3;
        mismatch |= !ok;
        out << "epoch " << m[1].str() << (m[2].matched ? " validation" : " train") << " " << fixed4(combined) << " log "
            << m[3].str() << (ok ? " ok" : " MISMATCH") << "\n";
    }
    if (lines == 0) throw domain("ParseError", "no epoch lines in " + path);
    if (mismatch) throw domain("Mismatch", "a recomputed loss differs from the log by more than 1e-3");
    return kOk;
}

// ---- kb --------------------------------------------------------------------

std::string resolve_entity(const kb::KnowledgeBase& kb, const std::string& text) {
    if (text.find(':') != std::string::npos && text.find(' ') == std::string::npos) return text;
    auto found = kb.find_by_name(text);
    if (found.empty()) throw domain("UnknownEntity", "no entity named '" + text + "'");
    return found.front();
}

json named(const kb::KnowledgeBase& kb, const std::string& iri) {
    json j{{"iri", iri}};
    if (auto n = kb.name_of(iri)) j["name"] = *n;
    return j;
}

// ---- long-running ------------------------------------------------------------

void wait_for_stop(std::stop_token st) {
    while (!st.stop_requested()) {
        robot::sleep_for(st, std::chrono::hours(1));
    }
}

std::pair<std::string, std::string> credentials(const std::string& spec, const char* what) {
    auto colon = spec.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size())
        throw usage(std::string(what) + " must be NAME:PASSWORD");
    return {spec.substr(0, colon), spec.substr(colon + 1)};
}

struct ServeOptions {
    std::string controller = "teacher:teacher";
    std::string robot_account = "wolly:wolly";
    std::string registry;
    std::string audit;
    int heartbeat_ms = 5000;
    std::size_t embedding_dim = 128;
};

int serve(const Config& cfg, const ServeOptions& so, const Hooks& hooks, std::ostream& out) {
    auto [bus_host, bus_port] = address(cfg.bus, "bus");
    auto [emo_host, emo_port] = address(cfg.emotion, "emotion");
    fs::path data(cfg.data_dir);
    auto registry_path = so.registry.empty() ? data / "registry.jsonl" : fs::path(so.registry);
    {
        std::ofstream probe(registry_path, std::ios::app);
        if (!probe) throw usage("registry file " + registry_path.string() + " is not writable");
    }
    auto [cname, cpass] = credentials(so.controller, "--controller");
    auto [rname, rpass] = credentials(so.robot_account, "--robot-account");

    bus::BusOptions bo;
    bo.heartbeat = std::chrono::milliseconds(so.heartbeat_ms);
    if (!so.audit.empty()) bo.audit_log = so.audit;
    bus::BusService bus(bo);
    bus.create_account(cname, cpass, "controller");
    auto teacher = bus.login(cname, cpass);
    bus.create_account(rname, rpass, "robot", teacher.auth_token);

    kb::KnowledgeBase knowledge;
    knowledge.load_file(data / "kb" / "movies.nt");
    auto rules = std::make_shared<dialogue::RuleSet>(dialogue::load_rules_file(data / "dialogue" / "rules.txt"));
    identity::RegistryOptions ro;
    ro.dimension = so.embedding_dim;
    identity::Registry registry(registry_path, ro);
    dialogue::ChatService chat(rules, &knowledge, &registry);

    auto bank = emotion::FixtureBank::load(data / "fixtures" / "emotion_fixtures.json");
    auto engine = std::make_shared<emotion::EmotionEngine>(
        emotion::EmotionEngine{bank, bank, emotion::load_thresholds(data / "thresholds.txt")});

    HttpHost bus_http;
    bus::mount_bus_routes(bus_http.server(), bus);
    dialogue::mount_chat_routes(bus_http.server(), chat);
    identity::mount_identity_routes(bus_http.server(), registry);
    HttpHost emotion_http;
    emotion::mount_emotion_routes(emotion_http.server(), engine);

    try {
        bus_port = bus_http.start(bus_host, bus_port);
        emo_port = emotion_http.start(emo_host, emo_port);
    } catch (const std::exception& e) {
        throw domain("BindFailed", e.what());
    }
    json ready{{"event", "ready"},
               {"bus", bus_host + ":" + std::to_string(bus_port)},
               {"emotion", emo_host + ":" + std::to_string(emo_port)}};
    out << ready.dump() << std::endl;
    spdlog::info("serving bus on {}:{} and emotion on {}:{}", bus_host, bus_port, emo_host, emo_port);
    if (hooks.on_ready) hooks.on_ready(ready);

    wait_for_stop(hooks.stop);
    bus.shutdown();
    bus_http.stop();
    emotion_http.stop();
    spdlog::info("serve stopped");
    return kOk;
}

struct RobotOptions {
    std::string name = "wolly";
    std::string password = "wolly";
    double duration = 1.0;
    int heartbeat_ms = 5000;
    std::vector<std::string> frames;
    int poll_ms = 2000;
};

int robot_cmd(const Config& cfg, const RobotOptions& ro, const Hooks& hooks, std::ostream& out) {
    auto [host, port] = address(cfg.bus, "bus");
    robot::ClientOptions co;
    co.bus_host = host;
    co.bus_port = port;
    co.name = ro.name;
    co.password = ro.password;
    co.kinematics = {cfg.step, cfg.turn, ro.duration};
    co.heartbeat = std::chrono::milliseconds(ro.heartbeat_ms);
    robot::RobotClient client(co);

    std::unique_ptr<robot::EmotionPoller> poller;
    if (!ro.frames.empty()) {
        auto [ehost, eport] = address(cfg.emotion, "emotion");
        std::shared_ptr<robot::FrameSource> frames;
        try {
            frames = robot::FixtureFrameSource::from_ppm_files(ro.frames);
        } catch (const std::exception& e) {
            throw domain("BadImage", e.what());
        }
        poller = std::make_unique<robot::EmotionPoller>(
            frames, robot::PollOptions{ehost, eport, std::chrono::milliseconds(ro.poll_ms), std::chrono::milliseconds(10000)});
        // forward each report to the dialogue side of the bus host
        auto forward = std::make_shared<httplib::Client>(host, port);
        poller->subscribe([forward](const emotion::EmotionReport& r) {
            json body{{"report", json::parse(emotion::render_response(r))}};
            auto res = forward->Post("/api/emotion", body.dump(), "application/json");
            if (!res || res->status != 200) spdlog::warn("could not forward an emotion report");
        });
        poller->start();
    }
    client.run(hooks.stop);
    if (poller) poller->stop();
    auto s = client.state();
    out << json{{"x", s.pose.x}, {"y", s.pose.y}, {"heading", s.pose.heading}, {"expression", s.expression.name()}}.dump()
        << "\n";
    return kOk;
}

int replay(const Config& cfg, const std::string& path, std::ostream& out) {
    auto text = read_file(path);
    std::vector<Instruction> program;
    try {
        program = parse_script(text);
    } catch (const ParseError& e) {
        throw domain("ParseError", e.what());
    }
    robot::KinematicConfig k{cfg.step, cfg.turn, 0.0};
    RobotState s;
    for (const auto& i : program) s = robot::apply(s, i, k);
    out << json{{"x", s.pose.x}, {"y", s.pose.y}, {"heading", s.pose.heading}, {"expression", s.expression.name()}}.dump()
        << "\n";
    return kOk;
}

int submit(const Config& cfg, const std::string& file, std::string format, bool wait, double timeout_s, std::ostream& out) {
    auto source = read_file(file);
    if (format == "auto") {
        auto ext = fs::path(file).extension().string();
        format = ext == ".script" || ext == ".txt" ? "script" : "blocks";
    }
    Api api(cfg.bus);
    api.login(cfg.user, cfg.password);
    auto accepted = api.call("POST", "/api/programs", json{{"format", format}, {"source", source}});
    if (!wait) {
        out << accepted.dump() << "\n";
        return kOk;
    }
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    while (true) {
        auto st = api.call("GET", "/api/status");
        if (st.at("phase") == "IDLE") {
            out << st.dump() << "\n";
            return kOk;
        }
        if (std::chrono::steady_clock::now() > deadline) throw domain("Timeout", "program still running after --timeout");
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks) {
    CLI::App app{"Wolly robot stack: services, simulated robot and offline tools", "wolly"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI or TOML file with option defaults");

    Config cfg;
    app.add_option("--bus", cfg.bus, "Bus host address")->envname("WOLLY_BUS")->capture_default_str();
    app.add_option("--emotion", cfg.emotion, "Emotion service address")->envname("WOLLY_EMOTION")->capture_default_str();
    app.add_option("--data-dir", cfg.data_dir, "Directory with rules, ontology, fixtures and thresholds")
        ->envname("WOLLY_DATA_DIR")
        ->capture_default_str();
    app.add_option("--step", cfg.step, "Metres per forward or backward step")
        ->envname("WOLLY_STEP")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--turn", cfg.turn, "Degrees per left or right turn")
        ->envname("WOLLY_TURN")
        ->check(CLI::Range(0.0, 180.0))
        ->capture_default_str();
    app.add_option("--log-level", cfg.log_level, "trace|debug|info|warn|error|critical|off")
        ->envname("WOLLY_LOG_LEVEL")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
        ->capture_default_str();
    app.add_option("--user", cfg.user, "Controller account name")->envname("WOLLY_USER")->capture_default_str();
    app.add_option("--password", cfg.password, "Controller password")->envname("WOLLY_PASSWORD");

    ServeOptions so;
    auto* serve_cmd = app.add_subcommand("serve", "Run the bus, chat, identity and emotion services");
    serve_cmd->add_option("--controller", so.controller, "Controller account NAME:PASSWORD")->capture_default_str();
    serve_cmd->add_option("--robot-account", so.robot_account, "Robot account NAME:PASSWORD")->capture_default_str();
    serve_cmd->add_option("--registry", so.registry, "Identity registry file (default <data-dir>/registry.jsonl)");
    serve_cmd->add_option("--audit", so.audit, "Append-only audit log of bus events");
    serve_cmd->add_option("--heartbeat-ms", so.heartbeat_ms, "Stream heartbeat interval")->check(CLI::Range(10, 600000));
    serve_cmd->add_option("--embedding-dim", so.embedding_dim, "Face embedding dimension")->check(CLI::Range(1, 4096));

    RobotOptions ro;
    auto* robot_sub = app.add_subcommand("robot", "Run the simulated robot against the bus");
    robot_sub->add_option("--name", ro.name, "Robot account name")->envname("WOLLY_ROBOT_NAME")->capture_default_str();
    robot_sub->add_option("--robot-password", ro.password, "Robot account password")->envname("WOLLY_ROBOT_PASSWORD");
    robot_sub->add_option("--duration", ro.duration, "Seconds spent per command")->check(CLI::NonNegativeNumber);
    robot_sub->add_option("--heartbeat-ms", ro.heartbeat_ms, "Heartbeat interval")->check(CLI::Range(10, 600000));
    robot_sub->add_option("--frames", ro.frames, "PPM frames to send to the emotion service, cycled");
    robot_sub->add_option("--poll-ms", ro.poll_ms, "Emotion polling period")->check(CLI::Range(10, 600000));

    std::string file, format = "auto";
    bool wait = false;
    double timeout = 30.0;
    auto* submit_cmd = app.add_subcommand("submit", "Submit a block tree or script file");
    submit_cmd->add_option("file", file, "Program file (.json blocks, .script lines)")->required();
    submit_cmd->add_option("--format", format, "auto|blocks|script")->check(CLI::IsMember({"auto", "blocks", "script"}));
    submit_cmd->add_flag("--wait", wait, "Block until the bus is IDLE again and print the status");
    submit_cmd->add_option("--timeout", timeout, "Seconds to wait with --wait")->check(CLI::PositiveNumber);

    std::string action;
    auto* teleop_cmd = app.add_subcommand("teleop", "Send one arrow-pad command");
    teleop_cmd->add_option("action", action, "forward|right|left|backward|stop")
        ->required()
        ->check(CLI::IsMember({"forward", "right", "left", "backward", "stop"}));

    auto* status_cmd = app.add_subcommand("status", "Print the bus status");

    std::string chat_text, chat_session = "cli";
    auto* chat_cmd = app.add_subcommand("chat", "Say one line to the dialogue engine");
    chat_cmd->add_option("text", chat_text, "Utterance")->required();
    chat_cmd->add_option("--session", chat_session, "Session id")->capture_default_str();

    std::vector<std::string> kb_files;
    std::string query;
    std::vector<std::string> entity_words;
    std::size_t k = 3;
    auto* kb_cmd = app.add_subcommand("kb", "Load or query triple files");
    kb_cmd->require_subcommand(1);
    auto* kb_load = kb_cmd->add_subcommand("load", "Parse triple files and count triples");
    kb_load->add_option("files", kb_files, "Triple files")->required();
    auto* kb_ask = kb_cmd->add_subcommand("ask", "Query the ontology");
    kb_ask->add_option("query", query, "starring|costars|related|describe")
        ->required()
        ->check(CLI::IsMember({"starring", "costars", "related", "describe"}));
    kb_ask->add_option("entity", entity_words, "Entity name or IRI")->required();
    kb_ask->add_option("--kb", kb_files, "Triple files (default <data-dir>/kb/movies.nt)");
    kb_ask->add_option("-k", k, "Result limit for related")->check(CLI::PositiveNumber);

    std::string path_a, path_b;
    auto* metrics_cmd = app.add_subcommand("metrics", "Offline metric arithmetic");
    metrics_cmd->require_subcommand(1);
    auto* m_ap = metrics_cmd->add_subcommand("ap", "Per-category AP and mean AP");
    m_ap->add_option("scores", path_a, "N x 26 score matrix")->required();
    m_ap->add_option("labels", path_b, "N x 26 0/1 label matrix")->required();
    auto* m_vad = metrics_cmd->add_subcommand("vad", "Per-dimension mean absolute error and mean VAD error");
    m_vad->add_option("preds", path_a, "N x 3 predictions")->required();
    m_vad->add_option("truth", path_b, "N x 3 ground truth")->required();
    auto* m_summary = metrics_cmd->add_subcommand("summary", "Recompute the aggregates of an evaluation log");
    m_summary->add_option("log", path_a, "Evaluation log")->required();
    auto* m_loss = metrics_cmd->add_subcommand("loss", "Recompute combined losses of a training log");
    m_loss->add_option("log", path_a, "Training log")->required();

    std::string trace;
    auto* replay_cmd = app.add_subcommand("replay", "Apply a script from the origin and print the final state");
    replay_cmd->add_option("trace", trace, "Script file")->required();

    auto error_line = [&err](const std::string& code, const std::string& reason) {
        err << json{{"error", code}, {"reason", reason}}.dump() << "\n";
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        error_line("Usage", e.what());
        return kUsageError;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(cfg.log_level));
        robot::KinematicConfig{cfg.step, cfg.turn, ro.duration}.validate();
    } catch (const std::invalid_argument& e) {
        error_line("Usage", e.what());
        return kUsageError;
    }

    try {
        if (serve_cmd->parsed()) return serve(cfg, so, hooks, out);
        if (robot_sub->parsed()) return robot_cmd(cfg, ro, hooks, out);
        if (submit_cmd->parsed()) return submit(cfg, file, format, wait, timeout, out);
        if (teleop_cmd->parsed()) {
            Api api(cfg.bus);
            api.login(cfg.user, cfg.password);
            out << api.call("POST", "/api/teleop", json{{"action", action}}).dump() << "\n";
            return kOk;
        }
        if (status_cmd->parsed()) {
            Api api(cfg.bus);
            api.login(cfg.user, cfg.password);
            out << api.call("GET", "/api/status").dump() << "\n";
            return kOk;
        }
        if (chat_cmd->parsed()) {
            Api api(cfg.bus);
            out << api.call("POST", "/api/chat", json{{"session", chat_session}, {"text", chat_text}}).at("text").get<std::string>()
                << "\n";
            return kOk;
        }
        if (kb_cmd->parsed()) {
            kb::KnowledgeBase knowledge;
            if (kb_files.empty()) kb_files.push_back((fs::path(cfg.data_dir) / "kb" / "movies.nt").string());
            for (const auto& f : kb_files) {
                try {
                    knowledge.load_triples(read_file(f));
                } catch (const kb::TripleParseError& e) {
                    throw domain("ParseError", f + ": " + e.what());
                }
            }
            if (kb_load->parsed()) {
                out << json{{"triples", knowledge.size()}}.dump() << "\n";
                return kOk;
            }
            std::string text;
            for (const auto& w : entity_words) text += (text.empty() ? "" : " ") + w;
            auto iri = resolve_entity(knowledge, text);
            json results = json::array();
            if (query == "starring") {
                for (auto& c : knowledge.characters_in(iri)) results.push_back(named(knowledge, c));
            } else if (query == "costars") {
                for (auto& c : knowledge.costars(iri)) results.push_back(named(knowledge, c));
            } else if (query == "related") {
                try {
                    for (auto& c : knowledge.related_topics(iri, k)) results.push_back(named(knowledge, c));
                } catch (const kb::UnknownEntity& e) {
                    throw domain("UnknownEntity", e.what());
                }
            } else {
                for (auto& t : knowledge.describe(iri)) results.push_back(kb::serialize(t));
            }
            out << json{{"entity", iri}, {"query", query}, {"results", results}}.dump() << "\n";
            return kOk;
        }
        if (m_ap->parsed()) return metrics_ap(path_a, path_b, out);
        if (m_vad->parsed()) return metrics_vad(path_a, path_b, out);
        if (m_summary->parsed()) return metrics_summary(path_a, out);
        if (m_loss->parsed()) return metrics_loss(path_a, out);
        if (replay_cmd->parsed()) return replay(cfg, trace, out);
        error_line("Usage", "no subcommand");
        return kUsageError;
    } catch (const Failure& f) {
        error_line(f.code, f.what());
        return f.exit_code;
    } catch (const emotion::EmotionError& e) {
        error_line("EmotionError", e.what());
        return kDomainError;
    } catch (const identity::IdentityError& e) {
        error_line("IdentityError", e.what());
        return kDomainError;
    } catch (const dialogue::LoadError& e) {
        error_line("LoadError", e.what());
        return kDomainError;
    } catch (const kb::TripleParseError& e) {
        error_line("ParseError", e.what());
        return kDomainError;
    } catch (const std::exception& e) {
        error_line("Error", e.what());
        return kDomainError;
    }
}

}  // namespace wolly::cli
