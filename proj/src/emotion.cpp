#include "wolly/emotion.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace wolly::emotion {

using nlohmann::ordered_json;

const std::array<std::string_view, kCategoryCount>& categories() {
    static constexpr std::array<std::string_view, kCategoryCount> kNames = {
        "Affection",   "Anger",         "Annoyance",  "Anticipation", "Aversion",    "Confidence", "Disapproval",
        "Disconnection", "Disquietment", "Doubt/Confusion", "Embarrassment", "Engagement", "Esteem", "Excitement",
        "Fatigue",     "Fear",          "Happiness",  "Pain",         "Peace",       "Pleasure",   "Sadness",
        "Sensitivity", "Suffering",     "Surprise",   "Sympathy",     "Yearning"};
    return kNames;
}

std::optional<std::size_t> category_index(std::string_view name) {
    const auto& c = categories();
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c[i] == name) return i;
    }
    return std::nullopt;
}

namespace {

[[noreturn]] void fail(EmotionError::Kind k, const std::string& what) { throw EmotionError(k, what); }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Thresholds uniform_thresholds(double value) {
    if (!(value >= 0.0 && value <= 1.0)) fail(EmotionError::Kind::BadThresholds, "threshold must lie in [0,1]");
    Thresholds t;
    t.fill(value);
    return t;
}

Thresholds parse_thresholds(std::string_view text) {
    Thresholds t{};
    std::array<bool, kCategoryCount> seen{};
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        auto where = " on line " + std::to_string(line_no);
        auto sp = line.find_last_of(" \t");
        if (sp == std::string_view::npos) fail(EmotionError::Kind::BadThresholds, "expected 'Category value'" + where);
        auto name = trim(line.substr(0, sp));
        auto value_text = line.substr(sp + 1);
        auto idx = category_index(name);
        if (!idx) fail(EmotionError::Kind::BadThresholds, "unknown category '" + std::string(name) + "'" + where);
        if (seen[*idx]) fail(EmotionError::Kind::BadThresholds, "duplicate category '" + std::string(name) + "'" + where);
        double v = 0;
        auto [p, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), v);
        if (ec != std::errc{} || p != value_text.data() + value_text.size() || !(v >= 0.0 && v <= 1.0)) {
            fail(EmotionError::Kind::BadThresholds, "threshold must be a number in [0,1]" + where);
        }
        seen[*idx] = true;
        t[*idx] = v;
    }
    for (std::size_t i = 0; i < kCategoryCount; ++i) {
        if (!seen[i]) fail(EmotionError::Kind::BadThresholds, "missing category '" + std::string(categories()[i]) + "'");
    }
    return t;
}

Thresholds load_thresholds(const std::filesystem::path& path) { return parse_thresholds(read_file(path)); }

double combined_loss(double cat_loss, double cont_loss, const LossWeights& w) {
    if (w.w_cat < 0 || w.w_cont < 0 || (w.w_cat == 0 && w.w_cont == 0)) {
        throw std::invalid_argument("loss weights must be >= 0 and not both zero");
    }
    return w.w_cat * cat_loss + w.w_cont * cont_loss;
}

std::string format_percentage(double score) {
    // Half-up on hundredths of a percent. The epsilon absorbs binary error in
    // score*10000 so that decimal ties like 0.15005 round up.
    double hundredths = std::floor(score * 10000.0 + 0.5 + 1e-7);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
    return buf;
}

Selection select_categories(std::span<const double> scores, const Thresholds& t) {
    if (scores.size() != kCategoryCount) {
        fail(EmotionError::Kind::DimensionMismatch, "expected 26 scores, got " + std::to_string(scores.size()));
    }
    Selection out;
    for (std::size_t i = 0; i < kCategoryCount; ++i) {
        if (scores[i] >= t[i]) out.emplace_back(std::string(categories()[i]), format_percentage(scores[i]));
    }
    return out;
}

double average_precision(std::span<const std::uint8_t> labels, std::span<const double> scores) {
    if (labels.size() != scores.size() || labels.empty()) {
        fail(EmotionError::Kind::DimensionMismatch, "labels and scores must have the same non-zero length");
    }
    auto ap = kernels::average_precision(labels, scores);
    if (!ap) fail(EmotionError::Kind::NoPositives, "no positive labels");
    return *ap;
}

double mean_ap(std::span<const double> aps) {
    if (aps.size() != kCategoryCount) {
        fail(EmotionError::Kind::DimensionMismatch, "expected 26 AP values, got " + std::to_string(aps.size()));
    }
    return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

Vad vad_error(std::span<const Vad> pred, std::span<const Vad> truth) {
    if (pred.size() != truth.size() || pred.empty()) {
        fail(EmotionError::Kind::DimensionMismatch, "predictions and truth must have the same non-zero length");
    }
    Vad sum{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t d = 0; d < 3; ++d) sum[d] += std::abs(pred[i][d] - truth[i][d]);
    }
    for (auto& s : sum) s /= static_cast<double>(pred.size());
    return sum;
}

double mean_vad_error(const Vad& e) { return (e[0] + e[1] + e[2]) / 3.0; }

std::string render_response(const EmotionReport& r) {
    ordered_json data = ordered_json::object();
    for (const auto& [idx, person] : r.persons) {
        ordered_json emotions = ordered_json::object();
        for (const auto& [name, pct] : person.emotions) emotions[name] = pct;
        data[std::to_string(idx)] = ordered_json{{"emotions", emotions}, {"vad", person.vad}};
    }
    return ordered_json{{"data", data}}.dump();
}

EmotionReport parse_response(std::string_view body) {
    ordered_json j;
    try {
        j = ordered_json::parse(body);
    } catch (const ordered_json::exception& e) {
        throw std::invalid_argument(std::string("malformed emotion response: ") + e.what());
    }
    if (!j.is_object() || !j.contains("data") || !j["data"].is_object()) {
        throw std::invalid_argument("emotion response lacks a 'data' object");
    }
    EmotionReport r;
    for (const auto& [key, value] : j["data"].items()) {
        std::size_t idx = 0;
        auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
        if (ec != std::errc{} || p != key.data() + key.size() || key.empty()) {
            throw std::invalid_argument("person key must be a non-negative integer: " + key);
        }
        PersonEmotion person;
        if (!value.contains("emotions") || !value["emotions"].is_object() || !value.contains("vad") ||
            !value["vad"].is_array() || value["vad"].size() != 3) {
            throw std::invalid_argument("person " + key + " needs 'emotions' and a 3-element 'vad'");
        }
        for (const auto& [name, pct] : value["emotions"].items()) {
            if (!category_index(name) || !pct.is_string()) {
                throw std::invalid_argument("bad emotion entry '" + name + "' for person " + key);
            }
            person.emotions.emplace_back(name, pct.get<std::string>());
        }
        for (std::size_t d = 0; d < 3; ++d) {
            if (!value["vad"][d].is_number()) throw std::invalid_argument("vad values must be numbers");
            person.vad[d] = value["vad"][d].get<double>();
        }
        if (!r.persons.emplace(idx, std::move(person)).second) {
            throw std::invalid_argument("duplicate person key " + key);
        }
    }
    return r;
}

// --- frames ---------------------------------------------------------------

namespace {

class PpmReader {
public:
    explicit PpmReader(std::span<const std::uint8_t> b) : b_(b) {}

    // Whitespace and comments before a header token. A "# fixture: <id>"
    // comment records the id.
    void skip_space() {
        while (pos_ < b_.size()) {
            auto c = b_[pos_];
            if (c == '#') {
                auto start = pos_ + 1;
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
                auto text = trim(std::string_view(reinterpret_cast<const char*>(b_.data()) + start, pos_ - start));
                constexpr std::string_view kTag = "fixture:";
                if (text.starts_with(kTag)) fixture = std::string(trim(text.substr(kTag.size())));
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    std::size_t number() {
        skip_space();
        std::size_t v = 0;
        std::size_t digits = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            if (v > 100000000) fail(EmotionError::Kind::BadImage, "PPM header value too large");
            v = v * 10 + (b_[pos_++] - '0');
            ++digits;
        }
        if (digits == 0) fail(EmotionError::Kind::BadImage, "PPM header expects a number");
        return v;
    }

    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
    std::optional<std::string> fixture;
};

}  // namespace

Frame decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail(EmotionError::Kind::BadImage, "not a P6 image");
    PpmReader r(bytes);
    r.pos_ = 2;
    auto w = r.number();
    auto h = r.number();
    auto maxval = r.number();
    if (w == 0 || h == 0) fail(EmotionError::Kind::BadImage, "empty image");
    if (maxval != 255) fail(EmotionError::Kind::BadImage, "only maxval 255 is supported");
    if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) fail(EmotionError::Kind::BadImage, "bad PPM header");
    ++r.pos_;
    auto need = w * h * 3;
    if (bytes.size() - r.pos_ != need) fail(EmotionError::Kind::BadImage, "pixel data length does not match header");
    Frame f;
    f.image.width = w;
    f.image.height = h;
    f.image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_), bytes.end());
    f.fixture_id = std::move(r.fixture);
    return f;
}

std::vector<std::uint8_t> encode_ppm(const kernels::RgbImage& image, const std::optional<std::string>& fixture_id) {
    std::string header = "P6\n";
    if (fixture_id) header += "# fixture: " + *fixture_id + "\n";
    header += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

// --- fixtures -------------------------------------------------------------

std::shared_ptr<FixtureBank> FixtureBank::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::shared_ptr<FixtureBank> FixtureBank::parse(std::string_view json_text) {
    auto j = nlohmann::json::parse(json_text);
    auto bank = std::make_shared<FixtureBank>();
    for (const auto& [id, people] : j.items()) {
        auto& list = bank->fixtures_[id];
        for (const auto& p : people) {
            Person person;
            auto box = p.at("box");
            if (box.size() != 4) throw std::invalid_argument("fixture box must be [x, y, w, h]");
            person.box = {box[0].get<std::size_t>(), box[1].get<std::size_t>(), box[2].get<std::size_t>(),
                          box[3].get<std::size_t>()};
            auto scores = p.value("scores", nlohmann::json::object());
            for (const auto& [name, score] : scores.items()) {
                auto idx = category_index(name);
                if (!idx) throw std::invalid_argument("fixture names unknown category " + name);
                person.raw.cat_scores[*idx] = score.get<double>();
            }
            auto vad = p.at("vad");
            if (vad.size() != 3) throw std::invalid_argument("fixture vad must have 3 values");
            for (std::size_t d = 0; d < 3; ++d) person.raw.vad[d] = vad[d].get<double>();
            list.push_back(person);
        }
    }
    return bank;
}

std::vector<kernels::Box> FixtureBank::detect(const Frame& frame) {
    if (!frame.fixture_id) return {};
    auto it = fixtures_.find(*frame.fixture_id);
    if (it == fixtures_.end()) return {};
    std::vector<kernels::Box> boxes;
    for (const auto& p : it->second) boxes.push_back(p.box);
    return boxes;
}

RawPrediction FixtureBank::predict(const PersonInput& input) {
    if (!input.frame.fixture_id) fail(EmotionError::Kind::PredictorFailure, "frame has no fixture id");
    auto it = fixtures_.find(*input.frame.fixture_id);
    if (it == fixtures_.end() || input.person_index >= it->second.size()) {
        fail(EmotionError::Kind::PredictorFailure, "no fixture prediction for this person");
    }
    return it->second[input.person_index].raw;
}

EmotionReport analyze(std::span<const std::uint8_t> frame_bytes, PersonDetector& detector, Predictor& predictor,
                      const Thresholds& thresholds) {
    auto frame = decode_ppm(frame_bytes);
    auto boxes = detector.detect(frame);
    EmotionReport report;
    if (boxes.empty()) return report;
    auto context = kernels::crop_resize_parallel(frame.image, {0, 0, frame.image.width, frame.image.height},
                                                 kContextSide, kContextSide);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        kernels::RgbImage body;
        try {
            body = kernels::crop_resize_parallel(frame.image, boxes[i], kBodySide, kBodySide);
        } catch (const std::invalid_argument& e) {
            fail(EmotionError::Kind::PredictorFailure, std::string("detector box outside the frame: ") + e.what());
        }
        RawPrediction raw;
        try {
            raw = predictor.predict({frame, i, context, body});
        } catch (const EmotionError&) {
            throw;
        } catch (const std::exception& e) {
            fail(EmotionError::Kind::PredictorFailure, e.what());
        }
        for (double s : raw.cat_scores) {
            if (!std::isfinite(s) || s < 0.0 || s > 1.0) fail(EmotionError::Kind::PredictorFailure, "score outside [0,1]");
        }
        for (double v : raw.vad) {
            if (!std::isfinite(v)) fail(EmotionError::Kind::PredictorFailure, "non-finite VAD value");
        }
        report.persons[i] = {select_categories(raw.cat_scores, thresholds), raw.vad};
    }
    return report;
}

}  // namespace wolly::emotion
