#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wolly/kernels.hpp"

namespace wolly::emotion {

inline constexpr std::size_t kCategoryCount = 26;

/// Affection ... Yearning, alphabetical. This order is the index order of
/// every 26-vector in this module.
const std::array<std::string_view, kCategoryCount>& categories();
std::optional<std::size_t> category_index(std::string_view name);

struct EmotionError : std::runtime_error {
    enum class Kind { DimensionMismatch, NoPositives, BadImage, PredictorFailure, BadThresholds };
    EmotionError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

using Vad = std::array<double, 3>;  // valence, arousal, dominance on the 0-10 wire scale

struct RawPrediction {
    std::array<double, kCategoryCount> cat_scores{};
    Vad vad{};
};

using Thresholds = std::array<double, kCategoryCount>;

Thresholds uniform_thresholds(double value);
/// 26 lines "CategoryName value", any order, each category exactly once.
/// Doubt/Confusion keeps its slash. Throws EmotionError(BadThresholds).
Thresholds parse_thresholds(std::string_view text);
Thresholds load_thresholds(const std::filesystem::path& path);

struct LossWeights {
    double w_cat = 0.5;
    double w_cont = 0.5;
};

/// w_cat * cat_loss + w_cont * cont_loss. Weights must be >= 0 and not both 0.
double combined_loss(double cat_loss, double cont_loss, const LossWeights& w = {});

/// score * 100 as a string with exactly two decimals, rounding half up.
std::string format_percentage(double score);

/// Ordered (category, percentage) pairs.
using Selection = std::vector<std::pair<std::string, std::string>>;

/// Categories with scores[i] >= t[i], in category order.
Selection select_categories(std::span<const double> scores, const Thresholds& t);

/// Throws EmotionError(NoPositives) or (DimensionMismatch).
double average_precision(std::span<const std::uint8_t> labels, std::span<const double> scores);
double mean_ap(std::span<const double> aps);

Vad vad_error(std::span<const Vad> pred, std::span<const Vad> truth);
double mean_vad_error(const Vad& per_dim);

struct PersonEmotion {
    Selection emotions;
    Vad vad{};

    friend bool operator==(const PersonEmotion&, const PersonEmotion&) = default;
};

struct EmotionReport {
    std::map<std::size_t, PersonEmotion> persons;

    friend bool operator==(const EmotionReport&, const EmotionReport&) = default;
};

/// Canonical compact JSON: {"data":{"0":{"emotions":{...},"vad":[v,a,d]},...}}
/// with persons in ascending numeric order and shortest round-trip doubles.
std::string render_response(const EmotionReport& r);
/// Inverse of render_response; throws std::invalid_argument on malformed input.
EmotionReport parse_response(std::string_view body);

/// Decoded frame plus the fixture tag carried in a "# fixture: <id>" header
/// comment, when present.
struct Frame {
    kernels::RgbImage image;
    std::optional<std::string> fixture_id;
};

/// Binary PPM (P6, maxval 255). Throws EmotionError(BadImage).
Frame decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const kernels::RgbImage& image, const std::optional<std::string>& fixture_id = {});

inline constexpr std::size_t kContextSide = 224;
inline constexpr std::size_t kBodySide = 128;

class PersonDetector {
public:
    virtual ~PersonDetector() = default;
    virtual std::vector<kernels::Box> detect(const Frame& frame) = 0;
};

/// Per-person input: the whole frame as a 224x224x3 context view and the
/// person's 128x128x3 body crop.
struct PersonInput {
    const Frame& frame;
    std::size_t person_index;
    const kernels::RgbImage& context;
    const kernels::RgbImage& body;
};

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual RawPrediction predict(const PersonInput& input) = 0;
};

/// Deterministic fixtures keyed by the frame's fixture id. One JSON file:
///   {"<fixture id>": [{"box": [x, y, w, h], "scores": {"Engagement": 0.531, ...},
///                      "vad": [v, a, d]}, ...], ...}
/// Categories absent from "scores" score 0. Unknown or missing ids detect
/// nobody.
class FixtureBank : public PersonDetector, public Predictor {
public:
    static std::shared_ptr<FixtureBank> load(const std::filesystem::path& path);
    static std::shared_ptr<FixtureBank> parse(std::string_view json_text);

    std::vector<kernels::Box> detect(const Frame& frame) override;
    RawPrediction predict(const PersonInput& input) override;

private:
    struct Person {
        kernels::Box box;
        RawPrediction raw;
    };
    std::map<std::string, std::vector<Person>, std::less<>> fixtures_;
};

/// One entry per detected person in detection order.
EmotionReport analyze(std::span<const std::uint8_t> frame_bytes, PersonDetector& detector, Predictor& predictor,
                      const Thresholds& thresholds);

}  // namespace wolly::emotion
