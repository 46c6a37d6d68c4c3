#pragma once

#include <memory>

#include "httplib.h"
#include "wolly/emotion.hpp"

namespace wolly::emotion {

/// Immutable after construction; safe for concurrent analyze calls as long as
/// the detector and predictor are.
struct EmotionEngine {
    std::shared_ptr<PersonDetector> detector;
    std::shared_ptr<Predictor> predictor;
    Thresholds thresholds{};
};

/// POST /analyze (body: PPM bytes) -> canonical report JSON.
/// GET /health -> {"status":"ok"}.
/// BadImage -> 400, PredictorFailure -> 500, both as {code, reason}.
void mount_emotion_routes(httplib::Server& server, std::shared_ptr<const EmotionEngine> engine);

}  // namespace wolly::emotion
