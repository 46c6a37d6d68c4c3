#include "wolly/emotion_server.hpp"

#include "wolly/http_host.hpp"

namespace wolly::emotion {

void mount_emotion_routes(httplib::Server& server, std::shared_ptr<const EmotionEngine> engine) {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        reply_json(res, 200, {{"status", "ok"}});
    });
    server.Post("/analyze", [engine](const httplib::Request& req, httplib::Response& res) {
        try {
            std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(req.body.data()),
                                                req.body.size());
            auto report = analyze(bytes, *engine->detector, *engine->predictor, engine->thresholds);
            res.status = 200;
            res.set_content(render_response(report), "application/json");
        } catch (const EmotionError& e) {
            bool bad_input = e.kind == EmotionError::Kind::BadImage || e.kind == EmotionError::Kind::DimensionMismatch;
            reply_error(res, bad_input ? 400 : 500, bad_input ? "BadImage" : "PredictorFailure", e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, "PredictorFailure", e.what());
        }
    });
}

}  // namespace wolly::emotion
