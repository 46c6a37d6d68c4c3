#pragma once

#include "httplib.h"
#include "json.hpp"
#include "wolly/block_compiler.hpp"
#include "wolly/bus_service.hpp"

namespace wolly::bus {

/// Builds a Program from a POST /api/programs body:
///   {"format": "blocks", "source": <block-tree object or its JSON text>}
///   {"format": "script", "source": "<canonical script>"}
/// Throws BusFault (422) carrying ParseError / CompileError details.
Program program_from_request(const nlohmann::json& body, const blocks::CompileLimits& limits = {},
                             const ExpressionSet& expressions = ExpressionSet::defaults());

nlohmann::json to_json(const DeliveryEvent& e);
nlohmann::json to_json(const StatusView& s);
RobotReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RobotReport& r);

/// Mounts the /api/... controller and robot endpoints.
void mount_bus_routes(httplib::Server& server, BusService& bus, const blocks::CompileLimits& limits = {});

}  // namespace wolly::bus
