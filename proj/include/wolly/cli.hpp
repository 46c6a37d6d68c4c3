#pragma once

#include <functional>
#include <ostream>
#include <stop_token>
#include <string>
#include <vector>

#include "json.hpp"

namespace wolly::cli {

inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;

/// Lets an embedding process stop the long-running subcommands (serve,
/// robot) and learn where serve is listening.
struct Hooks {
    std::stop_token stop;
    /// serve: {"event":"ready","bus":"host:port","emotion":"host:port"}
    std::function<void(const nlohmann::json&)> on_ready;
};

/// Runs one subcommand. `args` excludes the program name. Errors are one JSON
/// line {"error": code, "reason": text} on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks = {});

}  // namespace wolly::cli
