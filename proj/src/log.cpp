#include "smgaa/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

#include "smgaa/error.hpp"

namespace smgaa::log {

namespace {

spdlog::level::level_enum to_spdlog(Level l) {
  switch (l) {
    case Level::kError: return spdlog::level::err;
    case Level::kDebug: return spdlog::level::debug;
    default: return spdlog::level::info;
  }
}

spdlog::logger& logger() {
  static auto instance = [] {
    auto l = spdlog::stderr_logger_mt("smgaa");
    l->set_pattern("[%H:%M:%S.%e] %l %v");
    // A bad SMGAA_LOG is reported by callers of level_from_env, not here.
    Level lvl = Level::kInfo;
    try {
      lvl = level_from_env();
    } catch (const ConfigError&) {
    }
    l->set_level(to_spdlog(lvl));
    return l;
  }();
  return *instance;
}

}  // namespace

Level level_from_env() {
  const char* v = std::getenv("SMGAA_LOG");
  if (!v || !*v) return Level::kInfo;
  const std::string s(v);
  if (s == "error") return Level::kError;
  if (s == "info") return Level::kInfo;
  if (s == "debug") return Level::kDebug;
  throw ConfigError("log", "SMGAA_LOG must be error, info or debug, got '" + s + "'");
}

void set_level(Level l) { logger().set_level(to_spdlog(l)); }

void error(const std::string& msg) { logger().error(msg); }
void info(const std::string& msg) { logger().info(msg); }
void debug(const std::string& msg) { logger().debug(msg); }

}  // namespace smgaa::log
