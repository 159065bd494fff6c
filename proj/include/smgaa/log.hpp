#pragma once

#include <string>

namespace smgaa::log {

enum class Level { kError, kInfo, kDebug };

// Level from SMGAA_LOG={error,info,debug}; defaults to info. An unknown
// value raises ConfigError. The logger applies this level when first used.
Level level_from_env();
void set_level(Level l);

void error(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace smgaa::log
