#pragma once

#include <cstdio>
#include <string>
#include <utility>

namespace harivo::log {

enum class Level { debug = 0, info = 1, warn = 2 };

// Threshold read once from HARIVO_LOG (debug|info|warn); defaults to info.
Level threshold();
void write(Level level, const std::string& msg);

inline void debug(const std::string& msg) { write(Level::debug, msg); }
inline void info(const std::string& msg) { write(Level::info, msg); }
inline void warn(const std::string& msg) { write(Level::warn, msg); }

}  // namespace harivo::log
