#include "harivo/util/log.hpp"

#include <cstdlib>
#include <string_view>

namespace harivo::log {

Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("HARIVO_LOG");
        if (env == nullptr) return Level::info;
        std::string_view v(env);
        if (v == "debug") return Level::debug;
        if (v == "warn") return Level::warn;
        return Level::info;
    }();
    return level;
}

void write(Level level, const std::string& msg) {
    if (static_cast<int>(level) < static_cast<int>(threshold())) return;
    static constexpr const char* tags[] = {"debug", "info", "warn"};
    std::fprintf(stderr, "[%s] %s\n", tags[static_cast<int>(level)], msg.c_str());
}

}  // namespace harivo::log
