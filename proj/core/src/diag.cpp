#include "cellscreen/diag.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace cellscreen {

log_level current_log_level() {
  static const log_level level = [] {
    const char* env = std::getenv("CELLSCREEN_LOG_LEVEL");
    if (env == nullptr) return log_level::info;
    if (std::strcmp(env, "quiet") == 0) return log_level::quiet;
    if (std::strcmp(env, "debug") == 0) return log_level::debug;
    return log_level::info;
  }();
  return level;
}

void diag_info(const std::string& message) {
  if (current_log_level() >= log_level::info) {
    std::fprintf(stderr, "cellscreen: %s\n", message.c_str());
  }
}

void diag_debug(const std::string& message) {
  if (current_log_level() >= log_level::debug) {
    std::fprintf(stderr, "cellscreen[debug]: %s\n", message.c_str());
  }
}

}  // namespace cellscreen
