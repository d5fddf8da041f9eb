#pragma once

#include <string>

namespace cellscreen {

// Diagnostics verbosity, controlled by the CELLSCREEN_LOG_LEVEL environment
// variable: "quiet", "info" (default) or "debug".
enum class log_level { quiet = 0, info = 1, debug = 2 };

log_level current_log_level();

void diag_info(const std::string& message);
void diag_debug(const std::string& message);

}  // namespace cellscreen
