// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace fedwing {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kSilent = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log(LogLevel level, const std::string& module, const std::string& message);

inline void log_info(const std::string& module, const std::string& message) {
  log(LogLevel::kInfo, module, message);
}
inline void log_warning(const std::string& module, const std::string& message) {
  log(LogLevel::kWarning, module, message);
}

}  // namespace fedwing
