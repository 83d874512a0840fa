// SPDX-License-Identifier: Apache-2.0
#include "fedwing/error.hpp"

#include <utility>

namespace fedwing {

Error::Error(std::string module, const std::string& message)
    : std::runtime_error("[" + module + "] " + message), module_(std::move(module)) {}

void fail(const std::string& module, const std::string& message) {
  throw Error(module, message);
}

}  // namespace fedwing

// Logging lives next to the error type; both are tiny.
#include <atomic>
#include <iostream>
#include <mutex>

#include "fedwing/logging.hpp"

namespace fedwing {
namespace {

std::atomic<LogLevel> g_level{LogLevel::kWarning};
std::mutex g_log_mutex;

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarning: return "warning";
    case LogLevel::kError: return "error";
    default: return "";
  }
}

}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log(LogLevel level, const std::string& module, const std::string& message) {
  if (level < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << level_name(level) << " [" << module << "] " << message << '\n';
}

}  // namespace fedwing
