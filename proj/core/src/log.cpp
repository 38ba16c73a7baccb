#include "entdec/log.hpp"

#include <atomic>
#include <iostream>

namespace entdec {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::warn)};
}

void set_log_level(LogLevel level) noexcept { g_level = static_cast<int>(level); }

LogLevel log_level() noexcept { return static_cast<LogLevel>(g_level.load()); }

void log_warn(std::string_view message) {
  if (g_level >= static_cast<int>(LogLevel::warn)) {
    std::cerr << "warning: " << message << '\n';
  }
}

void log_info(std::string_view message) {
  if (g_level >= static_cast<int>(LogLevel::info)) {
    std::cerr << message << '\n';
  }
}

}  // namespace entdec
