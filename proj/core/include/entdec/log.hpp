#pragma once

#include <string_view>

namespace entdec {

enum class LogLevel { quiet = 0, warn = 1, info = 2 };

void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;

void log_warn(std::string_view message);
void log_info(std::string_view message);

}  // namespace entdec
