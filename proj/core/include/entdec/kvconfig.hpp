#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace entdec {

using KeyValues = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment, blank lines are
/// skipped. Later keys override earlier ones. DataError names the line on
/// malformed input.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);

/// Serializes as "key=value" lines, optionally each prefixed (e.g. "# ").
std::string format_key_values(const KeyValues& kv, const std::string& line_prefix = "");

}  // namespace entdec
