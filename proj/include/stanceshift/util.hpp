#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "json.hpp"

namespace stanceshift {

using Json = nlohmann::json;
using Clock = std::chrono::system_clock;

std::string trim(std::string_view s);

/// ISO-8601 UTC with microsecond precision, e.g. "2024-05-01T12:00:00.000123Z".
std::string iso_timestamp(Clock::time_point tp);
inline std::string now_iso() { return iso_timestamp(Clock::now()); }

/// Shortest decimal that round-trips through the parser ("8", "-7.5", "2.49").
std::string format_score(double value);

/// Substitutes `{name}` placeholders. Unknown placeholders are left untouched.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// Reads and parses a JSON document; parse failures become ParseError with line/column.
Json read_json_file(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace stanceshift
