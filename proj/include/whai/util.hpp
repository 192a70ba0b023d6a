#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace whai {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Current wall-clock time as ISO-8601 UTC with millisecond precision.
/// Display only; nothing behavioral may depend on it.
std::string iso8601_now();

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);
/// Writes via a temporary sibling and rename, so readers never observe a partial file.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view s);
std::string trim_right(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool contains_icase(std::string_view haystack, std::string_view needle);

/// Finds `phrase` in `text` case-insensitively with word boundaries on both ends.
/// Returns npos when absent.
std::size_t find_word_icase(std::string_view text, std::string_view phrase);

/// Rough token estimate (four characters per token, rounded up).
std::int64_t estimate_tokens(std::string_view text);

/// Replaces `{{name}}` placeholders; unknown names are left untouched.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// Fixed-point decimal rendering, e.g. format_fixed(0.7, 6) == "0.700000".
std::string format_fixed(double value, int precision);

/// "pediatrician" -> "Pediatrician".
std::string display_name(std::string_view role);

}  // namespace whai
