#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace geoforge {

std::string read_text_file(const std::filesystem::path& path);

// Writes via a temp file in the same directory, fsyncs, then renames into
// place. A crash never leaves a partially written file at `path`.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

std::int64_t now_ms();
std::string format_iso8601(std::int64_t epoch_ms);

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);
bool starts_with(std::string_view s, std::string_view prefix);

std::string html_escape(std::string_view s);

// Replaces characters outside [A-Za-z0-9._-] so the value is usable as a
// single path component. Long values are truncated.
std::string sanitize_path_component(std::string_view s);

void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

} // namespace geoforge
