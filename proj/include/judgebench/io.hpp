#pragma once

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace judgebench::io {

/// Whole file as bytes. Throws DataError if unreadable.
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Calls fn(line_number, json) for each non-blank line. Parse failures throw
/// DataError("<file>:line N: ...") unless the path is empty.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

[[nodiscard]] std::string to_jsonl(const std::vector<nlohmann::json>& rows);

/// Required string field; throws DataError("line N: missing field <name>").
[[nodiscard]] std::string require_string(const nlohmann::json& obj, std::string_view field, std::size_t line);

/// Minimal RFC-4180 CSV.
[[nodiscard]] std::string csv_escape(std::string_view field);
[[nodiscard]] std::vector<std::vector<std::string>> parse_csv(std::string_view content);

} // namespace judgebench::io
