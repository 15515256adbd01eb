#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ebmh {

std::string read_file(const std::filesystem::path& path);

/// Parse a JSON file; errors name the path and the parser's byte offset.
nlohmann::json read_json(const std::filesystem::path& path);

/// Write via a temporary sibling and rename, so readers never observe a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::json& j);

/// Resolve `p` against `base_dir` unless it is already absolute.
std::filesystem::path resolve_path(const std::filesystem::path& base_dir,
                                   const std::filesystem::path& p);

}  // namespace ebmh
