#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

namespace agentrank {

using json = nlohmann::json;

/// Read a whole file into a string. Throws DataError if unreadable.
std::string read_file(const std::filesystem::path& path);

/// Write a string to a file atomically enough for this project
/// (truncate + write). Throws DataError on failure.
void write_file(const std::filesystem::path& path, const std::string& body);

/**
 * Stream a JSONL file line by line.  The callback receives the 1-based line
 * number and the parsed object.  Blank lines are skipped; a line that fails
 * to parse raises ParseError naming the file and line.
 */
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// FNV-1a over a canonical (sorted-key, compact) dump; used as the config
/// fingerprint recorded in manifests and reports.
std::uint64_t json_fingerprint(const json& j);

/// Lower-case hex rendering of a 64-bit fingerprint.
std::string hex64(std::uint64_t v);

/// Deterministic shortest round-trip formatting for doubles in CSV logs.
std::string format_double(double v);

}  // namespace agentrank
