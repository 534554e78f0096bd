#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace del {

// Whole-file read; throws on failure.
std::string read_text_file(const std::string& path);

// Writes to a sibling temp file and renames into place, so readers never
// observe a half-written file.
void write_text_atomic(const std::string& path, const std::string& content);

// Runs `producer` with a temp path next to `path`, then renames the temp
// into place. The producer must create the temp file.
void write_file_atomic_via(const std::string& path,
                           const std::function<void(const std::string&)>& producer);

uint64_t fnv1a64(std::string_view s);

// Run metadata: config hash, the seeds in play, tool version and a
// creation timestamp (the only non-reproducible field).
std::string manifest_json(const std::string& config_text,
                          const std::vector<uint64_t>& seeds);

}  // namespace del
