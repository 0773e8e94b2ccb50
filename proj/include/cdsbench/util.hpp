#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdsbench {

// FNV-1a, 64 bit. Used for prompt digests, template hashes and per-group
// bootstrap seeds; results must be stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 1469598103934665603ULL);

// Murmur-style finalizer. FNV's high bits disperse poorly on short strings;
// run this before taking bucket indices from the top bits.
std::uint64_t fmix64(std::uint64_t h);

std::string to_hex(std::uint64_t value);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);

// Draws an index in [0, n) from a raw 64-bit word without touching
// std::uniform_int_distribution, whose output is implementation defined.
std::size_t uniform_index(std::uint64_t word, std::size_t n);

// Fixed-format float for CSV/JSON output; stable text across reruns.
std::string format_double(double v);

// Minimal CSV: double-quote escaping, no embedded newlines.
std::vector<std::string> parse_csv_line(const std::string& line);
std::string csv_escape(std::string_view field);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace cdsbench
