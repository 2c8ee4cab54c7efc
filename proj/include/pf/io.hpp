#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pf {

// Shortest round-trip decimal form of a double (via std::to_chars), so text
// artifacts (CSV, JSON) re-parse bit-exactly.
std::string format_double(double v);
double parse_double(const std::string& s);

// Little-endian raw float64 blobs.
void write_f64_blob(const std::filesystem::path& path, const std::vector<double>& data);
std::vector<double> read_f64_blob(const std::filesystem::path& path);

// Whole-file text helpers; writes go through a temp file + rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// FNV-1a over file bytes / strings, hex-encoded. Used for run manifests.
std::string fnv1a_hex(const std::string& bytes);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace pf
