#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nvlock {

/// CSV writer with the project dialect: comma separated, header row,
/// '.' decimal, floats at 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& values);
  void close();

 private:
  struct Impl;
  Impl* impl_;
};

std::string format_double(double v);

/// FNV-1a 64-bit digest of a file's bytes, as a 16-hex-digit string.
std::string file_digest(const std::filesystem::path& path);

struct Manifest {
  std::string scenario;
  std::string version;
  std::uint64_t seed = 0;
  std::string wall_clock;
  std::string config_snapshot;  // single-line JSON
  std::vector<std::pair<std::string, std::string>> artifacts;  // (filename, digest)
};

void write_manifest(const std::filesystem::path& out_dir, const Manifest& m);

/// Recompute digests of every artifact listed in out_dir/manifest.txt.
/// Returns an empty string on success, or a description of the mismatch.
std::string verify_manifest(const std::filesystem::path& out_dir);

}  // namespace nvlock
