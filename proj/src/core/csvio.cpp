#include "csvio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nvlock {

struct CsvWriter::Impl {
  std::ofstream out;
  std::size_t columns = 0;
};

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("cannot open " + path.string());
  }
  impl_->columns = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    impl_->out << header[i] << (i + 1 < header.size() ? "," : "\n");
  }
}

CsvWriter::~CsvWriter() {
  close();
  delete impl_;
}

void CsvWriter::close() {
  if (impl_->out.is_open()) impl_->out.close();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != impl_->columns) throw std::invalid_argument("column count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    impl_->out << format_double(values[i]) << (i + 1 < values.size() ? "," : "\n");
  }
}

void CsvWriter::row_mixed(const std::vector<std::string>& values) {
  if (values.size() != impl_->columns) throw std::invalid_argument("column count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    impl_->out << values[i] << (i + 1 < values.size() ? "," : "\n");
  }
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_manifest(const std::filesystem::path& out_dir, const Manifest& m) {
  std::ofstream out(out_dir / "manifest.txt");
  if (!out) throw std::runtime_error("cannot write manifest");
  out << "scenario: " << m.scenario << "\n";
  out << "version: " << m.version << "\n";
  out << "seed: " << m.seed << "\n";
  out << "wall_clock: " << m.wall_clock << "\n";
  out << "config: " << m.config_snapshot << "\n";
  for (const auto& [name, digest] : m.artifacts) {
    out << "artifact: " << digest << " " << name << "\n";
  }
}

std::string verify_manifest(const std::filesystem::path& out_dir) {
  std::ifstream in(out_dir / "manifest.txt");
  if (!in) return "manifest.txt missing in " + out_dir.string();
  std::string line;
  int artifacts = 0;
  while (std::getline(in, line)) {
    if (line.rfind("artifact: ", 0) != 0) continue;
    std::istringstream ss(line.substr(10));
    std::string digest, name;
    ss >> digest >> name;
    const auto path = out_dir / name;
    if (!std::filesystem::exists(path)) return "missing artifact: " + name;
    const std::string actual = file_digest(path);
    if (actual != digest) return "digest mismatch for " + name + ": " + actual + " != " + digest;
    ++artifacts;
  }
  if (artifacts == 0) return "manifest lists no artifacts";
  return "";
}

}  // namespace nvlock
