#pragma once

// File access. The parsing headers only see byte buffers.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "core.hpp"
#include "wfdb.hpp"

namespace ecgenkf::io {

/// Filesystem failure; the CLI maps it to exit code 2.
struct IoError : Error {
  using Error::Error;
};

inline constexpr const char* kDataDirEnv = "ECG_DATA_DIR";

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

/// Dataset root from ECG_DATA_DIR, empty when unset.
inline std::filesystem::path data_dir() {
  const char* v = std::getenv(kDataDirEnv);
  return v ? std::filesystem::path(v) : std::filesystem::path();
}

/// Resolves a record reference: an existing path stem (dir/118) is used as
/// is, otherwise the name is looked up under ECG_DATA_DIR.
inline std::filesystem::path resolve_record(const std::string& ref) {
  std::filesystem::path p(ref);
  if (std::filesystem::exists(p.string() + ".hea")) return p;
  const auto root = data_dir();
  if (!root.empty() && std::filesystem::exists(root / (ref + ".hea"))) return root / ref;
  throw IoError("record \"" + ref + "\" not found (no " + ref + ".hea here or under $" + kDataDirEnv + ")");
}

/// Loads header, signal file and (if present) the .atr annotations.
inline wfdb::AnnotatedRecord load_record(const std::filesystem::path& stem) {
  const auto header_text = read_text(stem.string() + ".hea");
  const auto header = wfdb::read_header(header_text);
  const auto dat = read_bytes(stem.parent_path() / header.signals.front().file_name);
  std::vector<std::uint8_t> atr;
  if (std::filesystem::exists(stem.string() + ".atr")) atr = read_bytes(stem.string() + ".atr");
  return wfdb::decode_record(header_text, dat, atr);
}

}  // namespace ecgenkf::io
