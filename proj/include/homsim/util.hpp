#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

namespace homsim {

/// Bad user input: unreadable flags, malformed config, out-of-range values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed data file (tag stream, CSV) or unwritable output.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Computation that ran but produced no usable result.
struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shortest round-trippable-ish decimal, used for every numeric text field.
inline std::string fmt_g10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Write-then-rename so readers never observe a half-written file.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw FormatError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError("read failed: " + path.string());
  return data;
}

}  // namespace homsim
