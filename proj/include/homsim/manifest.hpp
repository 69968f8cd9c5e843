#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "homsim/util.hpp"

namespace homsim {

inline constexpr const char* kToolVersion = "1.0.0";

/// Record of one completed command. Written after every other output, so
/// its presence marks the run as complete. The duration line is the only
/// part that varies between identical runs.
struct RunManifest {
  std::string command;
  std::string config_path; ///< empty when the command took no config
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  double duration_ms = 0.0;

  std::string text() const {
    std::string out;
    out += "tool_version=" + std::string(kToolVersion) + "\n";
    out += "command=" + command + "\n";
    out += "config=" + config_path + "\n";
    out += "seed=" + std::to_string(seed) + "\n";
    for (const std::string& o : outputs) out += "output=" + o + "\n";
    out += "duration_ms=" + fmt_fixed(duration_ms, 3) + "\n";
    return out;
  }

  void write(const std::filesystem::path& dir) const {
    atomic_write_file(dir / "manifest.txt", text());
  }
};

}  // namespace homsim
