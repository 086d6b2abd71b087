#pragma once

// Provenance header shared by every CSV the tools write. All lines start with
// '#'. The single "# run" line carries wall-clock time and thread count and is
// the only line allowed to differ between reruns with the same seed.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <sstream>
#include <string>

namespace brwlab {

inline constexpr const char* kVersion = "0.1.0";

struct Provenance {
  std::string command;
  std::string config;  // key = value lines
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_provenance(std::ostream& os, const Provenance& p) {
  os << "# brwlab " << kVersion << ' ' << p.command << '\n';
  os << "# seed " << p.seed << '\n';
  std::istringstream cfg(p.config);
  for (std::string line; std::getline(cfg, line);)
    if (!line.empty()) os << "# config " << line << '\n';
  os << "# run " << utc_timestamp() << " threads=" << p.threads << '\n';
}

/// Drops the "# run" line, leaving the part that must be reproducible.
inline std::string strip_run_line(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("# run ", 0) == 0) continue;
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace brwlab
