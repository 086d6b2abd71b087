#pragma once

// Experiment configuration: flat key = value text with optional [section]
// headers. Top-level keys and [common] apply to every subcommand, a section
// named after a subcommand applies to it alone, and [law] holds a custom
// offspring law block. Flags override the file. Unknown sections and keys are
// errors that name the offending key.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "brwlab/brw.hpp"
#include "brwlab/offspring.hpp"
#include "brwlab/parallel.hpp"

namespace brwlab {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error("config error at '" + key + "': " + what), key_(std::move(key)) {}
  [[nodiscard]] const std::string& key() const { return key_; }

 private:
  std::string key_;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> v{"calibrate", "simulate", "spine",      "renewal",  "green",
                                          "kozlov",    "seneta-heyde", "tauberian", "selftest"};
  return v;
}

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> k{"law",   "x",         "n",       "n-grid",    "k0",        "replicates",
                                       "seed",  "threads",   "eps",     "lambda-grid", "T-grid",  "x-grid",
                                       "out",   "plot",      "exact",   "budget",    "function",  "rho",
                                       "bootstrap", "x-max", "max-steps", "cap"};
  return k;
}

/// Parsed file: per-section key/value pairs, "" for top level.
struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::string law_block;  // [law] lines, verbatim
};

inline RawConfig parse_config(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string section;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      const auto& subs = subcommands();
      if (section != "common" && section != "law" && std::find(subs.begin(), subs.end(), section) == subs.end())
        throw ConfigError("[" + section + "]", "unknown section");
      if (section == "common") section.clear();
      continue;
    }
    if (section == "law") {
      raw.law_block += line + "\n";
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("law.", 0) == 0) {  // flat form of a [law] line
      raw.law_block += key.substr(4) + " = " + value + "\n";
      continue;
    }
    if (!config_keys().count(key)) throw ConfigError(key, "unknown key");
    auto& sec = raw.sections[section];
    if (sec.count(key)) throw ConfigError(key, "given twice");
    sec[key] = value;
  }
  return raw;
}

/// The "# config" lines of an output file's provenance header, as config text.
inline std::string config_from_provenance(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  const std::string tag = "# config ";
  for (std::string line; std::getline(in, line);)
    if (line.rfind(tag, 0) == 0) out += line.substr(tag.size()) + "\n";
  return out;
}

namespace config_detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key, "not a number: '" + v + "'");
  }
}

inline std::uint64_t to_natural(const std::string& key, const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw ConfigError(key, "not a natural number: '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key, "out of range: '" + v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

}  // namespace config_detail

struct ExperimentConfig {
  std::string command;
  std::string law_name = "two-point";
  std::string law_block;
  double x = 0.0;
  std::size_t n = 10;
  std::vector<std::size_t> n_grid;
  std::size_t k0 = 0;
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::vector<double> eps{0.5};
  std::vector<double> lambdas{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> T_grid{1.0, 10.0, 100.0, 1000.0};
  std::vector<double> x_grid;
  std::string out, plot;
  bool exact = false;
  std::string budget = "small";
  std::string function = "exp";
  std::string rho = "y";
  std::size_t bootstrap = 400;
  double x_max = 10.0;
  std::size_t max_steps = 100000;
  std::size_t cap = kDefaultPopulationCap;

  std::map<std::string, std::string> values;  // resolved key -> value

  [[nodiscard]] OffspringLaw law() const {
    if (!law_block.empty()) {
      try {
        return law_from_config(law_block);
      } catch (const std::exception& e) {
        throw ConfigError("law", e.what());
      }
    }
    try {
      return law_by_name(law_name);
    } catch (const std::exception& e) {
      throw ConfigError("law", e.what());
    }
  }

  /// Resolved parameters as "key = value" lines, for provenance. Output
  /// destinations and the thread count are left out: they do not change results.
  [[nodiscard]] std::string resolved_text() const {
    std::string s;
    for (const auto& [k, v] : values) {
      if (k == "out" || k == "plot" || k == "threads") continue;
      if (k == "law" && !law_block.empty()) continue;
      s += k + " = " + v + "\n";
    }
    if (!law_block.empty()) {
      std::istringstream in(law_block);
      for (std::string line; std::getline(in, line);)
        if (!line.empty() && line != "[law]") s += "law." + line + "\n";
    }
    return s;
  }
};

/// Per-subcommand defaults, as text values.
inline std::map<std::string, std::string> default_values(const std::string& command) {
  std::map<std::string, std::string> d{{"law", "two-point"}, {"x", "0"},         {"seed", "1"},
                                       {"replicates", "1000"}, {"threads", std::to_string(default_threads())}};
  if (command == "simulate" || command == "seneta-heyde") d["cap"] = std::to_string(kDefaultPopulationCap);
  if (command == "simulate") {
    d["n"] = "10";
    d["k0"] = "0";
  } else if (command == "spine") {
    d["n"] = "100";
  } else if (command == "renewal") {
    d["x-max"] = "10";
    d["max-steps"] = "100000";
    d["replicates"] = "4000";
  } else if (command == "green") {
    d["x-grid"] = "0";
    d["function"] = "exp";
    d["replicates"] = "10000";
  } else if (command == "kozlov") {
    d["n"] = "1000";
    d["replicates"] = "100000";
  } else if (command == "seneta-heyde") {
    d["law"] = "gaussian-binary";
    d["n-grid"] = "8,12,16,20";
    d["replicates"] = "2000";
    d["lambda-grid"] = "0.25,0.5,1,2,4";
    d["bootstrap"] = "400";
  } else if (command == "tauberian") {
    d["law"] = "shipped";
    d["rho"] = "y";
    d["T-grid"] = "1,10,100,1000";
    d["replicates"] = "100000";
  } else if (command == "selftest") {
    d["budget"] = "small";
    d["seed"] = "20240601";
  } else if (command == "calibrate") {
    d["replicates"] = "100000";
  }
  return d;
}

/// Merges defaults, file (top level, then the command's section) and flags,
/// then converts and validates.
inline ExperimentConfig resolve_config(const std::string& command, const RawConfig& file,
                                       const std::map<std::string, std::string>& flags) {
  using namespace config_detail;
  ExperimentConfig c;
  c.command = command;
  auto values = default_values(command);
  auto apply = [&](const std::map<std::string, std::string>& m) {
    for (const auto& [k, v] : m) {
      if (!config_keys().count(k)) throw ConfigError(k, "unknown key");
      values[k] = v;
    }
  };
  if (auto it = file.sections.find(""); it != file.sections.end()) apply(it->second);
  if (auto it = file.sections.find(command); it != file.sections.end()) apply(it->second);
  apply(flags);
  c.law_block = file.law_block;

  for (const auto& [k, v] : values) {
    if (k == "law") {
      c.law_name = v;
    } else if (k == "x") {
      c.x = to_double(k, v);
    } else if (k == "n") {
      c.n = to_natural(k, v);
    } else if (k == "n-grid") {
      c.n_grid.clear();
      for (const auto& s : split_list(v)) c.n_grid.push_back(to_natural(k, s));
      if (c.n_grid.empty()) throw ConfigError(k, "empty grid");
      if (!std::is_sorted(c.n_grid.begin(), c.n_grid.end()) ||
          std::adjacent_find(c.n_grid.begin(), c.n_grid.end()) != c.n_grid.end())
        throw ConfigError(k, "grid must be strictly ascending");
    } else if (k == "k0") {
      c.k0 = to_natural(k, v);
    } else if (k == "replicates") {
      c.replicates = to_natural(k, v);
      if (c.replicates < 1) throw ConfigError(k, "need at least 1 replicate");
    } else if (k == "seed") {
      c.seed = to_natural(k, v);
    } else if (k == "threads") {
      const auto t = to_natural(k, v);
      if (t < 1 || t > 4096) throw ConfigError(k, "threads must be between 1 and 4096");
      c.threads = static_cast<unsigned>(t);
    } else if (k == "eps" || k == "lambda-grid" || k == "T-grid" || k == "x-grid") {
      std::vector<double> g;
      for (const auto& s : split_list(v)) g.push_back(to_double(k, s));
      if (g.empty()) throw ConfigError(k, "empty list");
      if (k != "x-grid" && std::any_of(g.begin(), g.end(), [](double d) { return !(d > 0.0); }))
        throw ConfigError(k, "values must be positive");
      if (k == "eps") c.eps = g;
      if (k == "lambda-grid") c.lambdas = g;
      if (k == "T-grid") c.T_grid = g;
      if (k == "x-grid") c.x_grid = g;
    } else if (k == "out") {
      c.out = v;
    } else if (k == "plot") {
      c.plot = v;
    } else if (k == "exact") {
      c.exact = to_bool(k, v);
    } else if (k == "budget") {
      if (v != "small" && v != "full") throw ConfigError(k, "budget must be small or full");
      c.budget = v;
    } else if (k == "function") {
      c.function = v;
    } else if (k == "rho") {
      c.rho = v;
    } else if (k == "bootstrap") {
      c.bootstrap = to_natural(k, v);
    } else if (k == "x-max") {
      c.x_max = to_double(k, v);
      if (!(c.x_max > 0.0)) throw ConfigError(k, "must be positive");
    } else if (k == "max-steps") {
      c.max_steps = to_natural(k, v);
    } else if (k == "cap") {
      c.cap = to_natural(k, v);
      if (c.cap < 1) throw ConfigError(k, "cap must be positive");
    }
  }
  if (c.k0 > c.n && values.count("k0") && values.count("n") && command == "simulate")
    throw ConfigError("k0", "k0 must not exceed n");
  c.values = std::move(values);
  if (command != "tauberian" && command != "selftest") (void)c.law();  // resolvable
  return c;
}

}  // namespace brwlab
