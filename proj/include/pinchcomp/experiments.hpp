// Copyright 2026 The pinchcomp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment configuration, runners for the convergence trace and the power and
// threshold sweeps, and the JSON solution format read back by `evaluate`.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pinchcomp/baselines.hpp"
#include "pinchcomp/gml.hpp"

namespace pinchcomp {

/// Invalid configuration text, key or value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solution document that does not match the expected layout. The message
/// starts with the offending field path.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scale { Ci, Desk, Paper };

inline Scale scale_from_name(const std::string& s) {
  if (s == "ci") return Scale::Ci;
  if (s == "desk") return Scale::Desk;
  if (s == "paper") return Scale::Paper;
  throw ConfigError("scale: expected ci, desk or paper, got '" + s + "'");
}

struct ExperimentConfig {
  GeometryConfig geometry;
  GmlConfig gml;
  PgaSettings pga;
  double ula_alpha = 3.9;
  std::optional<double> ula_reference_gain;  // default: the free-space reference gain eta
  std::vector<double> power_grid{12.0, 15.0, 18.0, 21.0, 24.0, 27.0, 30.0};
  std::vector<double> threshold_grid{0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4};
  std::vector<std::string> schemes{"equidistant", "gml", "ula", "wdma"};
  bool oracle_row = true;
};

inline void apply_scale(ExperimentConfig& c, Scale s) {
  switch (s) {
    case Scale::Ci:
      c.gml.inner_iterations = 3;
      c.gml.outer_iterations = 20;
      c.gml.epochs = 5;
      c.pga.restarts = 4;
      c.pga.steps = 100;
      break;
    case Scale::Desk:
      c.gml.inner_iterations = 20;
      c.gml.outer_iterations = 20;
      c.gml.epochs = 20;
      c.pga.restarts = 16;
      c.pga.steps = 500;
      break;
    case Scale::Paper:
      c.gml.inner_iterations = 10;
      c.gml.outer_iterations = 200;
      c.gml.epochs = 50;
      c.pga.restarts = 16;
      c.pga.steps = 500;
      break;
  }
}

// ---------------------------------------------------------------------------
// Value parsing

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  if (used != t.size() || !std::isfinite(v)) throw ConfigError(key + ": expected a finite number, got '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
  if (used != t.size()) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

inline int parse_int(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key + ": value out of range");
  return static_cast<int>(v);
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < 0) throw ConfigError(key + ": seeds must be non-negative");
  return static_cast<std::uint64_t>(v);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) out.push_back(parse_double(key, item));
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_seed(key, item));
  if (out.empty()) throw ConfigError(key + ": empty seed list");
  return out;
}

/// One value applies to both BSs; two values are per BS.
inline std::array<double, kBsCount> parse_per_bs(const std::string& key, const std::string& text) {
  const std::vector<double> v = parse_doubles(key, text);
  if (v.size() == 1) return {v[0], v[0]};
  if (v.size() == 2) return {v[0], v[1]};
  throw ConfigError(key + ": expected one or two values");
}

inline std::optional<double> parse_optional(const std::string& key, const std::string& text) {
  if (trim(text) == "default") return std::nullopt;
  return parse_double(key, text);
}

inline FeedSide parse_feed(const std::string& key, const std::string& text) {
  if (text == "left") return FeedSide::Left;
  if (text == "right") return FeedSide::Right;
  throw ConfigError(key + ": expected left or right, got '" + text + "'");
}

inline std::string feed_name(FeedSide f) { return f == FeedSide::Left ? "left" : "right"; }

/// "x1 y1; x2 y2" -> [[x1, y1], [x2, y2]]
inline std::vector<std::array<double, 2>> parse_points(const std::string& key, const std::string& text) {
  std::vector<std::array<double, 2>> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ';')) {
    std::istringstream in(item);
    std::string a;
    std::string b;
    std::string extra;
    if (!(in >> a >> b) || (in >> extra)) throw ConfigError(key + ": expected 'x y' pairs separated by ';'");
    out.push_back({parse_double(key, a), parse_double(key, b)});
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Setting registry

struct Setting {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<nlohmann::json(const ExperimentConfig&)> get;
};

inline const std::vector<Setting>& settings() {
  using detail::parse_double;
  using detail::parse_int;
  using J = nlohmann::json;
  using C = ExperimentConfig;
  auto optional_json = [](const std::optional<double>& v) { return v ? J(*v) : J(nullptr); };
  static const std::vector<Setting> table = {
      // system
      {"system.span", [](C& c, const std::string& v) { c.geometry.span = parse_double("system.span", v); },
       [](const C& c) { return J(c.geometry.span); }},
      {"system.waveguides_per_bs",
       [](C& c, const std::string& v) { c.geometry.waveguides_per_bs = parse_int("system.waveguides_per_bs", v); },
       [](const C& c) { return J(c.geometry.waveguides_per_bs); }},
      {"system.pas_per_waveguide",
       [](C& c, const std::string& v) { c.geometry.pas_per_waveguide = parse_int("system.pas_per_waveguide", v); },
       [](const C& c) { return J(c.geometry.pas_per_waveguide); }},
      {"system.heights", [](C& c, const std::string& v) { c.geometry.heights = detail::parse_per_bs("system.heights", v); },
       [](const C& c) { return J(c.geometry.heights); }},
      {"system.y_offsets",
       [](C& c, const std::string& v) { c.geometry.y_offsets = detail::parse_doubles("system.y_offsets", v); },
       [](const C& c) { return J(c.geometry.y_offsets); }},
      {"system.feed_side",
       [](C& c, const std::string& v) {
         const auto parts = detail::split(v, ',');
         if (parts.size() == 1) {
           c.geometry.feed_side.fill(detail::parse_feed("system.feed_side", parts[0]));
         } else if (parts.size() == 2) {
           c.geometry.feed_side = {detail::parse_feed("system.feed_side", parts[0]),
                                   detail::parse_feed("system.feed_side", parts[1])};
         } else {
           throw ConfigError("system.feed_side: expected one or two values");
         }
       },
       [](const C& c) {
         return J::array({detail::feed_name(c.geometry.feed_side[0]), detail::feed_name(c.geometry.feed_side[1])});
       }},
      {"system.users", [](C& c, const std::string& v) { c.geometry.users = parse_int("system.users", v); },
       [](const C& c) { return J(c.geometry.users); }},
      {"system.user_positions",
       [](C& c, const std::string& v) { c.geometry.user_positions = detail::parse_points("system.user_positions", v); },
       [](const C& c) { return J(c.geometry.user_positions); }},
      {"system.wavelength", [](C& c, const std::string& v) { c.geometry.wavelength = parse_double("system.wavelength", v); },
       [](const C& c) { return J(c.geometry.wavelength); }},
      {"system.n_eff", [](C& c, const std::string& v) { c.geometry.n_eff = parse_double("system.n_eff", v); },
       [](const C& c) { return J(c.geometry.n_eff); }},
      {"system.min_spacing",
       [](C& c, const std::string& v) { c.geometry.min_spacing = detail::parse_optional("system.min_spacing", v); },
       [=](const C& c) { return optional_json(c.geometry.min_spacing); }},
      {"system.eta", [](C& c, const std::string& v) { c.geometry.eta = detail::parse_optional("system.eta", v); },
       [=](const C& c) { return optional_json(c.geometry.eta); }},
      {"system.delta_eq",
       [](C& c, const std::string& v) { c.geometry.delta_eq = detail::parse_optional("system.delta_eq", v); },
       [=](const C& c) { return optional_json(c.geometry.delta_eq); }},
      {"system.noise_density_dbm_hz",
       [](C& c, const std::string& v) {
         c.geometry.noise_density_dbm_hz = parse_double("system.noise_density_dbm_hz", v);
       },
       [](const C& c) { return J(c.geometry.noise_density_dbm_hz); }},
      {"system.bandwidth_hz",
       [](C& c, const std::string& v) { c.geometry.bandwidth_hz = parse_double("system.bandwidth_hz", v); },
       [](const C& c) { return J(c.geometry.bandwidth_hz); }},
      {"system.power_dbm",
       [](C& c, const std::string& v) { c.geometry.power_dbm = detail::parse_per_bs("system.power_dbm", v); },
       [](const C& c) { return J(c.geometry.power_dbm); }},
      {"system.rate_threshold",
       [](C& c, const std::string& v) { c.geometry.rate_threshold = parse_double("system.rate_threshold", v); },
       [](const C& c) { return J(c.geometry.rate_threshold); }},
      {"system.alpha", [](C& c, const std::string& v) { c.ula_alpha = parse_double("system.alpha", v); },
       [](const C& c) { return J(c.ula_alpha); }},
      // gml
      {"gml.inner_iterations",
       [](C& c, const std::string& v) { c.gml.inner_iterations = parse_int("gml.inner_iterations", v); },
       [](const C& c) { return J(c.gml.inner_iterations); }},
      {"gml.outer_iterations",
       [](C& c, const std::string& v) { c.gml.outer_iterations = parse_int("gml.outer_iterations", v); },
       [](const C& c) { return J(c.gml.outer_iterations); }},
      {"gml.epochs", [](C& c, const std::string& v) { c.gml.epochs = parse_int("gml.epochs", v); },
       [](const C& c) { return J(c.gml.epochs); }},
      {"gml.zeta1", [](C& c, const std::string& v) { c.gml.zeta1 = parse_double("gml.zeta1", v); },
       [](const C& c) { return J(c.gml.zeta1); }},
      {"gml.zeta2", [](C& c, const std::string& v) { c.gml.zeta2 = parse_double("gml.zeta2", v); },
       [](const C& c) { return J(c.gml.zeta2); }},
      {"gml.lr_w", [](C& c, const std::string& v) { c.gml.lr_w = parse_double("gml.lr_w", v); },
       [](const C& c) { return J(c.gml.lr_w); }},
      {"gml.lr_p", [](C& c, const std::string& v) { c.gml.lr_p = parse_double("gml.lr_p", v); },
       [](const C& c) { return J(c.gml.lr_p); }},
      {"gml.penalty",
       [](C& c, const std::string& v) {
         if (v == "hinge") c.gml.penalty = PenaltyMode::Hinge;
         else if (v == "indicator") c.gml.penalty = PenaltyMode::Indicator;
         else throw ConfigError("gml.penalty: expected hinge or indicator, got '" + v + "'");
       },
       [](const C& c) { return J(c.gml.penalty == PenaltyMode::Hinge ? "hinge" : "indicator"); }},
      {"gml.truncation", [](C& c, const std::string& v) { c.gml.truncation = parse_int("gml.truncation", v); },
       [](const C& c) { return J(c.gml.truncation); }},
      {"gml.hidden", [](C& c, const std::string& v) { c.gml.hidden = parse_int("gml.hidden", v); },
       [](const C& c) { return J(c.gml.hidden); }},
      {"gml.ppn_wiring",
       [](C& c, const std::string& v) {
         if (v == "per_waveguide") c.gml.ppn_wiring = PpnWiring::PerWaveguide;
         else if (v == "per_pa") c.gml.ppn_wiring = PpnWiring::PerPa;
         else throw ConfigError("gml.ppn_wiring: expected per_waveguide or per_pa, got '" + v + "'");
       },
       [](const C& c) { return J(c.gml.ppn_wiring == PpnWiring::PerWaveguide ? "per_waveguide" : "per_pa"); }},
      {"gml.bvn_step", [](C& c, const std::string& v) { c.gml.bvn_step = parse_double("gml.bvn_step", v); },
       [](const C& c) { return J(c.gml.bvn_step); }},
      {"gml.ppn_reach", [](C& c, const std::string& v) { c.gml.ppn_reach = parse_double("gml.ppn_reach", v); },
       [](const C& c) { return J(c.gml.ppn_reach); }},
      {"gml.init",
       [](C& c, const std::string& v) {
         if (v == "random") c.gml.init = NetInit::Random;
         else if (v == "gradient_following") c.gml.init = NetInit::GradientFollowing;
         else throw ConfigError("gml.init: expected random or gradient_following, got '" + v + "'");
       },
       [](const C& c) { return J(c.gml.init == NetInit::Random ? "random" : "gradient_following"); }},
      {"gml.output_init_scale",
       [](C& c, const std::string& v) { c.gml.output_init_scale = parse_double("gml.output_init_scale", v); },
       [](const C& c) { return J(c.gml.output_init_scale); }},
      {"gml.follow_gain_w",
       [](C& c, const std::string& v) { c.gml.follow_gain_w = parse_double("gml.follow_gain_w", v); },
       [](const C& c) { return J(c.gml.follow_gain_w); }},
      {"gml.follow_shrink_w",
       [](C& c, const std::string& v) { c.gml.follow_shrink_w = parse_double("gml.follow_shrink_w", v); },
       [](const C& c) { return J(c.gml.follow_shrink_w); }},
      {"gml.follow_gain_p",
       [](C& c, const std::string& v) { c.gml.follow_gain_p = parse_double("gml.follow_gain_p", v); },
       [](const C& c) { return J(c.gml.follow_gain_p); }},
      {"gml.follow_shrink_p",
       [](C& c, const std::string& v) { c.gml.follow_shrink_p = parse_double("gml.follow_shrink_p", v); },
       [](const C& c) { return J(c.gml.follow_shrink_p); }},
      // baselines
      {"baselines.restarts", [](C& c, const std::string& v) { c.pga.restarts = parse_int("baselines.restarts", v); },
       [](const C& c) { return J(c.pga.restarts); }},
      {"baselines.steps", [](C& c, const std::string& v) { c.pga.steps = parse_int("baselines.steps", v); },
       [](const C& c) { return J(c.pga.steps); }},
      {"baselines.step_size",
       [](C& c, const std::string& v) { c.pga.step_size = parse_double("baselines.step_size", v); },
       [](const C& c) { return J(c.pga.step_size); }},
      {"baselines.ula_reference_gain",
       [](C& c, const std::string& v) {
         c.ula_reference_gain = detail::parse_optional("baselines.ula_reference_gain", v);
       },
       [=](const C& c) { return optional_json(c.ula_reference_gain); }},
      // experiment
      {"experiment.power_grid",
       [](C& c, const std::string& v) { c.power_grid = detail::parse_doubles("experiment.power_grid", v); },
       [](const C& c) { return J(c.power_grid); }},
      {"experiment.threshold_grid",
       [](C& c, const std::string& v) { c.threshold_grid = detail::parse_doubles("experiment.threshold_grid", v); },
       [](const C& c) { return J(c.threshold_grid); }},
      {"experiment.schemes",
       [](C& c, const std::string& v) {
         c.schemes.clear();
         for (const auto& s : detail::split(v, ',')) {
           try {
             c.schemes.push_back(scheme_name(scheme_from_name(s)));
           } catch (const std::invalid_argument& e) {
             throw ConfigError(std::string("experiment.schemes: ") + e.what());
           }
         }
       },
       [](const C& c) { return J(c.schemes); }},
      {"experiment.oracle_row",
       [](C& c, const std::string& v) { c.oracle_row = detail::parse_bool("experiment.oracle_row", v); },
       [](const C& c) { return J(c.oracle_row); }},
  };
  return table;
}

inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const Setting& s : settings()) {
    if (s.key == key) {
      s.set(c, detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown setting '" + key + "'");
}

/// Applies "key=value".
inline void apply_assignment(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_setting(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Reads "[section]" headers and "key = value" lines; '#' and ';' start
/// comments. A top-level "scale = ci|desk|paper" applies that scale before
/// the remaining keys, whatever its position in the file.
inline void apply_config_text(ExperimentConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::vector<std::pair<std::string, std::string>> entries;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = origin + ":" + std::to_string(number);
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    const auto hash = value.find(" #");
    if (hash != std::string::npos) value = detail::trim(value.substr(0, hash));
    entries.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  for (const auto& [key, value] : entries) {
    if (key == "scale") apply_scale(c, scale_from_name(value));
  }
  for (const auto& [key, value] : entries) {
    if (key != "scale") apply_setting(c, key, value);
  }
}

/// Every setting with its current value.
inline nlohmann::json config_echo(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const Setting& s : settings()) j[s.key] = s.get(c);
  return j;
}

namespace detail {

inline std::string number_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Inverse of the echo: a JSON value back to the textual setting form.
inline std::string setting_text(const nlohmann::json& v) {
  if (v.is_null()) return "default";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return number_text(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    const bool nested = !v.empty() && v[0].is_array();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i > 0) out += nested ? ";" : ",";
      if (nested) {
        for (std::size_t k = 0; k < v[i].size(); ++k) out += (k > 0 ? " " : "") + setting_text(v[i][k]);
      } else {
        out += setting_text(v[i]);
      }
    }
    return out;
  }
  throw ConfigError("unsupported setting value " + v.dump());
}

}  // namespace detail

inline ExperimentConfig config_from_echo(const nlohmann::json& echo) {
  ExperimentConfig c;
  for (const auto& [key, value] : echo.items()) apply_setting(c, key, detail::setting_text(value));
  return c;
}

inline void validate(const ExperimentConfig& c) {
  try {
    c.gml.validate();
    (void)build_geometry(c.geometry);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.pga.restarts < 1 || c.pga.steps < 0 || !(c.pga.step_size > 0.0)) {
    throw ConfigError("baselines: restarts >= 1, steps >= 0 and a positive step_size are required");
  }
  if (c.ula_reference_gain && !(*c.ula_reference_gain > 0.0)) {
    throw ConfigError("baselines.ula_reference_gain must be positive");
  }
  auto ascending = [](const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (!(v[i] > v[i - 1])) return false;
    return !v.empty();
  };
  if (!ascending(c.power_grid)) throw ConfigError("experiment.power_grid must be non-empty and ascending");
  if (!ascending(c.threshold_grid)) throw ConfigError("experiment.threshold_grid must be non-empty and ascending");
  if (c.threshold_grid.front() < 0.0) throw ConfigError("experiment.threshold_grid must be non-negative");
  if (c.schemes.empty()) throw ConfigError("experiment.schemes must not be empty");
}

// ---------------------------------------------------------------------------
// Per-seed runs

/// A seed fixes the user drop and every random stream of the optimizers.
inline SystemGeometry geometry_for(const ExperimentConfig& c, std::uint64_t seed) {
  GeometryConfig gc = c.geometry;
  gc.user_seed = seed;
  return build_geometry(gc);
}

inline GmlConfig gml_for(const ExperimentConfig& c, std::uint64_t seed) {
  GmlConfig g = c.gml;
  g.seed = seed;
  return g;
}

inline PgaSettings pga_for(const ExperimentConfig& c, std::uint64_t seed) {
  PgaSettings p = c.pga;
  p.seed = seed;
  return p;
}

inline UlaSettings ula_for(const ExperimentConfig& c, const SystemGeometry& g) {
  return UlaSettings{c.ula_alpha, c.ula_reference_gain.value_or(g.eta)};
}

/// A scheme's solution for one seed, with rates recomputed from (W, P).
struct SchemeRun {
  Scheme scheme = Scheme::Gml;
  std::uint64_t seed = 0;
  BeamformingState w;
  std::optional<PinchingState> p;
  RateReport report;
  bool power_feasible = false;
  bool placement_feasible = false;
  bool feasible = false;  // power, placement and QoS
  std::optional<TrainResult> train;
  std::optional<WdmaAssignment> assignment;

  double sum_rate() const { return report.sum_rate; }
};

/// Channel a solution is evaluated on: pinching PAs, or the fixed ULAs.
inline EffectiveChannel scheme_channel(const ExperimentConfig& c, const SystemGeometry& g, Scheme s,
                                       const std::optional<PinchingState>& p) {
  if (s == Scheme::Ula) return ula_channels(g, ula_for(c, g));
  if (!p) throw std::invalid_argument("scheme_channel: positions are required for pinching schemes");
  return effective_channels(g, *p);
}

/// Recomputes rates and feasibility of a stored solution.
inline void assess(const ExperimentConfig& c, const SystemGeometry& g, SchemeRun& r) {
  if (r.p) check_shape(g, *r.p);
  r.report = sum_rate(scheme_channel(c, g, r.scheme, r.p), r.w, g.noise_power, g.rate_threshold);
  r.power_feasible = power_check(r.w, g.power_budget).feasible;
  r.placement_feasible = !r.p || placement_feasible(g, *r.p);
  r.feasible = r.power_feasible && r.placement_feasible && r.report.all_qos() && std::isfinite(r.report.sum_rate);
}

inline SchemeRun run_scheme(const ExperimentConfig& c, const SystemGeometry& g, Scheme s, std::uint64_t seed) {
  SchemeRun r;
  r.scheme = s;
  r.seed = seed;
  const PgaSettings pga = pga_for(c, seed);
  switch (s) {
    case Scheme::Gml: {
      TrainResult t = train(g, gml_for(c, seed));
      r.w = t.best_w;
      r.p = t.best_p;
      r.train = std::move(t);
      break;
    }
    case Scheme::Oracle: {
      const PinchingState p0 = equidistant_positions(g);
      const BaselineResult b = pga_oracle(g, p0, initial_beamforming(g, p0, derive_seed(seed, 3)), pga);
      r.w = b.w;
      r.p = b.p;
      break;
    }
    case Scheme::Equidistant: {
      const BaselineResult b = equidistant_optimize(g, pga);
      r.w = b.w;
      r.p = b.p;
      break;
    }
    case Scheme::Wdma: {
      const BaselineResult b = wdma_optimize(g, pga);
      r.w = b.w;
      r.p = b.p;
      r.assignment = b.assignment;
      break;
    }
    case Scheme::Ula: {
      const BaselineResult b = fixed_ula_optimize(g, pga, ula_for(c, g));
      r.w = b.w;
      break;
    }
  }
  assess(c, g, r);
  return r;
}

inline SchemeRun run_scheme(const ExperimentConfig& c, Scheme s, std::uint64_t seed) {
  return run_scheme(c, geometry_for(c, seed), s, seed);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::vector<Scheme> sorted_schemes(const std::vector<std::string>& names) {
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<Scheme> out;
  for (const auto& n : sorted) out.push_back(scheme_from_name(n));
  return out;
}

}  // namespace detail

using ProgressFn = std::function<void(const std::string&)>;

/// Trace of the final epoch, one row per outer iteration, then a reference
/// row from the multi-start optimizer when enabled.
inline std::string run_convergence(const ExperimentConfig& c, std::uint64_t seed, const ProgressFn& progress = {}) {
  const SystemGeometry g = geometry_for(c, seed);
  const GmlConfig gc = gml_for(c, seed);
  GmlTrainer trainer(g, gc);
  for (int e = 0; e < gc.epochs; ++e) {
    const double loss = trainer.run_epoch();
    if (progress) progress("epoch " + std::to_string(e + 1) + "/" + std::to_string(gc.epochs) + " loss " + detail::csv_number(loss));
  }
  const TrainResult t = trainer.result();
  std::ostringstream out;
  out << "outer_iteration,sum_rate,rate_loss,threshold_loss,spacing_loss,range_loss,best_so_far\n";
  for (const TraceEntry& e : t.trace) {
    if (e.epoch != gc.epochs - 1) continue;
    out << e.outer + 1 << ',' << detail::csv_number(e.sum_rate) << ',' << detail::csv_number(e.loss.rate_loss) << ','
        << detail::csv_number(e.loss.threshold_loss) << ',' << detail::csv_number(e.loss.spacing_loss) << ','
        << detail::csv_number(e.loss.range_loss) << ',' << detail::csv_number(e.best_so_far) << '\n';
  }
  if (c.oracle_row) {
    if (progress) progress("reference optimizer");
    const SchemeRun o = run_scheme(c, g, Scheme::Oracle, seed);
    const LossBreakdown l = meta_loss(g, o.w, *o.p, gc);
    out << "oracle," << detail::csv_number(o.sum_rate()) << ',' << detail::csv_number(l.rate_loss) << ','
        << detail::csv_number(l.threshold_loss) << ',' << detail::csv_number(l.spacing_loss) << ','
        << detail::csv_number(l.range_loss) << ',' << detail::csv_number(o.sum_rate()) << '\n';
  }
  return out.str();
}

/// Mean sum rate per (power, scheme) over the seeds.
inline std::string run_power_sweep(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds,
                                   const ProgressFn& progress = {}) {
  const std::vector<Scheme> schemes = detail::sorted_schemes(c.schemes);
  std::ostringstream out;
  out << "power_dbm,scheme,sum_rate\n";
  for (double power : c.power_grid) {
    ExperimentConfig pc = c;
    pc.geometry.power_dbm = {power, power};
    for (Scheme s : schemes) {
      double total = 0.0;
      for (std::uint64_t seed : seeds) {
        total += run_scheme(pc, s, seed).sum_rate();
        if (progress) progress(detail::csv_number(power) + " dBm " + scheme_name(s) + " seed " + std::to_string(seed));
      }
      out << detail::csv_number(power) << ',' << scheme_name(s) << ','
          << detail::csv_number(total / static_cast<double>(seeds.size())) << '\n';
    }
  }
  return out.str();
}

/// Per (threshold, scheme): mean sum rate over the seeds, with runs that miss
/// any constraint counted as zero, and the fraction of such runs. The
/// baselines ignore the threshold while optimizing, so they are solved once
/// per seed and re-assessed at every threshold; gml trains per threshold.
inline std::string run_threshold_sweep(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds,
                                       const ProgressFn& progress = {}) {
  const std::vector<Scheme> schemes = detail::sorted_schemes(c.schemes);
  std::map<std::pair<Scheme, std::uint64_t>, SchemeRun> fixed;
  for (Scheme s : schemes) {
    if (s == Scheme::Gml) continue;
    for (std::uint64_t seed : seeds) {
      fixed.emplace(std::make_pair(s, seed), run_scheme(c, s, seed));
      if (progress) progress(scheme_name(s) + " seed " + std::to_string(seed));
    }
  }
  std::ostringstream out;
  out << "r_th,scheme,sum_rate,infeasible_fraction\n";
  for (double r_th : c.threshold_grid) {
    ExperimentConfig tc = c;
    tc.geometry.rate_threshold = r_th;
    for (Scheme s : schemes) {
      double total = 0.0;
      int infeasible = 0;
      for (std::uint64_t seed : seeds) {
        const SystemGeometry g = geometry_for(tc, seed);
        SchemeRun r = s == Scheme::Gml ? run_scheme(tc, g, s, seed) : fixed.at({s, seed});
        assess(tc, g, r);
        if (r.feasible) {
          total += r.sum_rate();
        } else {
          ++infeasible;
        }
        if (progress && s == Scheme::Gml) progress("r_th " + detail::csv_number(r_th) + " gml seed " + std::to_string(seed));
      }
      const double n = static_cast<double>(seeds.size());
      out << detail::csv_number(r_th) << ',' << scheme_name(s) << ',' << detail::csv_number(total / n) << ','
          << detail::csv_number(infeasible / n) << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Solution documents

inline constexpr const char* kSolutionFormat = "pinchcomp-solution";
inline constexpr int kSolutionVersion = 1;

inline nlohmann::json beams_to_json(const BeamformingState& W) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : W.w) {
    std::vector<double> re;
    std::vector<double> im;
    for (const auto& z : m.data) {
      re.push_back(z.re);
      im.push_back(z.im);
    }
    out.push_back({{"rows", m.rows}, {"cols", m.cols}, {"re", re}, {"im", im}});
  }
  return out;
}

inline nlohmann::json train_to_json(const TrainResult& t, const SystemGeometry& g, const GmlConfig& c) {
  nlohmann::json trace = nlohmann::json::array();
  for (const TraceEntry& e : t.trace) {
    trace.push_back({{"epoch", e.epoch},
                     {"outer", e.outer},
                     {"sum_rate", e.sum_rate},
                     {"rate_loss", e.loss.rate_loss},
                     {"threshold_loss", e.loss.threshold_loss},
                     {"spacing_loss", e.loss.spacing_loss},
                     {"range_loss", e.loss.range_loss},
                     {"total", e.loss.total},
                     {"feasible", e.feasible},
                     {"best_so_far", e.best_so_far}});
  }
  const NetworkDims d = network_dims(g, c);
  nlohmann::json networks = {{"bvn", mlp_to_json(t.bvn)},
                             {"ppn", mlp_to_json(t.ppn)},
                             {"dims", {{"bvn", d.bvn}, {"ppn", d.ppn}}},
                             {"seed", c.seed}};
  return {{"trace", trace},
          {"networks", networks},
          {"found_feasible", t.found_feasible},
          {"best_sum_rate", t.best_sum_rate},
          {"skipped_updates", t.skipped_updates},
          {"skipped_adam_steps", t.skipped_adam_steps}};
}

inline nlohmann::json solution_to_json(const ExperimentConfig& c, const SchemeRun& r) {
  nlohmann::json j;
  j["format"] = kSolutionFormat;
  j["version"] = kSolutionVersion;
  j["scheme"] = scheme_name(r.scheme);
  j["seed"] = r.seed;
  j["config"] = config_echo(c);
  j["sum_rate"] = r.sum_rate();
  j["per_user_rate"] = r.report.per_user_rate;
  j["feasible"] = r.feasible;
  j["w"] = beams_to_json(r.w);
  j["p"] = r.p ? nlohmann::json(r.p->x) : nlohmann::json(nullptr);
  if (r.assignment) j["assignment"] = *r.assignment;
  if (r.train) j["train"] = train_to_json(*r.train, geometry_for(c, r.seed), gml_for(c, r.seed));
  return j;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path + "." + key + ": missing field");
  return *it;
}

inline double number_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path + ": expected a finite number");
  return v;
}

inline std::vector<double> numbers_at(const nlohmann::json& j, const std::string& path, std::size_t size) {
  if (!j.is_array()) throw SchemaError(path + ": expected an array");
  if (j.size() != size) {
    throw SchemaError(path + ": expected " + std::to_string(size) + " entries, found " + std::to_string(j.size()));
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number_at(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

/// A solution document read back: the configuration it was produced with and
/// the stored (W, P).
struct StoredSolution {
  ExperimentConfig config;
  SchemeRun run;
  double stored_sum_rate = 0.0;
};

inline StoredSolution solution_from_json(const nlohmann::json& j) {
  using detail::field;
  const std::string root = "$";
  const nlohmann::json& format = field(j, "format", root);
  if (!format.is_string() || format.get<std::string>() != kSolutionFormat) {
    throw SchemaError(root + ".format: expected \"" + std::string(kSolutionFormat) + "\"");
  }
  const nlohmann::json& version = field(j, "version", root);
  if (!version.is_number_integer() || version.get<int>() != kSolutionVersion) {
    throw SchemaError(root + ".version: expected " + std::to_string(kSolutionVersion));
  }
  StoredSolution s;
  const nlohmann::json& scheme = field(j, "scheme", root);
  if (!scheme.is_string()) throw SchemaError(root + ".scheme: expected a string");
  try {
    s.run.scheme = scheme_from_name(scheme.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(root + ".scheme: " + e.what());
  }
  const nlohmann::json& seed = field(j, "seed", root);
  if (!seed.is_number_unsigned()) throw SchemaError(root + ".seed: expected a non-negative integer");
  s.run.seed = seed.get<std::uint64_t>();

  const nlohmann::json& echo = field(j, "config", root);
  if (!echo.is_object()) throw SchemaError(root + ".config: expected an object");
  for (const auto& [key, value] : echo.items()) {
    try {
      apply_setting(s.config, key, detail::setting_text(value));
    } catch (const ConfigError& e) {
      throw SchemaError(root + ".config." + key + ": " + e.what());
    }
  }
  SystemGeometry g;
  try {
    validate(s.config);
    g = geometry_for(s.config, s.run.seed);
  } catch (const ConfigError& e) {
    throw SchemaError(root + ".config: " + e.what());
  }
  s.stored_sum_rate = detail::number_at(field(j, "sum_rate", root), root + ".sum_rate");

  const nlohmann::json& w = field(j, "w", root);
  if (!w.is_array() || w.size() != kBsCount) throw SchemaError(root + ".w: expected an array of " + std::to_string(kBsCount));
  s.run.w = zero_beamforming(g);
  for (std::size_t b = 0; b < kBsCount; ++b) {
    const std::string path = root + ".w[" + std::to_string(b) + "]";
    auto& m = s.run.w.w[b];
    const double rows = detail::number_at(field(w[b], "rows", path), path + ".rows");
    const double cols = detail::number_at(field(w[b], "cols", path), path + ".cols");
    if (rows != static_cast<double>(m.rows) || cols != static_cast<double>(m.cols)) {
      throw SchemaError(path + ": expected a " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + " matrix");
    }
    const auto re = detail::numbers_at(field(w[b], "re", path), path + ".re", m.data.size());
    const auto im = detail::numbers_at(field(w[b], "im", path), path + ".im", m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = Cplx<double>{re[i], im[i]};
  }

  const nlohmann::json& p = field(j, "p", root);
  if (s.run.scheme == Scheme::Ula) {
    if (!p.is_null()) throw SchemaError(root + ".p: expected null for the ula scheme");
  } else {
    if (!p.is_array() || p.size() != kBsCount) throw SchemaError(root + ".p: expected an array of " + std::to_string(kBsCount));
    PinchingState ps;
    for (std::size_t b = 0; b < kBsCount; ++b) {
      const std::string pb = root + ".p[" + std::to_string(b) + "]";
      if (!p[b].is_array() || p[b].size() != g.waveguides[b].size()) {
        throw SchemaError(pb + ": expected " + std::to_string(g.waveguides[b].size()) + " waveguides");
      }
      for (std::size_t n = 0; n < p[b].size(); ++n) {
        const std::string pn = pb + "[" + std::to_string(n) + "]";
        ps.x[b].push_back(detail::numbers_at(p[b][n], pn, static_cast<std::size_t>(g.waveguides[b][n].pa_count)));
      }
    }
    s.run.p = std::move(ps);
  }
  assess(s.config, g, s.run);
  return s;
}

/// Rates and feasibility recomputed from a stored solution.
inline nlohmann::json evaluate(const nlohmann::json& solution) {
  const StoredSolution s = solution_from_json(solution);
  const SchemeRun& r = s.run;
  return {{"scheme", scheme_name(r.scheme)},
          {"seed", r.seed},
          {"sum_rate", r.sum_rate()},
          {"stored_sum_rate", s.stored_sum_rate},
          {"per_user_rate", r.report.per_user_rate},
          {"per_user_sinr", r.report.per_user_sinr},
          {"power_feasible", r.power_feasible},
          {"placement_feasible", r.placement_feasible},
          {"qos_feasible", r.report.all_qos()},
          {"feasible", r.power_feasible && r.placement_feasible && r.report.all_qos()}};
}

}  // namespace pinchcomp
