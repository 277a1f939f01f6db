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

// Command-line experiment runner: convergence trace, power and threshold
// sweeps, training and evaluation of stored solutions.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pinchcomp/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string out;
  std::vector<std::string> sets;
  std::string scale;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Configuration file ([section] key = value)");
  cmd->add_option("--seed", o.seed, "Seed of a single run, or the first of ten sweep seeds");
  cmd->add_option("--seeds", o.seeds, "Comma-separated seed list");
  cmd->add_option("--out", o.out, "Output path (default: standard output)");
  cmd->add_option("--set", o.sets, "Override one setting, key=value (repeatable)");
  cmd->add_option("--scale", o.scale, "Iteration budget preset")->check(CLI::IsMember({"ci", "desk", "paper"}));
  cmd->add_flag("--quiet", o.quiet, "Suppress progress messages");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Defaults, then the file, then --scale, then each --set in order.
pinchcomp::ExperimentConfig load_config(const CommonOptions& o) {
  pinchcomp::ExperimentConfig c;
  if (!o.config_path.empty()) {
    std::string text;
    try {
      text = read_file(o.config_path);
    } catch (const std::runtime_error& e) {
      throw pinchcomp::ConfigError(e.what());
    }
    pinchcomp::apply_config_text(c, text, o.config_path);
  }
  if (!o.scale.empty()) pinchcomp::apply_scale(c, pinchcomp::scale_from_name(o.scale));
  for (const auto& s : o.sets) pinchcomp::apply_assignment(c, s);
  pinchcomp::validate(c);
  return c;
}

std::vector<std::uint64_t> resolve_seeds(const CommonOptions& o, std::size_t default_count) {
  if (!o.seeds.empty()) return pinchcomp::detail::parse_seeds("--seeds", o.seeds);
  const std::uint64_t first = o.seed.value_or(1);
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < default_count; ++i) out.push_back(first + i);
  return out;
}

std::uint64_t single_seed(const CommonOptions& o) {
  const auto seeds = resolve_seeds(o, 1);
  if (seeds.size() != 1) throw pinchcomp::ConfigError("--seeds: this subcommand takes exactly one seed");
  return seeds.front();
}

void write_output(const CommonOptions& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + o.out + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + o.out + "'");
}

pinchcomp::ProgressFn progress_for(const CommonOptions& o) {
  if (o.quiet) return {};
  return [](const std::string& msg) { std::cerr << "[pinchcomp] " << msg << '\n'; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-BS pinching-antenna CoMP sum-rate optimizer and benchmark runner"};
  app.require_subcommand(1);

  CommonOptions conv_o, power_o, thr_o, eval_o, train_o;
  std::string solution_path;
  std::string train_scheme = "gml";

  CLI::App* conv = app.add_subcommand("convergence", "Per-outer-iteration trace of one training run");
  add_common(conv, conv_o);
  CLI::App* power = app.add_subcommand("sweep-power", "Mean sum rate per scheme over a BS power grid");
  add_common(power, power_o);
  CLI::App* thr = app.add_subcommand("sweep-threshold", "Mean sum rate and infeasibility over a QoS threshold grid");
  add_common(thr, thr_o);
  CLI::App* eval = app.add_subcommand("evaluate", "Recompute rates and feasibility of a stored solution");
  add_common(eval, eval_o);
  eval->add_option("solution", solution_path, "Solution JSON written by 'train'")->required();
  CLI::App* train = app.add_subcommand("train", "Solve one instance and write the solution JSON");
  add_common(train, train_o);
  train->add_option("--scheme", train_scheme, "Scheme to run")
      ->check(CLI::IsMember({"gml", "oracle", "equidistant", "wdma", "ula"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (conv->parsed()) {
      const auto c = load_config(conv_o);
      write_output(conv_o, pinchcomp::run_convergence(c, single_seed(conv_o), progress_for(conv_o)));
    } else if (power->parsed()) {
      const auto c = load_config(power_o);
      write_output(power_o, pinchcomp::run_power_sweep(c, resolve_seeds(power_o, 10), progress_for(power_o)));
    } else if (thr->parsed()) {
      const auto c = load_config(thr_o);
      write_output(thr_o, pinchcomp::run_threshold_sweep(c, resolve_seeds(thr_o, 10), progress_for(thr_o)));
    } else if (eval->parsed()) {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(read_file(solution_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw pinchcomp::SchemaError(std::string("$: not valid JSON: ") + e.what());
      }
      write_output(eval_o, pinchcomp::evaluate(doc).dump(2) + "\n");
    } else if (train->parsed()) {
      const auto c = load_config(train_o);
      const std::uint64_t seed = single_seed(train_o);
      const auto progress = progress_for(train_o);
      if (progress) progress("solving seed " + std::to_string(seed) + " with " + train_scheme);
      const auto run = pinchcomp::run_scheme(c, pinchcomp::scheme_from_name(train_scheme), seed);
      write_output(train_o, pinchcomp::solution_to_json(c, run).dump(2) + "\n");
    }
  } catch (const pinchcomp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pinchcomp::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pinchcomp::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
