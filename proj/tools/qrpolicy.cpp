// Copyright 2026 The qrpolicy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Links only against the C interface.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qrpolicy/qrpolicy.h"

namespace {

using nlohmann::json;

int Report(qrp_status status, const char* context) {
  if (status == QRP_OK) return 0;
  std::fprintf(stderr, "qrpolicy: %s: %s\n", context, qrp_last_error());
  return 2;
}

// "0,1,2" or "0-19" or a mix ("0-4,10").
std::vector<long long> ParseSeeds(const std::string& text) {
  std::vector<long long> seeds;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto dash = part.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(std::stoll(part));
    } else {
      const long long lo = std::stoll(part.substr(0, dash));
      const long long hi = std::stoll(part.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("seed range " + part);
      for (long long s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

struct RunFlags {
  std::string config_path;
  std::string seeds;
  std::string scale;
  std::string out;
  std::optional<int> workers;
  std::optional<double> lr;
  std::string arch;
  std::string dist;
  bool no_checkpoints = false;
};

int RunExperiment(const std::string& experiment, const RunFlags& flags) {
  qrp_config* config = nullptr;
  qrp_status status = flags.config_path.empty()
                          ? qrp_config_default(experiment.c_str(), &config)
                          : qrp_config_from_file(flags.config_path.c_str(), &config);
  if (status != QRP_OK) return Report(status, "config");

  json patch = {{"experiment", experiment}};
  try {
    if (!flags.seeds.empty()) patch["seeds"] = ParseSeeds(flags.seeds);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qrpolicy: --seeds: %s\n", e.what());
    qrp_config_free(config);
    return 2;
  }
  if (!flags.scale.empty()) patch["scale"] = flags.scale;
  if (!flags.out.empty()) patch["out"] = flags.out;
  if (flags.workers) patch["workers"] = *flags.workers;
  if (flags.no_checkpoints) patch["checkpoints"] = false;
  if (experiment == "fitbench") {
    if (flags.lr) patch["fitbench"]["learning_rates"] = {*flags.lr};
    if (!flags.arch.empty()) patch["fitbench"]["architectures"] = {flags.arch};
    if (!flags.dist.empty()) patch["fitbench"]["distributions"] = {flags.dist};
  } else if (experiment == "rps") {
    if (flags.lr) patch["rps"]["policy_lr"] = *flags.lr;
  } else {
    if (flags.lr) patch["hyper"]["lr"] = *flags.lr;
    if (!flags.arch.empty()) patch["choice"]["architecture"] = flags.arch;
  }
  if (experiment != "fitbench" && !flags.dist.empty()) {
    std::fprintf(stderr, "qrpolicy: --dist applies to fitbench only\n");
    qrp_config_free(config);
    return 2;
  }
  status = qrp_config_patch(config, patch.dump().c_str());
  if (status != QRP_OK) {
    qrp_config_free(config);
    return Report(status, "config");
  }

  int exit_code = 0;
  size_t needed = 0;
  status = qrp_run(config, &exit_code, nullptr, 0, &needed);
  qrp_config_free(config);
  if (status != QRP_OK) return Report(status, "run");
  // The summary is on disk; only failures go to the terminal.
  if (exit_code != 0) std::fprintf(stderr, "qrpolicy: some seeds aborted\n");
  return exit_code;
}

int RunPlotdata(const std::string& dir) {
  size_t needed = 0;
  qrp_status status = qrp_plotdata(dir.c_str(), nullptr, 0, &needed);
  if (status != QRP_OK) return Report(status, "plotdata");
  // Second call only fetches the report text; plot files are rewritten
  // identically.
  std::string report(needed, '\0');
  status = qrp_plotdata(dir.c_str(), report.data(), report.size(), &needed);
  if (status != QRP_OK) return Report(status, "plotdata");
  std::fputs(report.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-regression policies: benchmarks and toy experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qrp_version()));

  RunFlags flags;
  std::string experiment;
  for (const char* name : {"fitbench", "rps", "choice"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", flags.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seeds", flags.seeds, "seed list, e.g. 0,1,2 or 0-19");
    sub->add_option("--scale", flags.scale, "paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--workers", flags.workers, "worker threads (0: all cores)");
    sub->add_option("--lr", flags.lr, "learning rate override");
    sub->add_option("--arch", flags.arch, "relu, tanh or maxmin")
        ->check(CLI::IsMember({"relu", "tanh", "maxmin"}));
    sub->add_option("--dist", flags.dist, "fitbench target distribution");
    sub->add_flag("--no-checkpoints", flags.no_checkpoints, "skip writing nets");
    sub->callback([&experiment, name] { experiment = name; });
  }
  std::string plot_dir;
  CLI::App* plot = app.add_subcommand("plotdata", "aggregate a results directory");
  plot->add_option("dir", plot_dir, "results directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  if (plot->parsed()) return RunPlotdata(plot_dir);
  return RunExperiment(experiment, flags);
}
