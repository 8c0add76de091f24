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

// Acceptance run: executes the three experiments at their default settings
// and prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "envs.hpp"
#include "harness.hpp"
#include "rlcore.hpp"
#include "rng.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using qrp::harness::ExperimentConfig;

struct Options {
  std::string out = "acceptance_results";
  int seeds = 5;
  int workers = 0;
  bool reuse = false;
};

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::string Num(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

// Runs the experiment unless --reuse finds a summary with the same config.
json RunOrReuse(ExperimentConfig config, const Options& opt, const std::string& name) {
  config.seeds.clear();
  for (int s = 0; s < opt.seeds; ++s) config.seeds.push_back(s);
  config.scale = qrp::harness::Scale::kDesk;
  config.workers = opt.workers;
  config.out_dir = (fs::path(opt.out) / name).string();
  const fs::path summary_path = fs::path(config.out_dir) / "summary.json";
  if (opt.reuse && fs::exists(summary_path)) {
    std::ifstream in(summary_path);
    json summary = json::parse(in);
    if (summary.value("config_hash", "") == qrp::harness::ConfigHash(config) &&
        summary["failures"].empty()) {
      std::printf("# reusing %s\n", summary_path.c_str());
      return summary;
    }
  }
  std::printf("# running %s\n", name.c_str());
  std::fflush(stdout);
  return qrp::harness::Run(config).summary;
}

double Get(const json& summary, const char* stat, const std::string& key) {
  const json& v = summary.at(stat).at(key);
  return v.is_null() ? std::nan("") : v.get<double>();
}

// Reference best-lr mean and std per (architecture, distribution).
struct Reference {
  double mean;
  double stddev;
};
const std::map<std::string, Reference>& ReferenceTable() {
  static const auto* table = new std::map<std::string, Reference>{
      {"maxmin/gaussian", {0.048, 0.016}},
      {"maxmin/bimodal", {0.031, 0.013}},
      {"maxmin/discontinuous_uniform", {0.006, 0.003}},
      {"tanh/gaussian", {0.055, 0.015}},
      {"tanh/bimodal", {0.028, 0.005}},
      {"tanh/discontinuous_uniform", {0.023, 0.018}},
      {"relu/gaussian", {0.028, 0.009}},
      {"relu/bimodal", {0.019, 0.011}},
      {"relu/discontinuous_uniform", {0.050, 0.009}},
  };
  return *table;
}

std::vector<Verdict> CheckFitbench(const json& summary) {
  const json& best = summary.at("best");
  auto mean = [&](const std::string& cell) {
    const json& m = best.at(cell).at("mean");
    return m.is_null() ? std::nan("") : m.get<double>();
  };
  int within = 0;
  std::string cells;
  for (const auto& [cell, ref] : ReferenceTable()) {
    const double m = mean(cell);
    const bool ok = std::abs(m - ref.mean) <= 3.0 * ref.stddev;
    within += ok ? 1 : 0;
    cells += " " + cell + "=" + Num(m) + "@lr" + Num(best.at(cell).at("lr").get<double>()) +
             (ok ? "" : "(out)");
  }
  const double relu_gauss = mean("relu/gaussian");
  const double maxmin_du = mean("maxmin/discontinuous_uniform");
  const bool c1 = within >= 7 && relu_gauss <= 0.055 && maxmin_du <= 0.015;

  const bool c2 = mean("relu/gaussian") < mean("tanh/gaussian") &&
                  mean("relu/gaussian") < mean("maxmin/gaussian") &&
                  mean("relu/bimodal") < mean("tanh/bimodal") &&
                  mean("relu/bimodal") < mean("maxmin/bimodal") &&
                  mean("maxmin/discontinuous_uniform") < mean("relu/discontinuous_uniform");
  std::string order;
  for (const char* dist : {"gaussian", "bimodal", "discontinuous_uniform"}) {
    order += std::string(" ") + dist + ": relu " + Num(mean(std::string("relu/") + dist)) +
             " tanh " + Num(mean(std::string("tanh/") + dist)) + " maxmin " +
             Num(mean(std::string("maxmin/") + dist)) + ";";
  }
  return {{1, c1, std::to_string(within) + "/9 cells within 3 reference std;" + cells},
          {2, c2, "best-lr mean MSE" + order}};
}

std::vector<Verdict> CheckRps(const json& summary) {
  const double q = Get(summary, "mean", "quantile.final_return");
  const double g = Get(summary, "mean", "gaussian.final_return");
  const bool c3 = q >= -0.1 && g <= -0.5;
  const double valid = Get(summary, "mean", "quantile.mass_valid");
  const double rock = Get(summary, "mean", "quantile.mass_rock");
  const double paper = Get(summary, "mean", "quantile.mass_paper");
  const double scissors = Get(summary, "mean", "quantile.mass_scissors");
  const bool c4 = valid >= 0.9 && rock >= 0.15 && paper >= 0.15 && scissors >= 0.15;
  return {{3, c3, "final smoothed return quantile " + Num(q) + " gaussian " + Num(g)},
          {4, c4, "quantile mass valid " + Num(valid) + " rock " + Num(rock) +
                      " paper " + Num(paper) + " scissors " + Num(scissors)}};
}

std::vector<Verdict> CheckChoice(const json& summary, const ExperimentConfig& config) {
  const double q = Get(summary, "mean", "qrdrl.final_return");
  const double p = Get(summary, "mean", "ppo.final_return");
  const double mass_a = Get(summary, "mean", "qrdrl.mass_a");
  const double mass_b = Get(summary, "mean", "qrdrl.mass_b");
  const double lobe = Get(summary, "mean", "ppo.largest_lobe");
  const bool c5 = mass_a >= 0.25 && mass_b >= 0.25 && lobe >= 0.9 && q >= 1.1 * p;
  const double optimum =
      qrp::envs::ChoiceOptimalMemorylessValue(config.choice.game.episode_length, 100).value;
  const bool c6 = q <= optimum && q >= 0.8 * optimum;
  return {{5, c5, "qrdrl mass A " + Num(mass_a) + " B " + Num(mass_b) +
                      ", ppo largest lobe " + Num(lobe) + ", return qrdrl " + Num(q) +
                      " vs ppo " + Num(p) + " (ratio " + Num(q / p) + ")"},
          {6, c6, "qrdrl return " + Num(q) + " vs optimum " + Num(optimum) + " (" +
                      Num(100.0 * q / optimum, 3) + "%)"}};
}

Verdict CheckProperties() {
  const char* cases[] = {
      "monotonicity under 1000 random parameterizations",
      "monotonicity after aggressive Adam updates",
      "policy heads stay monotone after training",
      "linear: gradients match finite differences on 100 configurations",
      "mlp: gradients match finite differences on 100 configurations",
      "gradients match finite differences on 100 configurations per architecture",
      "qrdrl loss gradients match finite differences",
      "empirical minimizer of the quantile loss is the order statistic",
      "gae equals the brute-force double sum on 50 random sequences",
      "qrdrl loss with beta 0 and unit advantages is the plain quantile loss",
      "density integrates to the covered probability mass",
      "fits are reproducible",
      "rps iterations are reproducible",
      "choice desk run*determinism and recomputation",
  };
  std::string filter;
  for (const char* c : cases) filter += std::string(filter.empty() ? "" : ",") + c;
  const std::string command = std::string("\"") + QRP_UNIT_TEST_BINARY +
                              "\" --minimal --test-case=\"" + filter + "\"";
  const int status = std::system(command.c_str());
  return {7, status == 0,
          std::to_string(std::size(cases)) + " property cases, exit status " +
              std::to_string(status)};
}

Verdict CheckHandExample() {
  qrp::Rng rng(0);
  qrp::rl::QuantilePolicyConfig config;
  config.hidden_width = 2;
  config.group_size = 2;
  config.feature_layers.clear();
  qrp::rl::QuantilePolicy policy(0, 1, config, rng);
  // Zero log-weights and biases make the head G(tau) = 2 tau - 1.
  for (qrp::diff::Parameter* p : policy.parameters()) p->value.setZero();
  qrp::Matrix states(0, 1);
  qrp::Matrix actions = qrp::Matrix::Zero(1, 1);
  qrp::Vector advantages(1);
  advantages << 1.0;
  qrp::Matrix taus(1, 2);
  taus << 0.25, 0.75;
  const double loss =
      qrp::rl::QrdrlLoss(policy, states, actions, advantages, 2.0, taus, false);
  return {8, std::abs(loss - 0.375) <= 1e-12, "loss " + Num(loss, 17)};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"Acceptance criteria 1-8"};
  app.add_option("--out", opt.out, "results directory");
  app.add_option("--seeds", opt.seeds, "number of seeds (0..n-1)")->check(CLI::Range(5, 20));
  app.add_option("--workers", opt.workers, "worker threads (0: all cores)");
  app.add_flag("--reuse", opt.reuse, "reuse completed runs with an identical config");
  CLI11_PARSE(app, argc, argv);

  std::vector<Verdict> verdicts;
  try {
    ExperimentConfig fitbench;
    fitbench.experiment = qrp::harness::Experiment::kFitbench;
    for (auto& v : CheckFitbench(RunOrReuse(fitbench, opt, "fitbench"))) verdicts.push_back(v);

    ExperimentConfig rps;
    rps.experiment = qrp::harness::Experiment::kRps;
    for (auto& v : CheckRps(RunOrReuse(rps, opt, "rps"))) verdicts.push_back(v);

    ExperimentConfig choice;
    choice.experiment = qrp::harness::Experiment::kChoice;
    for (auto& v : CheckChoice(RunOrReuse(choice, opt, "choice"), choice)) {
      verdicts.push_back(v);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "experiment failed: %s\n", e.what());
    return 2;
  }
  verdicts.push_back(CheckProperties());
  verdicts.push_back(CheckHandExample());

  std::sort(verdicts.begin(), verdicts.end(),
            [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  for (const Verdict& v : verdicts) {
    std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", v.id, v.detail.c_str());
    failed += v.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(verdicts.size()) - failed,
              verdicts.size());
  return failed == 0 ? 0 : 1;
}
