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

// Experiment orchestration: configuration, seed fan-out, and result files.

#ifndef QRPOLICY_HARNESS_HPP_
#define QRPOLICY_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "envs.hpp"
#include "mononet.hpp"
#include "quantfit.hpp"
#include "rlcore.hpp"
#include "rps.hpp"

namespace qrp::harness {

enum class Experiment { kFitbench, kRps, kChoice };
enum class Scale { kPaper, kDesk };

std::string ToString(Experiment experiment);
std::string ToString(Scale scale);
Experiment ParseExperiment(const std::string& name);
Scale ParseScale(const std::string& name);

// A step count at both scales.
struct Scaled {
  std::int64_t paper = 0;
  std::int64_t desk = 0;
  std::int64_t at(Scale scale) const {
    return scale == Scale::kPaper ? paper : desk;
  }
};

struct FitbenchSettings {
  std::vector<mono::Architecture> architectures{
      mono::Architecture::kReluSplit, mono::Architecture::kTanhPositive,
      mono::Architecture::kMaxMin};
  std::vector<std::string> distributions = fit::DistributionNames();
  std::vector<double> learning_rates = fit::DefaultLearningRates();
  fit::FitOptions options;
};

struct RpsSettings {
  envs::RpsConfig game;  // iterations and counter_games are set from scale
  Scaled iterations{500, 200};
  Scaled counter_games{10000, 2000};
  int smoothing = 10;
  int final_window = 20;
  std::vector<envs::RpsLearner> learners{envs::RpsLearner::kQuantile,
                                         envs::RpsLearner::kGaussian};
};

enum class ChoiceAlgorithm { kQrdrl, kPpo };

struct ChoiceSettings {
  envs::ChoiceConfig game;
  Scaled steps{1000000, 300000};
  rl::QuantilePolicyConfig policy;  // feature_layers come from hyper.hidden
  int final_samples = 10000;
  double final_fraction = 0.1;
  std::vector<ChoiceAlgorithm> algorithms{ChoiceAlgorithm::kQrdrl,
                                          ChoiceAlgorithm::kPpo};
};

struct ExperimentConfig {
  Experiment experiment = Experiment::kChoice;
  std::vector<std::uint64_t> seeds = DefaultSeeds();
  Scale scale = Scale::kDesk;
  std::string out_dir = "results";
  // 0: one worker per hardware thread.
  int workers = 0;
  bool checkpoints = true;
  rl::QrdrlHyper hyper;
  FitbenchSettings fitbench;
  RpsSettings rps;
  ChoiceSettings choice;

  static std::vector<std::uint64_t> DefaultSeeds();
  // Throws kConfig on invalid settings.
  void validate() const;
};

// Strict: unknown keys and wrong types raise kConfig.
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
ExperimentConfig LoadConfig(const std::filesystem::path& path);
nlohmann::json ConfigToJson(const ExperimentConfig& config);
// FNV-1a of the canonical JSON of everything except output location and
// worker count, as 16 hex digits.
std::string ConfigHash(const ExperimentConfig& config);

struct RunOutcome {
  int exit_code = 0;
  std::vector<std::string> failures;  // one line per aborted seed
  nlohmann::json summary;
};

// Runs every seed (and cell) of the experiment and writes
//   config.json, summary.json, curves/, histograms/, checkpoints/
// plus fitbench.csv and fitbench_quantiles.csv for the benchmark.
RunOutcome Run(const ExperimentConfig& config);

struct PlotOutcome {
  std::vector<std::string> written;
  std::vector<std::string> warnings;
};

// Aggregates per-seed curves under dir into dir/plot/*.csv with columns
// x,mean,lower,upper,seeds (band = mean -/+ population std).
PlotOutcome Plotdata(const std::filesystem::path& dir);

// Per-seed scalar metrics, recomputed from the files Run wrote.
double ChoiceFinalReturnFromCurve(const std::filesystem::path& curve_csv,
                                  double final_fraction);
double RpsFinalReturnFromCurve(const std::filesystem::path& curve_csv,
                               int smoothing, int final_window);

// Largest share of samples in a single run of non-empty histogram bins.
double LargestLobeMass(const envs::Histogram& histogram);

// Minimal CSV reader for the files this module writes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t column(const std::string& name) const;
};
CsvTable ReadCsv(const std::filesystem::path& path);

// Population mean and std.
std::pair<double, double> MeanStd(const std::vector<double>& xs);

inline constexpr int kRpsHistogramBins = 50;
inline constexpr double kRpsHistogramRange = 1.6;
inline constexpr int kChoiceHistogramBins = 50;
inline constexpr double kChoiceHistogramRange = 1.4;

}  // namespace qrp::harness

#endif  // QRPOLICY_HARNESS_HPP_
