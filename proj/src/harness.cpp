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

#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <type_traits>
#include <utility>

#include "error.hpp"
#include "rng.hpp"

namespace qrp::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string Fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// JSON helpers.

void CheckKeys(const json& obj, std::initializer_list<const char*> allowed,
               const std::string& section) {
  Require(obj.is_object(), ErrorCode::kConfig, section + " must be an object");
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    Require(known, ErrorCode::kConfig,
            "unknown key '" + item.key() + "' in " + section);
  }
}

template <typename T>
void Read(const json& obj, const char* key, T& out, const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    Fail(ErrorCode::kConfig,
         std::string("wrong type for '") + key + "' in " + section);
  }
}

void ReadInterval(const json& obj, const char* key, envs::Interval& out,
                  const std::string& section) {
  std::vector<double> pair;
  Read(obj, key, pair, section);
  if (obj.find(key) == obj.end()) return;
  Require(pair.size() == 2, ErrorCode::kConfig,
          std::string("'") + key + "' in " + section + " must be [lo, hi]");
  out = {pair[0], pair[1]};
}

json IntervalJson(const envs::Interval& i) { return json::array({i.lo, i.hi}); }

void ReadScaled(const json& obj, const char* key, Scaled& out,
                const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string sub = section + "." + key;
  CheckKeys(*it, {"paper", "desk"}, sub);
  Read(*it, "paper", out.paper, sub);
  Read(*it, "desk", out.desk, sub);
}

json ScaledJson(const Scaled& s) { return {{"paper", s.paper}, {"desk", s.desk}}; }

std::string ToString(envs::RpsLearner learner) {
  return learner == envs::RpsLearner::kQuantile ? "quantile" : "gaussian";
}

envs::RpsLearner ParseLearner(const std::string& name) {
  if (name == "quantile") return envs::RpsLearner::kQuantile;
  if (name == "gaussian") return envs::RpsLearner::kGaussian;
  Fail(ErrorCode::kConfig, "unknown rps learner '" + name + "'");
}

std::string ToString(ChoiceAlgorithm algo) {
  return algo == ChoiceAlgorithm::kQrdrl ? "qrdrl" : "ppo";
}

ChoiceAlgorithm ParseAlgorithm(const std::string& name) {
  if (name == "qrdrl") return ChoiceAlgorithm::kQrdrl;
  if (name == "ppo") return ChoiceAlgorithm::kPpo;
  Fail(ErrorCode::kConfig, "unknown choice algorithm '" + name + "'");
}

template <typename T, typename F>
std::vector<std::string> Names(const std::vector<T>& xs, F to_string) {
  std::vector<std::string> out;
  for (const T& x : xs) out.push_back(to_string(x));
  return out;
}

// ---------------------------------------------------------------------------
// Files.

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  Require(!ec && fs::is_directory(dir), ErrorCode::kIo,
          "cannot create directory " + dir.string());
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorCode::kIo,
          "cannot open " + path.string() + " for writing");
  out << text;
  Require(static_cast<bool>(out), ErrorCode::kIo,
          "failed writing " + path.string());
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      text_ += (i ? "," : "") + header[i];
    }
    text_ += '\n';
  }
  template <typename... Cells>
  void row(const Cells&... cells) {
    std::size_t i = 0;
    ((text_ += (i++ ? "," : "") + Cell(cells)), ...);
    text_ += '\n';
  }
  void save(const fs::path& path) const { WriteText(path, text_); }

 private:
  template <typename T>
  static std::string Cell(const T& x) {
    if constexpr (std::is_floating_point_v<T>) {
      return Fmt(x);
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(x);
    } else {
      return std::string(x);
    }
  }
  std::string text_;
};

void WriteHistogram(const envs::Histogram& h, const fs::path& path) {
  CsvWriter csv({"bin_lo", "bin_hi", "count", "fraction"});
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    csv.row(h.edges[b], h.edges[b + 1], h.counts[b],
            static_cast<double>(h.counts[b]) / static_cast<double>(h.total));
  }
  csv.save(path);
}

void WriteActions(const std::vector<double>& actions, const fs::path& path) {
  CsvWriter csv({"action"});
  for (double a : actions) csv.row(a);
  csv.save(path);
}

std::string SeedTag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// ---------------------------------------------------------------------------
// Worker pool: jobs share nothing; the first exception of each job is kept.

std::vector<std::string> RunJobs(std::size_t count, int workers,
                                 const std::function<void(std::size_t)>& job) {
  std::vector<std::string> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned n = workers > 0 ? static_cast<unsigned>(workers)
                           : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return errors;
}

json NullableArray(const std::vector<double>& xs) {
  json arr = json::array();
  for (double x : xs) arr.push_back(std::isfinite(x) ? json(x) : json());
  return arr;
}

json Nullable(double x) { return std::isfinite(x) ? json(x) : json(); }

struct Aggregates {
  json per_seed = json::object();
  json mean = json::object();
  json std = json::object();

  void add(const std::string& key, const std::vector<double>& values) {
    per_seed[key] = NullableArray(values);
    auto [m, s] = MeanStd(values);
    mean[key] = Nullable(m);
    std[key] = Nullable(s);
  }
};

double TailMean(const std::vector<double>& xs, std::size_t count) {
  Require(!xs.empty(), ErrorCode::kInvalidArgument, "empty series");
  count = std::clamp<std::size_t>(count, 1, xs.size());
  double sum = 0.0;
  for (std::size_t i = xs.size() - count; i < xs.size(); ++i) sum += xs[i];
  return sum / static_cast<double>(count);
}

std::size_t FinalCount(std::size_t n, double fraction) {
  return static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

// ---------------------------------------------------------------------------
// Experiments.

json RunFitbench(const ExperimentConfig& config, const fs::path& out,
                 std::vector<std::string>& failures) {
  const FitbenchSettings& fb = config.fitbench;
  const std::size_t n_arch = fb.architectures.size();
  const std::size_t n_dist = fb.distributions.size();
  const std::size_t n_lr = fb.learning_rates.size();
  const std::size_t n_seed = config.seeds.size();
  const std::size_t total = n_arch * n_dist * n_lr * n_seed;
  auto index = [&](std::size_t a, std::size_t d, std::size_t l, std::size_t s) {
    return ((a * n_dist + d) * n_lr + l) * n_seed + s;
  };

  std::vector<std::optional<fit::FitReport>> reports(total);
  auto errors = RunJobs(total, config.workers, [&](std::size_t i) {
    const std::size_t s = i % n_seed;
    const std::size_t l = (i / n_seed) % n_lr;
    const std::size_t d = (i / (n_seed * n_lr)) % n_dist;
    const std::size_t a = i / (n_seed * n_lr * n_dist);
    reports[i] = fit::FitDistribution(fit::DistributionByName(fb.distributions[d]),
                                      fb.architectures[a], fb.learning_rates[l],
                                      config.seeds[s], fb.options);
  });
  for (std::size_t i = 0; i < total; ++i) {
    if (!errors[i].empty()) failures.push_back("fit job " + std::to_string(i) + ": " + errors[i]);
  }
  Require(failures.empty(), ErrorCode::kInternal,
          "fitbench jobs failed: " + (failures.empty() ? "" : failures.front()));

  CsvWriter table({"architecture", "distribution", "lr", "seed", "mse", "diverged"});
  CsvWriter quantiles({"architecture", "distribution", "lr", "seed", "tau",
                       "target", "prediction"});
  Aggregates agg;
  json best = json::object();
  const std::vector<double> grid = fit::EvaluationGrid(fb.options.eval_points);
  for (std::size_t a = 0; a < n_arch; ++a) {
    const std::string arch = mono::ToString(fb.architectures[a]);
    for (std::size_t d = 0; d < n_dist; ++d) {
      const std::string& dist = fb.distributions[d];
      std::vector<fit::FitReport> cell_reports;
      for (std::size_t l = 0; l < n_lr; ++l) {
        for (std::size_t s = 0; s < n_seed; ++s) {
          const fit::FitReport& r = *reports[index(a, d, l, s)];
          table.row(arch, dist, r.lr, r.seed, r.mse, r.diverged ? 1 : 0);
          cell_reports.push_back(r);
        }
      }
      fit::SweepResult sweep = fit::SummarizeSweep(std::move(cell_reports), fb.learning_rates);
      for (const fit::SweepCell& cell : sweep.cells) {
        agg.add(arch + "/" + dist + "/lr=" + Fmt(cell.lr), cell.mses);
      }
      const fit::SweepCell& winner = sweep.cells[sweep.best];
      best[arch + "/" + dist] = {{"lr", winner.lr},
                                 {"mean", Nullable(winner.mean)},
                                 {"std", Nullable(winner.stddev)},
                                 {"diverged", winner.diverged}};
      const fit::DistributionSpec spec = fit::DistributionByName(dist);
      for (const fit::FitReport& r : sweep.reports) {
        if (r.lr != winner.lr) continue;
        for (double tau : grid) {
          quantiles.row(arch, dist, r.lr, r.seed, tau, spec.quantile(tau),
                        r.net.evaluate(tau));
        }
        const std::string tag = arch + "_" + dist + "_" + SeedTag(r.seed);
        CsvWriter curve({"batch", "mean_loss"});
        const std::size_t block = 100;
        for (std::size_t b = 0; b < r.curve.size(); b += block) {
          const std::size_t e = std::min(b + block, r.curve.size());
          double sum = 0.0;
          for (std::size_t k = b; k < e; ++k) sum += r.curve[k];
          curve.row(e, sum / static_cast<double>(e - b));
        }
        curve.save(out / "curves" / ("fitbench_" + tag + ".csv"));
        if (config.checkpoints) {
          mono::SaveNet(r.net, (out / "checkpoints" / ("fitbench_" + tag + ".qrpnet")).string());
        }
      }
    }
  }
  table.save(out / "fitbench.csv");
  quantiles.save(out / "fitbench_quantiles.csv");
  return {{"per_seed", agg.per_seed}, {"mean", agg.mean}, {"std", agg.std},
          {"best", best}};
}

json RunRpsExperiment(const ExperimentConfig& config, const fs::path& out,
                      std::vector<std::string>& failures) {
  const RpsSettings& rs = config.rps;
  envs::RpsConfig game = rs.game;
  game.iterations = static_cast<int>(rs.iterations.at(config.scale));
  game.counter_games = static_cast<int>(rs.counter_games.at(config.scale));
  const std::size_t n_seed = config.seeds.size();
  const std::size_t total = rs.learners.size() * n_seed;

  std::vector<std::optional<envs::RpsRunResult>> results(total);
  auto errors = RunJobs(total, config.workers, [&](std::size_t i) {
    results[i] = envs::RunRps(rs.learners[i / n_seed], game, config.seeds[i % n_seed]);
  });

  Aggregates agg;
  const auto& space = game.space;
  for (std::size_t li = 0; li < rs.learners.size(); ++li) {
    const std::string name = ToString(rs.learners[li]);
    std::vector<double> final_returns, valid, rock, paper, scissors;
    std::vector<double> pooled;
    for (std::size_t s = 0; s < n_seed; ++s) {
      const std::size_t i = li * n_seed + s;
      const std::string tag = "rps_" + name + "_" + SeedTag(config.seeds[s]);
      if (!errors[i].empty()) {
        failures.push_back(tag + ": " + errors[i]);
        continue;
      }
      const envs::RpsRunResult& r = *results[i];
      const std::vector<double> smoothed = envs::MovingAverage(r.returns, rs.smoothing);
      CsvWriter curve({"iteration", "mean_return", "smoothed_return", "counter_win_rate"});
      for (std::size_t k = 0; k < r.returns.size(); ++k) {
        curve.row(k, r.returns[k], smoothed[k], r.counter_win_rates[k]);
      }
      const fs::path curve_path = out / "curves" / (tag + ".csv");
      curve.save(curve_path);
      WriteHistogram(envs::MakeHistogram(r.final_actions, kRpsHistogramBins,
                                         -kRpsHistogramRange, kRpsHistogramRange),
                     out / "histograms" / (tag + ".csv"));
      WriteActions(r.final_actions, out / "actions" / (tag + ".csv"));
      if (config.checkpoints && r.quantile_policy) {
        mono::SaveNet(r.quantile_policy->nets()[0],
                      (out / "checkpoints" / (tag + ".qrpnet")).string());
      }
      final_returns.push_back(TailMean(smoothed, static_cast<std::size_t>(rs.final_window)));
      const double m_rock = envs::MassInside(r.final_actions, space.intervals[0]);
      const double m_paper = envs::MassInside(r.final_actions, space.intervals[1]);
      const double m_scissors = envs::MassInside(r.final_actions, space.intervals[2]);
      rock.push_back(m_rock);
      paper.push_back(m_paper);
      scissors.push_back(m_scissors);
      valid.push_back(m_rock + m_paper + m_scissors);
      pooled.insert(pooled.end(), r.final_actions.begin(), r.final_actions.end());
    }
    agg.add(name + ".final_return", final_returns);
    agg.add(name + ".mass_valid", valid);
    agg.add(name + ".mass_rock", rock);
    agg.add(name + ".mass_paper", paper);
    agg.add(name + ".mass_scissors", scissors);
    if (!pooled.empty()) {
      WriteHistogram(envs::MakeHistogram(pooled, kRpsHistogramBins,
                                         -kRpsHistogramRange, kRpsHistogramRange),
                     out / "histograms" / ("rps_" + name + "_all.csv"));
    }
  }
  return {{"per_seed", agg.per_seed}, {"mean", agg.mean}, {"std", agg.std}};
}

json RunChoiceExperiment(const ExperimentConfig& config, const fs::path& out,
                         std::vector<std::string>& failures) {
  const ChoiceSettings& cs = config.choice;
  const std::int64_t steps = cs.steps.at(config.scale);
  const std::size_t n_seed = config.seeds.size();
  const std::size_t total = cs.algorithms.size() * n_seed;
  rl::TrainOptions options;
  options.final_samples = cs.final_samples;
  options.policy = cs.policy;

  std::vector<std::optional<rl::TrainResult>> results(total);
  auto errors = RunJobs(total, config.workers, [&](std::size_t i) {
    envs::ChoiceEnv env(cs.game);
    const std::uint64_t seed = config.seeds[i % n_seed];
    results[i] = cs.algorithms[i / n_seed] == ChoiceAlgorithm::kQrdrl
                     ? rl::TrainQrdrl(env, config.hyper, steps, seed, options)
                     : rl::TrainPpo(env, config.hyper, steps, seed, options);
  });

  Aggregates agg;
  for (std::size_t ai = 0; ai < cs.algorithms.size(); ++ai) {
    const std::string name = ToString(cs.algorithms[ai]);
    std::vector<double> final_returns, mass_a, mass_b, lobe;
    std::vector<double> pooled;
    for (std::size_t s = 0; s < n_seed; ++s) {
      const std::size_t i = ai * n_seed + s;
      const std::string tag = "choice_" + name + "_" + SeedTag(config.seeds[s]);
      if (!errors[i].empty()) {
        failures.push_back(tag + ": " + errors[i]);
        continue;
      }
      const rl::TrainResult& r = *results[i];
      CsvWriter curve({"update", "env_steps", "mean_return", "policy_loss",
                       "value_loss", "lr"});
      std::vector<double> returns;
      for (const rl::CurvePoint& p : r.curve) {
        curve.row(p.update, p.env_steps, p.mean_return, p.policy_loss,
                  p.value_loss, p.lr);
        returns.push_back(p.mean_return);
      }
      curve.save(out / "curves" / (tag + ".csv"));
      if (r.aborted) {
        failures.push_back(tag + ": aborted: " + r.abort_reason);
      }
      if (config.checkpoints && r.quantile_policy) {
        for (std::size_t j = 0; j < r.quantile_policy->nets().size(); ++j) {
          mono::SaveNet(r.quantile_policy->nets()[j],
                        (out / "checkpoints" /
                         (tag + "_dim" + std::to_string(j) + ".qrpnet")).string());
        }
      }
      if (returns.empty() || r.aborted) continue;
      const envs::Histogram hist =
          envs::MakeHistogram(r.final_actions, kChoiceHistogramBins,
                              -kChoiceHistogramRange, kChoiceHistogramRange);
      WriteHistogram(hist, out / "histograms" / (tag + ".csv"));
      WriteActions(r.final_actions, out / "actions" / (tag + ".csv"));
      final_returns.push_back(TailMean(returns, FinalCount(returns.size(), cs.final_fraction)));
      mass_a.push_back(envs::MassInside(r.final_actions, cs.game.button_a));
      mass_b.push_back(envs::MassInside(r.final_actions, cs.game.button_b));
      lobe.push_back(LargestLobeMass(hist));
      pooled.insert(pooled.end(), r.final_actions.begin(), r.final_actions.end());
    }
    agg.add(name + ".final_return", final_returns);
    agg.add(name + ".mass_a", mass_a);
    agg.add(name + ".mass_b", mass_b);
    agg.add(name + ".largest_lobe", lobe);
    if (!pooled.empty()) {
      WriteHistogram(envs::MakeHistogram(pooled, kChoiceHistogramBins,
                                         -kChoiceHistogramRange, kChoiceHistogramRange),
                     out / "histograms" / ("choice_" + name + "_all.csv"));
    }
  }
  return {{"per_seed", agg.per_seed}, {"mean", agg.mean}, {"std", agg.std}};
}

// ---------------------------------------------------------------------------
// Plot bundles.

struct SeriesStats {
  std::vector<double> x;
  std::vector<std::vector<double>> values;  // one vector per x
};

void AddSeries(SeriesStats& stats, const std::vector<double>& x,
               const std::vector<double>& y) {
  if (stats.x.size() < x.size()) {
    stats.x = x;
    stats.values.resize(x.size());
  }
  for (std::size_t i = 0; i < y.size(); ++i) stats.values[i].push_back(y[i]);
}

void WriteBand(const SeriesStats& stats, const fs::path& path) {
  CsvWriter csv({"x", "mean", "lower", "upper", "seeds"});
  for (std::size_t i = 0; i < stats.x.size(); ++i) {
    auto [m, s] = MeanStd(stats.values[i]);
    csv.row(stats.x[i], m, m - s, m + s, stats.values[i].size());
  }
  csv.save(path);
}

std::vector<double> Column(const CsvTable& t, const std::string& name) {
  const std::size_t c = t.column(name);
  std::vector<double> out;
  for (const auto& row : t.rows) out.push_back(row[c]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string ToString(Experiment experiment) {
  switch (experiment) {
    case Experiment::kFitbench: return "fitbench";
    case Experiment::kRps: return "rps";
    case Experiment::kChoice: return "choice";
  }
  return "unknown";
}

std::string ToString(Scale scale) {
  return scale == Scale::kPaper ? "paper" : "desk";
}

Experiment ParseExperiment(const std::string& name) {
  if (name == "fitbench") return Experiment::kFitbench;
  if (name == "rps") return Experiment::kRps;
  if (name == "choice") return Experiment::kChoice;
  Fail(ErrorCode::kConfig, "unknown experiment '" + name + "'");
}

Scale ParseScale(const std::string& name) {
  if (name == "paper") return Scale::kPaper;
  if (name == "desk") return Scale::kDesk;
  Fail(ErrorCode::kConfig, "unknown scale '" + name + "'");
}

std::vector<std::uint64_t> ExperimentConfig::DefaultSeeds() {
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 0);
  return seeds;
}

void ExperimentConfig::validate() const {
  Require(!seeds.empty(), ErrorCode::kConfig, "seed list must not be empty");
  Require(!out_dir.empty(), ErrorCode::kConfig, "output directory must be set");
  Require(workers >= 0, ErrorCode::kConfig, "workers must be >= 0");
  hyper.validate();
  switch (experiment) {
    case Experiment::kFitbench:
      Require(!fitbench.architectures.empty() && !fitbench.distributions.empty() &&
                  !fitbench.learning_rates.empty(),
              ErrorCode::kConfig, "fitbench needs architectures, distributions and lrs");
      for (const auto& d : fitbench.distributions) fit::DistributionByName(d);
      for (double lr : fitbench.learning_rates) {
        Require(lr > 0.0, ErrorCode::kConfig, "fitbench lrs must be positive");
      }
      Require(fitbench.options.batches >= 1 && fitbench.options.batch_size >= 1 &&
                  fitbench.options.eval_points >= 1,
              ErrorCode::kConfig, "fitbench counts must be positive");
      break;
    case Experiment::kRps: {
      Require(!rps.learners.empty(), ErrorCode::kConfig, "rps needs a learner");
      Require(rps.iterations.at(scale) >= 1 && rps.counter_games.at(scale) >= 1,
              ErrorCode::kConfig, "rps iterations and counter games must be >= 1");
      Require(rps.smoothing >= 1 && rps.final_window >= 1, ErrorCode::kConfig,
              "rps smoothing and final window must be >= 1");
      envs::RpsConfig game = rps.game;
      game.iterations = static_cast<int>(rps.iterations.at(scale));
      game.counter_games = static_cast<int>(rps.counter_games.at(scale));
      game.validate();
      break;
    }
    case Experiment::kChoice:
      Require(!choice.algorithms.empty(), ErrorCode::kConfig, "choice needs an algorithm");
      Require(choice.steps.at(scale) >= hyper.steps_per_update, ErrorCode::kConfig,
              "choice steps must cover at least one rollout");
      Require(choice.game.episode_length >= 1 && choice.game.observation_dim >= 1,
              ErrorCode::kConfig, "choice episode length and observation dim must be >= 1");
      Require(choice.final_fraction > 0.0 && choice.final_fraction <= 1.0,
              ErrorCode::kConfig, "choice final_fraction must lie in (0, 1]");
      Require(choice.final_samples >= 1, ErrorCode::kConfig,
              "choice final_samples must be >= 1");
      break;
  }
}

ExperimentConfig ConfigFromJson(const json& j) {
  ExperimentConfig c;
  CheckKeys(j, {"experiment", "seeds", "scale", "out", "workers", "checkpoints",
                "hyper", "fitbench", "rps", "choice"},
            "config");
  std::string name = ToString(c.experiment);
  Read(j, "experiment", name, "config");
  c.experiment = ParseExperiment(name);
  Read(j, "seeds", c.seeds, "config");
  std::string scale = ToString(c.scale);
  Read(j, "scale", scale, "config");
  c.scale = ParseScale(scale);
  Read(j, "out", c.out_dir, "config");
  Read(j, "workers", c.workers, "config");
  Read(j, "checkpoints", c.checkpoints, "config");

  if (auto it = j.find("hyper"); it != j.end()) {
    const std::string s = "hyper";
    CheckKeys(*it, {"gamma", "lambda", "steps_per_update", "epochs", "minibatch",
                    "quantile_samples", "beta", "lr", "adam_epsilon",
                    "value_coef", "clip", "hidden"},
              s);
    rl::QrdrlHyper& h = c.hyper;
    Read(*it, "gamma", h.gamma, s);
    Read(*it, "lambda", h.lambda, s);
    Read(*it, "steps_per_update", h.steps_per_update, s);
    Read(*it, "epochs", h.epochs, s);
    Read(*it, "minibatch", h.minibatch, s);
    Read(*it, "quantile_samples", h.quantile_samples, s);
    Read(*it, "beta", h.beta, s);
    Read(*it, "lr", h.lr, s);
    Read(*it, "adam_epsilon", h.adam_epsilon, s);
    Read(*it, "value_coef", h.value_coef, s);
    Read(*it, "clip", h.clip, s);
    Read(*it, "hidden", h.hidden, s);
  }
  if (auto it = j.find("fitbench"); it != j.end()) {
    const std::string s = "fitbench";
    CheckKeys(*it, {"architectures", "distributions", "learning_rates", "batches",
                    "batch_size", "hidden_width", "group_size", "sigma",
                    "adam_epsilon", "eval_points"},
              s);
    FitbenchSettings& f = c.fitbench;
    std::vector<std::string> archs = Names(f.architectures, [](auto a) { return mono::ToString(a); });
    Read(*it, "architectures", archs, s);
    f.architectures.clear();
    for (const auto& a : archs) f.architectures.push_back(mono::ParseArchitecture(a));
    Read(*it, "distributions", f.distributions, s);
    Read(*it, "learning_rates", f.learning_rates, s);
    Read(*it, "batches", f.options.batches, s);
    Read(*it, "batch_size", f.options.batch_size, s);
    Read(*it, "hidden_width", f.options.hidden_width, s);
    Read(*it, "group_size", f.options.group_size, s);
    Read(*it, "sigma", f.options.sigma, s);
    Read(*it, "adam_epsilon", f.options.adam_epsilon, s);
    Read(*it, "eval_points", f.options.eval_points, s);
  }
  if (auto it = j.find("rps"); it != j.end()) {
    const std::string s = "rps";
    CheckKeys(*it, {"intervals", "iterations", "counter_games", "eval_games",
                    "counter_batch", "counter_lr", "counter_lr_decay", "counter_baseline_decay", "policy_lr", "policy_steps",
                    "hidden", "final_samples", "state_clip", "smoothing",
                    "final_window", "learners"},
              s);
    RpsSettings& r = c.rps;
    if (auto iv = it->find("intervals"); iv != it->end()) {
      CheckKeys(*iv, {"rock", "paper", "scissors"}, "rps.intervals");
      ReadInterval(*iv, "rock", r.game.space.intervals[0], "rps.intervals");
      ReadInterval(*iv, "paper", r.game.space.intervals[1], "rps.intervals");
      ReadInterval(*iv, "scissors", r.game.space.intervals[2], "rps.intervals");
    }
    ReadScaled(*it, "iterations", r.iterations, s);
    ReadScaled(*it, "counter_games", r.counter_games, s);
    Read(*it, "eval_games", r.game.eval_games, s);
    Read(*it, "counter_batch", r.game.counter_batch, s);
    Read(*it, "counter_lr", r.game.counter_lr, s);
    Read(*it, "counter_lr_decay", r.game.counter_lr_decay, s);
    Read(*it, "counter_baseline_decay", r.game.counter_baseline_decay, s);
    Read(*it, "policy_lr", r.game.policy_lr, s);
    Read(*it, "policy_steps", r.game.policy_steps, s);
    Read(*it, "hidden", r.game.hidden, s);
    Read(*it, "final_samples", r.game.final_samples, s);
    Read(*it, "state_clip", r.game.state_clip, s);
    Read(*it, "smoothing", r.smoothing, s);
    Read(*it, "final_window", r.final_window, s);
    std::vector<std::string> learners = Names(r.learners, [](auto l) { return ToString(l); });
    Read(*it, "learners", learners, s);
    r.learners.clear();
    for (const auto& l : learners) r.learners.push_back(ParseLearner(l));
  }
  if (auto it = j.find("choice"); it != j.end()) {
    const std::string s = "choice";
    CheckKeys(*it, {"episode_length", "button_a", "button_b", "observation_dim",
                    "steps", "architecture", "hidden_width", "group_size", "sigma",
                    "final_samples", "final_fraction", "algorithms"},
              s);
    ChoiceSettings& ch = c.choice;
    Read(*it, "episode_length", ch.game.episode_length, s);
    ReadInterval(*it, "button_a", ch.game.button_a, s);
    ReadInterval(*it, "button_b", ch.game.button_b, s);
    Read(*it, "observation_dim", ch.game.observation_dim, s);
    ReadScaled(*it, "steps", ch.steps, s);
    std::string arch = mono::ToString(ch.policy.architecture);
    Read(*it, "architecture", arch, s);
    ch.policy.architecture = mono::ParseArchitecture(arch);
    Read(*it, "hidden_width", ch.policy.hidden_width, s);
    Read(*it, "group_size", ch.policy.group_size, s);
    Read(*it, "sigma", ch.policy.sigma, s);
    Read(*it, "final_samples", ch.final_samples, s);
    Read(*it, "final_fraction", ch.final_fraction, s);
    std::vector<std::string> algos = Names(ch.algorithms, [](auto a) { return ToString(a); });
    Read(*it, "algorithms", algos, s);
    ch.algorithms.clear();
    for (const auto& a : algos) ch.algorithms.push_back(ParseAlgorithm(a));
  }
  c.validate();
  return c;
}

ExperimentConfig LoadConfig(const fs::path& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    Fail(ErrorCode::kConfig, "malformed config " + path.string() + ": " + e.what());
  }
  return ConfigFromJson(j);
}

json ConfigToJson(const ExperimentConfig& c) {
  const rl::QrdrlHyper& h = c.hyper;
  const FitbenchSettings& f = c.fitbench;
  const RpsSettings& r = c.rps;
  const ChoiceSettings& ch = c.choice;
  return {
      {"experiment", ToString(c.experiment)},
      {"seeds", c.seeds},
      {"scale", ToString(c.scale)},
      {"out", c.out_dir},
      {"workers", c.workers},
      {"checkpoints", c.checkpoints},
      {"hyper",
       {{"gamma", h.gamma}, {"lambda", h.lambda},
        {"steps_per_update", h.steps_per_update}, {"epochs", h.epochs},
        {"minibatch", h.minibatch}, {"quantile_samples", h.quantile_samples},
        {"beta", h.beta}, {"lr", h.lr}, {"adam_epsilon", h.adam_epsilon},
        {"value_coef", h.value_coef}, {"clip", h.clip}, {"hidden", h.hidden}}},
      {"fitbench",
       {{"architectures", Names(f.architectures, [](auto a) { return mono::ToString(a); })},
        {"distributions", f.distributions},
        {"learning_rates", f.learning_rates},
        {"batches", f.options.batches},
        {"batch_size", f.options.batch_size},
        {"hidden_width", f.options.hidden_width},
        {"group_size", f.options.group_size},
        {"sigma", f.options.sigma},
        {"adam_epsilon", f.options.adam_epsilon},
        {"eval_points", f.options.eval_points}}},
      {"rps",
       {{"intervals",
         {{"rock", IntervalJson(r.game.space.intervals[0])},
          {"paper", IntervalJson(r.game.space.intervals[1])},
          {"scissors", IntervalJson(r.game.space.intervals[2])}}},
        {"iterations", ScaledJson(r.iterations)},
        {"counter_games", ScaledJson(r.counter_games)},
        {"eval_games", r.game.eval_games},
        {"counter_batch", r.game.counter_batch},
        {"counter_lr", r.game.counter_lr},
        {"counter_lr_decay", r.game.counter_lr_decay},
        {"counter_baseline_decay", r.game.counter_baseline_decay},
        {"policy_lr", r.game.policy_lr},
        {"policy_steps", r.game.policy_steps},
        {"hidden", r.game.hidden},
        {"final_samples", r.game.final_samples},
        {"state_clip", r.game.state_clip},
        {"smoothing", r.smoothing},
        {"final_window", r.final_window},
        {"learners", Names(r.learners, [](auto l) { return ToString(l); })}}},
      {"choice",
       {{"episode_length", ch.game.episode_length},
        {"button_a", IntervalJson(ch.game.button_a)},
        {"button_b", IntervalJson(ch.game.button_b)},
        {"observation_dim", ch.game.observation_dim},
        {"steps", ScaledJson(ch.steps)},
        {"architecture", mono::ToString(ch.policy.architecture)},
        {"hidden_width", ch.policy.hidden_width},
        {"group_size", ch.policy.group_size},
        {"sigma", ch.policy.sigma},
        {"final_samples", ch.final_samples},
        {"final_fraction", ch.final_fraction},
        {"algorithms", Names(ch.algorithms, [](auto a) { return ToString(a); })}}},
  };
}

std::string ConfigHash(const ExperimentConfig& config) {
  json j = ConfigToJson(config);
  j.erase("out");
  j.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, Fnv1a64(j.dump()));
  return buf;
}

RunOutcome Run(const ExperimentConfig& config) {
  config.validate();
  const fs::path out(config.out_dir);
  for (const char* sub : {"", "curves", "histograms", "actions", "checkpoints"}) {
    EnsureDir(out / sub);
  }
  WriteText(out / "config.json", ConfigToJson(config).dump(2) + "\n");

  RunOutcome outcome;
  json body;
  switch (config.experiment) {
    case Experiment::kFitbench:
      body = RunFitbench(config, out, outcome.failures);
      break;
    case Experiment::kRps:
      body = RunRpsExperiment(config, out, outcome.failures);
      break;
    case Experiment::kChoice:
      body = RunChoiceExperiment(config, out, outcome.failures);
      break;
  }
  json summary = {{"experiment", ToString(config.experiment)},
                  {"config_hash", ConfigHash(config)},
                  {"scale", ToString(config.scale)},
                  {"seeds", config.seeds},
                  {"failures", outcome.failures}};
  for (auto& item : body.items()) summary[item.key()] = item.value();
  WriteText(out / "summary.json", summary.dump(2) + "\n");
  outcome.summary = std::move(summary);
  outcome.exit_code = outcome.failures.empty() ? 0 : 1;
  return outcome;
}

PlotOutcome Plotdata(const fs::path& dir) {
  const ExperimentConfig config = LoadConfig(dir / "config.json");
  const fs::path plot = dir / "plot";
  EnsureDir(plot);
  PlotOutcome outcome;
  auto missing = [&](const fs::path& p) {
    if (fs::exists(p)) return false;
    outcome.warnings.push_back("missing " + p.string());
    return true;
  };
  auto finish = [&](const SeriesStats& stats, const std::string& name) {
    if (stats.x.empty()) {
      outcome.warnings.push_back("no data for " + name);
      return;
    }
    const fs::path path = plot / (name + ".csv");
    WriteBand(stats, path);
    outcome.written.push_back(path.string());
  };
  auto pool_histograms = [&](const std::vector<fs::path>& files, const std::string& name) {
    std::vector<double> lo, hi, count;
    double total = 0.0;
    for (const fs::path& p : files) {
      const CsvTable t = ReadCsv(p);
      if (lo.empty()) {
        lo = Column(t, "bin_lo");
        hi = Column(t, "bin_hi");
        count.assign(lo.size(), 0.0);
      }
      const std::vector<double> c = Column(t, "count");
      const std::vector<double> fr = Column(t, "fraction");
      Require(c.size() == count.size(), ErrorCode::kIo, "histogram bins disagree in " + p.string());
      for (std::size_t b = 0; b < c.size(); ++b) count[b] += c[b];
      // Per-seed totals include samples outside the plotted range.
      for (std::size_t b = 0; b < c.size(); ++b) {
        if (fr[b] > 0.0) {
          total += c[b] / fr[b];
          break;
        }
      }
    }
    if (lo.empty()) return;
    CsvWriter csv({"bin_lo", "bin_hi", "count", "fraction"});
    for (std::size_t b = 0; b < lo.size(); ++b) {
      csv.row(lo[b], hi[b], count[b], total > 0.0 ? count[b] / total : 0.0);
    }
    const fs::path path = plot / (name + ".csv");
    csv.save(path);
    outcome.written.push_back(path.string());
  };

  switch (config.experiment) {
    case Experiment::kFitbench: {
      const fs::path table_path = dir / "fitbench_quantiles.csv";
      if (missing(table_path)) break;
      std::ifstream in(table_path);
      std::string line;
      std::getline(in, line);
      // (cell) -> tau -> predictions
      std::map<std::string, std::map<double, std::vector<double>>> cells;
      std::map<std::string, std::map<double, double>> targets;
      std::map<std::string, std::set<std::string>> seeds_seen;
      while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string arch, dist, lr, seed, tau, target, pred;
        std::getline(ss, arch, ',');
        std::getline(ss, dist, ',');
        std::getline(ss, lr, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, tau, ',');
        std::getline(ss, target, ',');
        std::getline(ss, pred, ',');
        const std::string cell = arch + "_" + dist;
        cells[cell][std::stod(tau)].push_back(std::stod(pred));
        targets[cell][std::stod(tau)] = std::stod(target);
        seeds_seen[cell].insert(seed);
      }
      for (const auto& [cell, by_tau] : cells) {
        if (seeds_seen[cell].size() < config.seeds.size()) {
          outcome.warnings.push_back(cell + ": " + std::to_string(seeds_seen[cell].size()) +
                                     " of " + std::to_string(config.seeds.size()) + " seeds");
        }
        CsvWriter csv({"x", "mean", "lower", "upper", "seeds", "target"});
        for (const auto& [tau, preds] : by_tau) {
          auto [m, s] = MeanStd(preds);
          csv.row(tau, m, m - s, m + s, preds.size(), targets[cell][tau]);
        }
        const fs::path path = plot / ("fitbench_" + cell + ".csv");
        csv.save(path);
        outcome.written.push_back(path.string());
      }
      break;
    }
    case Experiment::kRps:
      for (envs::RpsLearner learner : config.rps.learners) {
        const std::string name = "rps_" + ToString(learner);
        SeriesStats stats;
        std::vector<fs::path> hists;
        for (std::uint64_t seed : config.seeds) {
          const fs::path curve = dir / "curves" / (name + "_" + SeedTag(seed) + ".csv");
          if (missing(curve)) continue;
          const CsvTable t = ReadCsv(curve);
          AddSeries(stats, Column(t, "iteration"),
                    envs::MovingAverage(Column(t, "mean_return"), config.rps.smoothing));
          const fs::path hist = dir / "histograms" / (name + "_" + SeedTag(seed) + ".csv");
          if (!missing(hist)) hists.push_back(hist);
        }
        finish(stats, name + "_return");
        pool_histograms(hists, name + "_actions");
      }
      break;
    case Experiment::kChoice:
      for (ChoiceAlgorithm algo : config.choice.algorithms) {
        const std::string name = "choice_" + ToString(algo);
        SeriesStats stats;
        std::vector<fs::path> hists;
        for (std::uint64_t seed : config.seeds) {
          const fs::path curve = dir / "curves" / (name + "_" + SeedTag(seed) + ".csv");
          if (missing(curve)) continue;
          const CsvTable t = ReadCsv(curve);
          AddSeries(stats, Column(t, "env_steps"), Column(t, "mean_return"));
          const fs::path hist = dir / "histograms" / (name + "_" + SeedTag(seed) + ".csv");
          if (!missing(hist)) hists.push_back(hist);
        }
        finish(stats, name + "_return");
        pool_histograms(hists, name + "_actions");
      }
      break;
  }
  return outcome;
}

double ChoiceFinalReturnFromCurve(const fs::path& curve_csv, double final_fraction) {
  const std::vector<double> returns = Column(ReadCsv(curve_csv), "mean_return");
  return TailMean(returns, FinalCount(returns.size(), final_fraction));
}

double RpsFinalReturnFromCurve(const fs::path& curve_csv, int smoothing,
                               int final_window) {
  const std::vector<double> smoothed =
      envs::MovingAverage(Column(ReadCsv(curve_csv), "mean_return"), smoothing);
  return TailMean(smoothed, static_cast<std::size_t>(final_window));
}

double LargestLobeMass(const envs::Histogram& histogram) {
  Require(histogram.total > 0, ErrorCode::kInvalidArgument, "empty histogram");
  std::size_t best = 0;
  std::size_t run = 0;
  for (std::size_t c : histogram.counts) {
    run = c > 0 ? run + c : 0;
    best = std::max(best, run);
  }
  return static_cast<double>(best) / static_cast<double>(histogram.total);
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  Require(it != header.end(), ErrorCode::kIo, "csv has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable ReadCsv(const fs::path& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  CsvTable table;
  std::string line;
  Require(static_cast<bool>(std::getline(in, line)), ErrorCode::kIo,
          "empty csv " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        Fail(ErrorCode::kIo, "non-numeric cell '" + cell + "' in " + path.string());
      }
    }
    Require(row.size() == table.header.size(), ErrorCode::kIo,
            "ragged row in " + path.string());
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::pair<double, double> MeanStd(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace qrp::harness
