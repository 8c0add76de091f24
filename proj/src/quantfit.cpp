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

#include "quantfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "error.hpp"

namespace qrp::fit {
namespace {

double InvertCdf(const std::function<double(double)>& cdf, double tau,
                 double lo, double hi) {
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (cdf(mid) < tau) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double MeanOf(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double PopulationStd(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double m = MeanOf(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace

double QuantileLoss(double tau, double delta) {
  return (tau - (delta < 0.0 ? 1.0 : 0.0)) * delta;
}

double QuantileLossSlope(double tau, double delta) {
  return tau - (delta < 0.0 ? 1.0 : 0.0);
}

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double NormalPdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double NormalQuantile(double tau) {
  if (tau <= 0.0) return -std::numeric_limits<double>::infinity();
  if (tau >= 1.0) return std::numeric_limits<double>::infinity();
  double x = InvertCdf(NormalCdf, tau, -40.0, 40.0);
  // Two Newton steps polish the bisection result.
  for (int i = 0; i < 2; ++i) {
    double pdf = NormalPdf(x);
    if (pdf <= 0.0) break;
    x -= (NormalCdf(x) - tau) / pdf;
  }
  return x;
}

DistributionSpec Gaussian() {
  return {"gaussian", [](Rng& rng) { return rng.normal(); }, NormalQuantile,
          -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
}

DistributionSpec BimodalGaussian() {
  auto cdf = [](double x) {
    return 0.5 * NormalCdf((x + 1.0) / 0.5) + 0.5 * NormalCdf((x - 1.0) / 0.5);
  };
  return {"bimodal",
          [](Rng& rng) {
            double mean = rng.uniform() < 0.5 ? -1.0 : 1.0;
            return mean + 0.5 * rng.normal();
          },
          [cdf](double tau) {
            if (tau <= 0.0) return -std::numeric_limits<double>::infinity();
            if (tau >= 1.0) return std::numeric_limits<double>::infinity();
            return InvertCdf(cdf, tau, -40.0, 40.0);
          },
          -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
}

DistributionSpec DiscontinuousUniform() {
  return {"discontinuous_uniform",
          [](Rng& rng) {
            return rng.uniform() < 0.5 ? rng.uniform(-1.0, -0.5)
                                       : rng.uniform(0.5, 1.0);
          },
          [](double tau) {
            if (tau < 0.5) return -1.0 + tau;
            if (tau > 0.5) return tau;
            return -0.5;
          },
          -1.0, 1.0};
}

std::vector<std::string> DistributionNames() {
  return {"gaussian", "bimodal", "discontinuous_uniform"};
}

DistributionSpec DistributionByName(const std::string& name) {
  if (name == "gaussian" || name == "normal") return Gaussian();
  if (name == "bimodal" || name == "bimodal_gaussian") return BimodalGaussian();
  if (name == "discontinuous_uniform" || name == "uniform" ||
      name == "discontinuous") {
    return DiscontinuousUniform();
  }
  Fail(ErrorCode::kInvalidArgument, "unknown distribution '" + name + "'");
}

std::vector<double> EvaluationGrid(int points) {
  Require(points >= 1, ErrorCode::kInvalidArgument, "grid needs points");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points));
  for (int i = 1; i <= points; ++i) {
    grid.push_back(static_cast<double>(i) / (points + 1));
  }
  return grid;
}

double QuantileMse(const mono::MonotonicQuantileNet& net,
                   const DistributionSpec& spec, int points) {
  const std::vector<double> grid = EvaluationGrid(points);
  Vector taus = Eigen::Map<const Vector>(grid.data(),
                                         static_cast<Eigen::Index>(grid.size()));
  Vector pred = net.predict(taus);
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double err = pred[static_cast<Eigen::Index>(i)] - spec.quantile(grid[i]);
    sum += err * err;
  }
  return sum / static_cast<double>(grid.size());
}

mono::NetConfig BenchmarkNetConfig(mono::Architecture arch,
                                   const FitOptions& options) {
  mono::NetConfig c;
  c.architecture = arch;
  c.hidden_width = options.hidden_width > 0
                       ? options.hidden_width
                       : (arch == mono::Architecture::kMaxMin ? 96 : 64);
  c.group_size = options.group_size;
  c.sigma = options.sigma;
  return c;
}

FitReport FitDistribution(const DistributionSpec& spec, mono::Architecture arch,
                          double lr, std::uint64_t seed,
                          const FitOptions& options) {
  Require(lr > 0.0, ErrorCode::kInvalidArgument, "learning rate must be > 0");
  Require(options.batches >= 1 && options.batch_size >= 1,
          ErrorCode::kInvalidArgument, "batch counts must be positive");
  Rng root(seed);
  Rng init_rng = root.substream("fit.init");
  Rng tau_rng = root.substream("fit.tau");
  Rng target_rng = root.substream("fit.target");

  FitReport report;
  report.architecture = arch;
  report.distribution = spec.name;
  report.lr = lr;
  report.seed = seed;
  report.net = mono::MonotonicQuantileNet::Init(BenchmarkNetConfig(arch, options),
                                                init_rng);
  report.curve.reserve(static_cast<std::size_t>(options.batches));

  auto params = report.net.parameters();
  diff::AdamState adam(params, {0.9, 0.999, options.adam_epsilon});
  const int n = options.batch_size;
  Vector taus(n);
  Vector targets(n);
  Vector grad(n);
  for (int b = 0; b < options.batches; ++b) {
    for (int i = 0; i < n; ++i) {
      taus[i] = tau_rng.uniform();
      targets[i] = spec.sample(target_rng);
    }
    Vector pred = report.net.forward(taus);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double delta = targets[i] - pred[i];
      loss += QuantileLoss(taus[i], delta);
      grad[i] = -QuantileLossSlope(taus[i], delta) / n;
    }
    loss /= n;
    report.curve.push_back(loss);
    if (!std::isfinite(loss)) {
      report.diverged = true;
      break;
    }
    diff::ZeroGrads(params);
    report.net.backward(grad);
    try {
      diff::AdamStep(params, adam, lr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      report.diverged = true;
      break;
    }
  }
  report.mse = report.diverged ? std::numeric_limits<double>::quiet_NaN()
                               : QuantileMse(report.net, spec,
                                             options.eval_points);
  if (!std::isfinite(report.mse)) {
    report.diverged = true;
    report.mse = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::vector<double> DefaultLearningRates() {
  return {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
}

SweepResult SummarizeSweep(std::vector<FitReport> reports,
                           const std::vector<double>& lrs) {
  SweepResult result;
  result.reports = std::move(reports);
  for (double lr : lrs) {
    SweepCell cell;
    cell.lr = lr;
    for (const FitReport& r : result.reports) {
      if (r.lr != lr) continue;
      cell.architecture = r.architecture;
      cell.distribution = r.distribution;
      if (r.diverged) {
        ++cell.diverged;
      } else {
        cell.mses.push_back(r.mse);
      }
    }
    cell.mean = cell.mses.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : MeanOf(cell.mses);
    cell.stddev = PopulationStd(cell.mses);
    result.cells.push_back(std::move(cell));
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const SweepCell& c = result.cells[i];
    if (c.diverged > 0 || c.mses.empty()) continue;
    if (c.mean < best) {
      best = c.mean;
      result.best = i;
    }
  }
  return result;
}

SweepResult LrSweep(const DistributionSpec& spec, mono::Architecture arch,
                    const std::vector<double>& lrs,
                    const std::vector<std::uint64_t>& seeds,
                    const FitOptions& options) {
  Require(!lrs.empty() && !seeds.empty(), ErrorCode::kInvalidArgument,
          "sweep needs at least one learning rate and one seed");
  std::vector<FitReport> reports;
  for (double lr : lrs) {
    for (std::uint64_t seed : seeds) {
      reports.push_back(FitDistribution(spec, arch, lr, seed, options));
    }
  }
  return SummarizeSweep(std::move(reports), lrs);
}

DensityEstimate Likelihood(const std::function<double(double)>& quantile,
                           double tau, double h) {
  Require(h > 0.0 && tau >= h && tau <= 1.0 - h, ErrorCode::kInvalidArgument,
          "likelihood needs tau in [h, 1 - h]");
  DensityEstimate est;
  est.slope = (quantile(tau + h) - quantile(tau - h)) / (2.0 * h);
  if (!(est.slope > 1e-12)) {
    est.unbounded = true;
    est.density = std::numeric_limits<double>::infinity();
    return est;
  }
  est.density = 1.0 / est.slope;
  return est;
}

DensityEstimate Likelihood(const mono::MonotonicQuantileNet& net, double tau,
                           double h) {
  return Likelihood([&net](double t) { return net.evaluate(t); }, tau, h);
}

double Crps(const std::function<double(double)>& quantile, double z, int n) {
  Require(n >= 2, ErrorCode::kInvalidArgument, "crps grid needs n >= 2");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double tau = (i + 0.5) / n;
    sum += 2.0 * QuantileLoss(tau, z - quantile(tau));
  }
  return sum / n;
}

double Crps(const mono::MonotonicQuantileNet& net, double z, int n) {
  Require(n >= 2, ErrorCode::kInvalidArgument, "crps grid needs n >= 2");
  Vector taus(n);
  for (int i = 0; i < n; ++i) taus[i] = (i + 0.5) / n;
  Vector pred = net.predict(taus);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += 2.0 * QuantileLoss(taus[i], z - pred[i]);
  return sum / n;
}

}  // namespace qrp::fit
