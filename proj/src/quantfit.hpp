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

#ifndef QRPOLICY_QUANTFIT_HPP_
#define QRPOLICY_QUANTFIT_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mononet.hpp"
#include "rng.hpp"

namespace qrp::fit {

// rho_tau(delta) = (tau - 1{delta < 0}) * delta
double QuantileLoss(double tau, double delta);
// d rho_tau / d delta, taking the right derivative (tau) at delta = 0.
double QuantileLossSlope(double tau, double delta);

// A 1-D target distribution with exact quantile function.
struct DistributionSpec {
  std::string name;
  std::function<double(Rng&)> sample;
  std::function<double(double)> quantile;
  double support_lo;
  double support_hi;
};

DistributionSpec Gaussian();
// Equal mixture of N(-1, 0.5^2) and N(1, 0.5^2).
DistributionSpec BimodalGaussian();
// Equal mixture of U([-1, -0.5]) and U([0.5, 1]); quantile(0.5) = -0.5.
DistributionSpec DiscontinuousUniform();
DistributionSpec DistributionByName(const std::string& name);
std::vector<std::string> DistributionNames();

double NormalCdf(double x);
double NormalPdf(double x);
double NormalQuantile(double tau);

struct FitOptions {
  int batches = 10000;
  int batch_size = 128;
  int hidden_width = 0;  // 0: 64, or 96 for max-min
  int group_size = 8;
  double sigma = 3.0;
  double adam_epsilon = 1e-8;
  int eval_points = 99;
};

struct FitReport {
  mono::Architecture architecture;
  std::string distribution;
  double lr = 0.0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  bool diverged = false;
  std::vector<double> curve;  // mean batch loss per minibatch
  mono::MonotonicQuantileNet net;
};

// The 99-point grid {0.01, ..., 0.99} (for eval_points = 99).
std::vector<double> EvaluationGrid(int points = 99);
double QuantileMse(const mono::MonotonicQuantileNet& net,
                   const DistributionSpec& spec, int points = 99);

mono::NetConfig BenchmarkNetConfig(mono::Architecture arch,
                                   const FitOptions& options = {});

// Minimizes the batch mean of rho_tau(z - G(tau)), z ~ spec, tau ~ U(0,1),
// with Adam at a constant learning rate.
FitReport FitDistribution(const DistributionSpec& spec, mono::Architecture arch,
                          double lr, std::uint64_t seed,
                          const FitOptions& options = {});

struct SweepCell {
  mono::Architecture architecture;
  std::string distribution;
  double lr = 0.0;
  std::vector<double> mses;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;
  int diverged = 0;
};

struct SweepResult {
  std::vector<FitReport> reports;
  std::vector<SweepCell> cells;  // one per lr
  std::size_t best = 0;          // index into cells
};

std::vector<double> DefaultLearningRates();

// Aggregates raw reports into per-lr cells (mean and population std of MSE
// over seeds) and picks the lowest mean among cells without divergence.
SweepResult SummarizeSweep(std::vector<FitReport> reports,
                           const std::vector<double>& lrs);

SweepResult LrSweep(const DistributionSpec& spec, mono::Architecture arch,
                    const std::vector<double>& lrs,
                    const std::vector<std::uint64_t>& seeds,
                    const FitOptions& options = {});

struct DensityEstimate {
  double density = 0.0;
  double slope = 0.0;  // dG/dtau
  bool unbounded = false;
};

// Density of the implicit distribution at G(tau): 1 / (dG/dtau), with the
// derivative from a central difference of step h.
DensityEstimate Likelihood(const std::function<double(double)>& quantile,
                           double tau, double h = 1e-4);
DensityEstimate Likelihood(const mono::MonotonicQuantileNet& net, double tau,
                           double h = 1e-4);

// Midpoint rule for integral_0^1 2 rho_tau(z - G(tau)) dtau on n cells.
double Crps(const std::function<double(double)>& quantile, double z, int n);
double Crps(const mono::MonotonicQuantileNet& net, double z, int n);

}  // namespace qrp::fit

#endif  // QRPOLICY_QUANTFIT_HPP_
