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

#ifndef QRPOLICY_RLCORE_HPP_
#define QRPOLICY_RLCORE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diffcore.hpp"
#include "envs.hpp"
#include "mononet.hpp"
#include "rng.hpp"

namespace qrp::rl {

struct QrdrlHyper {
  double gamma = 0.99;
  double lambda = 0.95;
  int steps_per_update = 2048;
  int epochs = 10;
  int minibatch = 32;
  int quantile_samples = 128;  // K
  double beta = 2.0;
  double lr = 3e-4;
  double adam_epsilon = 1e-5;
  double value_coef = 0.5;
  double clip = 0.2;  // Gaussian PPO baseline only
  int hidden = 64;

  // Throws kConfig on out-of-range values.
  void validate() const;
};

struct Transition {
  Vector state;
  Vector action;
  Vector tau;
  double reward = 0.0;
  double value_estimate = 0.0;
  bool done = false;
  double log_prob = 0.0;  // Gaussian baseline only
};

struct RolloutBatch {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;
};

struct AdvantageEstimates {
  std::vector<double> raw;         // before normalization
  std::vector<double> advantages;  // normalized over the batch
  std::vector<double> returns;     // raw + value_estimate
  double mean = 0.0;
  double stddev = 0.0;
};

// Generalized advantage estimates computed backward in time and then
// normalized to zero mean and unit (population) std. A batch whose raw
// advantages have zero spread normalizes to all zeros.
AdvantageEstimates Gae(const RolloutBatch& batch, double gamma, double lambda);
std::vector<double> NormalizeAdvantages(const std::vector<double>& raw,
                                        double* mean = nullptr,
                                        double* stddev = nullptr);

struct QuantilePolicyConfig {
  mono::Architecture architecture = mono::Architecture::kReluSplit;
  int hidden_width = 64;
  int group_size = 8;
  double sigma = 3.0;
  // Hidden sizes of the tanh state feature extractor. Empty: the nets take
  // no state input.
  std::vector<int> feature_layers{64, 64};
};

// One monotonic quantile net per action dimension on top of a shared state
// feature extractor whose output is injected into every net's hidden layer.
class QuantilePolicy {
 public:
  QuantilePolicy() = default;
  QuantilePolicy(int observation_dim, int action_dim,
                 const QuantilePolicyConfig& config, Rng& rng);

  // Samples tau ~ U([0,1]^d) and returns (action, tau).
  std::pair<Vector, Vector> act(const Vector& observation, Rng& rng) const;
  // Actions for explicit quantile levels (d entries).
  Vector quantiles(const Vector& observation, const Vector& tau) const;

  int observation_dim() const { return observation_dim_; }
  int action_dim() const { return static_cast<int>(nets_.size()); }
  bool has_features() const { return has_features_; }

  std::vector<mono::MonotonicQuantileNet>& nets() { return nets_; }
  const std::vector<mono::MonotonicQuantileNet>& nets() const { return nets_; }
  diff::Mlp& extractor() { return extractor_; }
  diff::ParameterList parameters();

  // Feature forward with caching (observation_dim x M -> F x M).
  Matrix features_forward(const Matrix& states);
  void features_backward(const Matrix& grad);
  Matrix features_predict(const Matrix& states) const;

 private:
  int observation_dim_ = 0;
  bool has_features_ = false;
  diff::Mlp extractor_;
  Matrix feature_pre_;
  std::vector<mono::MonotonicQuantileNet> nets_;
};

// Mean over tuples m, samples k and action dims j of
//   weight_m * rho_tau(a_mj - G_j(tau_mjk, s_m)).
// states: obs x M (ignored without features), actions: d x M, weights: M,
// taus: d x (M*K) where column m*K + k belongs to tuple m. Stored actions
// and weights are constants; with backprop the gradient is accumulated into
// the policy parameters only.
double WeightedQuantileLoss(QuantilePolicy& policy, const Matrix& states,
                            const Matrix& actions, const Vector& weights,
                            const Matrix& taus, bool backprop);

// (A + beta)-weighted quantile loss with explicit quantile samples.
double QrdrlLoss(QuantilePolicy& policy, const Matrix& states,
                 const Matrix& actions, const Vector& advantages, double beta,
                 const Matrix& taus, bool backprop);
// Draws K fresh quantile levels per tuple and action dimension.
double QrdrlLoss(QuantilePolicy& policy, const Matrix& states,
                 const Matrix& actions, const Vector& advantages, double beta,
                 int k, Rng& rng, bool backprop);

// V(s): tanh MLP, state -> scalar.
class ValueCritic {
 public:
  ValueCritic() = default;
  ValueCritic(int observation_dim, std::vector<int> hidden, Rng& rng);

  Vector predict(const Matrix& states) const;
  double value(const Vector& state) const;
  diff::Mlp& net() { return net_; }
  diff::ParameterList parameters() { return net_.parameters(); }

 private:
  diff::Mlp net_;
};

// mean((V(s) - R)^2); with backprop accumulates coef * d/dparams.
double CriticLoss(ValueCritic& critic, const Matrix& states,
                  const Vector& returns, bool backprop, double coef = 1.0);

// Clipped surrogate contribution min(r A, clip(r, 1-eps, 1+eps) A).
double PpoSurrogate(double ratio, double advantage, double clip);

// Diagonal Gaussian policy for the PPO baseline: tanh MLP mean and a
// state-independent log-std vector.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int observation_dim, int action_dim, std::vector<int> hidden,
                 Rng& rng);

  // Returns (action, log_prob).
  std::pair<Vector, double> act(const Vector& observation, Rng& rng) const;
  Vector mean(const Vector& observation) const;
  double log_prob(const Vector& observation, const Vector& action) const;
  const Vector log_std() const { return log_std_.value.col(0); }

  diff::Mlp& mean_net() { return mean_net_; }
  diff::Parameter& log_std_param() { return log_std_; }
  diff::ParameterList parameters();

 private:
  diff::Mlp mean_net_;
  diff::Parameter log_std_;
};

// -mean(clipped surrogate) over the minibatch; with backprop accumulates
// gradients into the policy.
double PpoPolicyLoss(GaussianPolicy& policy, const Matrix& states,
                     const Matrix& actions, const Vector& old_log_probs,
                     const Vector& advantages, double clip, bool backprop);

// Gaussian policy whose mean and log-std both come from a relu MLP on the
// state (the rock-paper-scissors player and countering policy).
class StateGaussianPolicy {
 public:
  static constexpr double kMinLogStd = -5.0;
  static constexpr double kMaxLogStd = 2.0;

  StateGaussianPolicy() = default;
  StateGaussianPolicy(int observation_dim, int hidden, Rng& rng);

  // (mean, clamped log-std) for each state column.
  std::pair<Vector, Vector> distribution(const Matrix& states) const;
  double sample(const Vector& state, Rng& rng) const;
  double log_prob(const Vector& state, double action) const;

  diff::Mlp& net() { return net_; }
  diff::ParameterList parameters() { return net_.parameters(); }

 private:
  diff::Mlp net_;
};

struct PgUpdateStats {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// One Adam ascent step on mean((r - baseline) * log pi(a | s)).
PgUpdateStats GaussianPgUpdate(StateGaussianPolicy& policy,
                               diff::AdamState& adam, double lr,
                               const Matrix& states, const Vector& actions,
                               const Vector& rewards, double baseline = 0.0);

struct CurvePoint {
  int update = 0;
  std::int64_t env_steps = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  // Number of actions drawn from the final policy for histograms.
  int final_samples = 10000;
  // Re-run the sorted-tau monotonicity check after each epoch.
  bool check_monotonicity = false;
  // Quantile heads for TrainQrdrl; feature_layers is taken from hyper.hidden.
  QuantilePolicyConfig policy;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::vector<double> final_actions;  // first action dimension
  bool aborted = false;
  std::string abort_reason;
  int monotonicity_violations = 0;
  std::optional<QuantilePolicy> quantile_policy;
  std::optional<GaussianPolicy> gaussian_policy;
  ValueCritic critic;
};

TrainResult TrainQrdrl(envs::Environment& env, const QrdrlHyper& hyper,
                       std::int64_t total_steps, std::uint64_t seed,
                       const TrainOptions& options = {});

TrainResult TrainPpo(envs::Environment& env, const QrdrlHyper& hyper,
                     std::int64_t total_steps, std::uint64_t seed,
                     const TrainOptions& options = {});

// True when outputs on a sorted tau grid are sorted within tol.
bool IsMonotone(const mono::MonotonicQuantileNet& net,
                const std::optional<Vector>& features, int points = 101,
                double tol = 1e-12);

}  // namespace qrp::rl

#endif  // QRPOLICY_RLCORE_HPP_
