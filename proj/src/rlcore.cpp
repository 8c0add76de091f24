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

#include "rlcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "error.hpp"
#include "quantfit.hpp"

namespace qrp::rl {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Matrix GatherColumns(const Matrix& src, const std::vector<std::size_t>& idx,
                     std::size_t begin, std::size_t end) {
  Matrix out(src.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) =
        src.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Vector Gather(const std::vector<double>& src,
              const std::vector<std::size_t>& idx, std::size_t begin,
              std::size_t end) {
  Vector out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out[static_cast<Eigen::Index>(i - begin)] = src[idx[i]];
  }
  return out;
}

bool AllFinite(double x) { return std::isfinite(x); }

// Shared rollout bookkeeping for both training loops.
struct EpisodeTracker {
  double running = 0.0;
  double last_mean = 0.0;
  std::vector<double> completed;

  void add(double reward, bool done) {
    running += reward;
    if (done) {
      completed.push_back(running);
      running = 0.0;
    }
  }
  double close_window() {
    if (!completed.empty()) {
      last_mean = std::accumulate(completed.begin(), completed.end(), 0.0) /
                  static_cast<double>(completed.size());
    }
    completed.clear();
    return last_mean;
  }
};

}  // namespace

void QrdrlHyper::validate() const {
  Require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::kConfig,
          "gamma must lie in [0, 1]");
  Require(lambda >= 0.0 && lambda <= 1.0, ErrorCode::kConfig,
          "lambda must lie in [0, 1]");
  Require(steps_per_update >= 1 && epochs >= 1 && minibatch >= 1 &&
              quantile_samples >= 1 && hidden >= 2,
          ErrorCode::kConfig, "step, epoch, batch and width counts must be positive");
  Require(beta >= 0.0 && lr > 0.0 && adam_epsilon > 0.0 && value_coef >= 0.0 &&
              clip > 0.0,
          ErrorCode::kConfig, "beta, lr, epsilon, value_coef and clip must be positive");
}

std::vector<double> NormalizeAdvantages(const std::vector<double>& raw,
                                        double* mean_out, double* std_out) {
  Require(!raw.empty(), ErrorCode::kInvalidArgument,
          "cannot normalize an empty batch");
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double var = 0.0;
  for (double a : raw) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> out(raw.size(), 0.0);
  if (stddev > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean) / stddev;
  }
  if (mean_out != nullptr) *mean_out = mean;
  if (std_out != nullptr) *std_out = stddev;
  return out;
}

AdvantageEstimates Gae(const RolloutBatch& batch, double gamma, double lambda) {
  Require(!batch.steps.empty(), ErrorCode::kInvalidArgument,
          "advantage estimation needs a non-empty batch");
  const std::size_t n = batch.steps.size();
  AdvantageEstimates est;
  est.raw.assign(n, 0.0);
  est.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const Transition& step = batch.steps[t];
    const double next_value =
        t + 1 == n ? batch.bootstrap_value : batch.steps[t + 1].value_estimate;
    const double nonterminal = step.done ? 0.0 : 1.0;
    const double delta =
        step.reward + gamma * nonterminal * next_value - step.value_estimate;
    running = delta + gamma * lambda * nonterminal * running;
    est.raw[t] = running;
    est.returns[t] = running + step.value_estimate;
  }
  est.advantages = NormalizeAdvantages(est.raw, &est.mean, &est.stddev);
  return est;
}

QuantilePolicy::QuantilePolicy(int observation_dim, int action_dim,
                               const QuantilePolicyConfig& config, Rng& rng)
    : observation_dim_(observation_dim),
      has_features_(!config.feature_layers.empty()) {
  Require(action_dim >= 1, ErrorCode::kInvalidArgument,
          "policy needs at least one action dimension");
  int feature_dim = 0;
  if (has_features_) {
    Require(observation_dim >= 1, ErrorCode::kInvalidArgument,
            "feature extractor needs a positive observation dimension");
    std::vector<int> hidden(config.feature_layers.begin(),
                            config.feature_layers.end() - 1);
    feature_dim = config.feature_layers.back();
    Rng extractor_rng = rng.substream("policy.extractor");
    extractor_ = diff::Mlp("policy.features", observation_dim, hidden,
                           feature_dim, diff::Activation::kTanh, extractor_rng);
  }
  for (int j = 0; j < action_dim; ++j) {
    mono::NetConfig net_config;
    net_config.architecture = config.architecture;
    net_config.hidden_width = config.hidden_width;
    net_config.group_size = config.group_size;
    net_config.sigma = config.sigma;
    net_config.feature_dim = feature_dim;
    Rng net_rng = rng.substream("policy.quantile_net", static_cast<std::uint64_t>(j));
    nets_.push_back(mono::MonotonicQuantileNet::Init(net_config, net_rng));
  }
}

Matrix QuantilePolicy::features_forward(const Matrix& states) {
  feature_pre_ = extractor_.forward(states);
  return diff::Apply(diff::Activation::kTanh, feature_pre_);
}

void QuantilePolicy::features_backward(const Matrix& grad) {
  extractor_.backward(
      diff::ApplyBackward(diff::Activation::kTanh, feature_pre_, grad));
}

Matrix QuantilePolicy::features_predict(const Matrix& states) const {
  return diff::Apply(diff::Activation::kTanh, extractor_.predict(states));
}

Vector QuantilePolicy::quantiles(const Vector& observation,
                                 const Vector& tau) const {
  Require(tau.size() == action_dim(), ErrorCode::kDimensionMismatch,
          "need one quantile level per action dimension");
  Vector action(tau.size());
  if (has_features_) {
    Vector features = features_predict(observation).col(0);
    for (Eigen::Index j = 0; j < tau.size(); ++j) {
      action[j] = nets_[static_cast<std::size_t>(j)].evaluate(tau[j], features);
    }
  } else {
    for (Eigen::Index j = 0; j < tau.size(); ++j) {
      action[j] = nets_[static_cast<std::size_t>(j)].evaluate(tau[j]);
    }
  }
  return action;
}

std::pair<Vector, Vector> QuantilePolicy::act(const Vector& observation,
                                              Rng& rng) const {
  std::optional<Vector> features;
  if (has_features_) features = features_predict(observation).col(0);
  return mono::ActionSample(nets_, features, rng);
}

diff::ParameterList QuantilePolicy::parameters() {
  diff::ParameterList out;
  if (has_features_) out = extractor_.parameters();
  for (auto& net : nets_) {
    auto p = net.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double WeightedQuantileLoss(QuantilePolicy& policy, const Matrix& states,
                            const Matrix& actions, const Vector& weights,
                            const Matrix& taus, bool backprop) {
  const Eigen::Index m = actions.cols();
  const Eigen::Index d = policy.action_dim();
  Require(m >= 1 && actions.rows() == d && weights.size() == m,
          ErrorCode::kDimensionMismatch,
          "actions must be action_dim x M with one weight per tuple");
  Require(taus.rows() == d && taus.cols() % m == 0 && taus.cols() >= m,
          ErrorCode::kDimensionMismatch,
          "taus must be action_dim x (M * K)");
  const Eigen::Index k = taus.cols() / m;
  Matrix features;
  if (policy.has_features()) {
    Require(states.cols() == m, ErrorCode::kDimensionMismatch,
            "one state column per tuple expected");
    features = backprop ? policy.features_forward(states)
                        : policy.features_predict(states);
  }
  const Matrix* feature_ptr = policy.has_features() ? &features : nullptr;
  const double norm = static_cast<double>(m * k * d);
  double total = 0.0;
  Matrix grad_features;
  if (policy.has_features()) grad_features = Matrix::Zero(features.rows(), m);
  Vector grad(m * k);
  for (Eigen::Index j = 0; j < d; ++j) {
    auto& net = policy.nets()[static_cast<std::size_t>(j)];
    const Vector tau_row = taus.row(j).transpose();
    const Vector pred = backprop ? net.forward(tau_row, feature_ptr, k)
                                 : net.predict(tau_row, feature_ptr, k);
    for (Eigen::Index t = 0; t < m; ++t) {
      const double w = weights[t];
      const double a = actions(j, t);
      for (Eigen::Index s = 0; s < k; ++s) {
        const Eigen::Index n = t * k + s;
        const double delta = a - pred[n];
        total += w * fit::QuantileLoss(tau_row[n], delta);
        grad[n] = -w * fit::QuantileLossSlope(tau_row[n], delta) / norm;
      }
    }
    if (backprop) {
      Matrix g = net.backward(grad);
      if (policy.has_features()) grad_features += g;
    }
  }
  if (backprop && policy.has_features()) policy.features_backward(grad_features);
  return total / norm;
}

double QrdrlLoss(QuantilePolicy& policy, const Matrix& states,
                 const Matrix& actions, const Vector& advantages, double beta,
                 const Matrix& taus, bool backprop) {
  Vector weights = advantages.array() + beta;
  return WeightedQuantileLoss(policy, states, actions, weights, taus, backprop);
}

double QrdrlLoss(QuantilePolicy& policy, const Matrix& states,
                 const Matrix& actions, const Vector& advantages, double beta,
                 int k, Rng& rng, bool backprop) {
  Require(k >= 1, ErrorCode::kInvalidArgument, "K must be at least 1");
  Matrix taus(policy.action_dim(), actions.cols() * k);
  for (Eigen::Index c = 0; c < taus.cols(); ++c) {
    for (Eigen::Index r = 0; r < taus.rows(); ++r) taus(r, c) = rng.uniform();
  }
  return QrdrlLoss(policy, states, actions, advantages, beta, taus, backprop);
}

ValueCritic::ValueCritic(int observation_dim, std::vector<int> hidden, Rng& rng)
    : net_("critic", observation_dim, std::move(hidden), 1,
           diff::Activation::kTanh, rng) {}

Vector ValueCritic::predict(const Matrix& states) const {
  return net_.predict(states).row(0).transpose();
}

double ValueCritic::value(const Vector& state) const {
  return net_.predict(state)(0, 0);
}

double CriticLoss(ValueCritic& critic, const Matrix& states,
                  const Vector& returns, bool backprop, double coef) {
  Require(states.cols() == returns.size() && returns.size() > 0,
          ErrorCode::kDimensionMismatch, "one return per state expected");
  const double m = static_cast<double>(returns.size());
  if (!backprop) {
    return (critic.predict(states) - returns).squaredNorm() / m;
  }
  Matrix v = critic.net().forward(states);
  RowVector diff = v.row(0) - returns.transpose();
  critic.net().backward(coef * 2.0 * diff / m);
  return diff.squaredNorm() / m;
}

double PpoSurrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

GaussianPolicy::GaussianPolicy(int observation_dim, int action_dim,
                               std::vector<int> hidden, Rng& rng)
    : mean_net_("gaussian.mean", observation_dim, std::move(hidden), action_dim,
                diff::Activation::kTanh, rng, 0.01),
      log_std_("gaussian.log_std", action_dim, 1,
               diff::Constraint::kUnconstrained) {}

Vector GaussianPolicy::mean(const Vector& observation) const {
  return mean_net_.predict(observation).col(0);
}

double GaussianPolicy::log_prob(const Vector& observation,
                                const Vector& action) const {
  const Vector mu = mean(observation);
  double lp = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double ls = log_std_.value(j, 0);
    const double z = (action[j] - mu[j]) / std::exp(ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
  }
  return lp;
}

std::pair<Vector, double> GaussianPolicy::act(const Vector& observation,
                                              Rng& rng) const {
  const Vector mu = mean(observation);
  Vector action(mu.size());
  double lp = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double ls = log_std_.value(j, 0);
    const double eps = rng.normal();
    action[j] = mu[j] + std::exp(ls) * eps;
    lp += -0.5 * eps * eps - ls - kHalfLog2Pi;
  }
  return {action, lp};
}

diff::ParameterList GaussianPolicy::parameters() {
  diff::ParameterList out = mean_net_.parameters();
  out.push_back(&log_std_);
  return out;
}

double PpoPolicyLoss(GaussianPolicy& policy, const Matrix& states,
                     const Matrix& actions, const Vector& old_log_probs,
                     const Vector& advantages, double clip, bool backprop) {
  const Eigen::Index m = actions.cols();
  Require(m >= 1 && old_log_probs.size() == m && advantages.size() == m &&
              states.cols() == m,
          ErrorCode::kDimensionMismatch, "ppo minibatch shapes disagree");
  const Matrix mu = backprop ? policy.mean_net().forward(states)
                             : policy.mean_net().predict(states);
  const Vector log_std = policy.log_std();
  const Eigen::Index d = mu.rows();
  Matrix grad_mu = Matrix::Zero(d, m);
  Vector grad_log_std = Vector::Zero(d);
  double total = 0.0;
  for (Eigen::Index t = 0; t < m; ++t) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double z = (actions(j, t) - mu(j, t)) / std::exp(log_std[j]);
      lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
    }
    const double ratio = std::exp(lp - old_log_probs[t]);
    const double a = advantages[t];
    total -= PpoSurrogate(ratio, a, clip);
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    // The unclipped branch carries the gradient only when it is the minimum.
    if (ratio * a <= clipped * a) {
      const double dlp = -a * ratio / static_cast<double>(m);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double sigma = std::exp(log_std[j]);
        const double z = (actions(j, t) - mu(j, t)) / sigma;
        grad_mu(j, t) += dlp * z / sigma;
        grad_log_std[j] += dlp * (z * z - 1.0);
      }
    }
  }
  if (backprop) {
    policy.mean_net().backward(grad_mu);
    policy.log_std_param().grad.col(0) += grad_log_std;
  }
  return total / static_cast<double>(m);
}

StateGaussianPolicy::StateGaussianPolicy(int observation_dim, int hidden,
                                         Rng& rng)
    : net_("rps.gaussian", observation_dim, {hidden}, 2,
           diff::Activation::kRelu, rng) {}

std::pair<Vector, Vector> StateGaussianPolicy::distribution(
    const Matrix& states) const {
  const Matrix out = net_.predict(states);
  Vector log_std = out.row(1).transpose();
  for (Eigen::Index i = 0; i < log_std.size(); ++i) {
    log_std[i] = std::clamp(log_std[i], kMinLogStd, kMaxLogStd);
  }
  return {out.row(0).transpose(), log_std};
}

double StateGaussianPolicy::sample(const Vector& state, Rng& rng) const {
  auto [mu, log_std] = distribution(state);
  return mu[0] + std::exp(log_std[0]) * rng.normal();
}

double StateGaussianPolicy::log_prob(const Vector& state, double action) const {
  auto [mu, log_std] = distribution(state);
  const double z = (action - mu[0]) / std::exp(log_std[0]);
  return -0.5 * z * z - log_std[0] - kHalfLog2Pi;
}

PgUpdateStats GaussianPgUpdate(StateGaussianPolicy& policy,
                               diff::AdamState& adam, double lr,
                               const Matrix& states, const Vector& actions,
                               const Vector& rewards, double baseline) {
  const Eigen::Index n = actions.size();
  Require(n >= 1 && states.cols() == n && rewards.size() == n,
          ErrorCode::kDimensionMismatch, "one state and reward per game expected");
  for (Eigen::Index i = 0; i < n; ++i) {
    Require(rewards[i] == -1.0 || rewards[i] == 0.0 || rewards[i] == 1.0,
            ErrorCode::kInvalidArgument, "game rewards must be -1, 0 or 1");
  }
  Require(std::isfinite(baseline), ErrorCode::kNonFinite,
          "policy-gradient baseline must be finite");
  auto params = policy.parameters();
  diff::ZeroGrads(params);
  const Matrix out = policy.net().forward(states);
  Matrix grad = Matrix::Zero(2, n);
  PgUpdateStats stats;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double raw_log_std = out(1, i);
    const double log_std = std::clamp(raw_log_std, StateGaussianPolicy::kMinLogStd,
                                      StateGaussianPolicy::kMaxLogStd);
    const double sigma = std::exp(log_std);
    const double z = (actions[i] - out(0, i)) / sigma;
    const double lp = -0.5 * z * z - log_std - kHalfLog2Pi;
    const double r = rewards[i] - baseline;
    stats.loss -= r * lp / static_cast<double>(n);
    // Descend on -r * log pi.
    grad(0, i) = -r * (z / sigma) / static_cast<double>(n);
    const bool in_range = raw_log_std > StateGaussianPolicy::kMinLogStd &&
                          raw_log_std < StateGaussianPolicy::kMaxLogStd;
    grad(1, i) = in_range ? -r * (z * z - 1.0) / static_cast<double>(n) : 0.0;
  }
  policy.net().backward(grad);
  double sq = 0.0;
  for (const diff::Parameter* p : params) sq += p->grad.squaredNorm();
  stats.grad_norm = std::sqrt(sq);
  diff::AdamStep(params, adam, lr);
  return stats;
}

bool IsMonotone(const mono::MonotonicQuantileNet& net,
                const std::optional<Vector>& features, int points, double tol) {
  Require(points >= 2, ErrorCode::kInvalidArgument, "grid needs two points");
  Vector taus(points);
  for (int i = 0; i < points; ++i) {
    taus[i] = static_cast<double>(i) / (points - 1);
  }
  Vector out;
  if (features) {
    Matrix f = *features;
    out = net.predict(taus, &f, points);
  } else {
    out = net.predict(taus);
  }
  for (int i = 1; i < points; ++i) {
    if (out[i] < out[i - 1] - tol) return false;
  }
  return true;
}

TrainResult TrainQrdrl(envs::Environment& env, const QrdrlHyper& hyper,
                       std::int64_t total_steps, std::uint64_t seed,
                       const TrainOptions& options) {
  hyper.validate();
  Require(total_steps >= hyper.steps_per_update, ErrorCode::kConfig,
          "total_steps must cover at least one rollout");
  Rng root(seed);
  Rng init_rng = root.substream("qrdrl.init.policy");
  Rng critic_rng = root.substream("qrdrl.init.critic");
  Rng act_rng = root.substream("qrdrl.act");
  Rng shuffle_rng = root.substream("qrdrl.shuffle");
  Rng tau_rng = root.substream("qrdrl.loss_tau");

  QuantilePolicyConfig policy_config = options.policy;
  policy_config.feature_layers = {hyper.hidden, hyper.hidden};
  TrainResult result;
  QuantilePolicy policy(env.observation_dim(), env.action_dim(), policy_config,
                        init_rng);
  result.critic = ValueCritic(env.observation_dim(), {hyper.hidden, hyper.hidden},
                              critic_rng);
  ValueCritic& critic = result.critic;
  auto policy_params = policy.parameters();
  auto critic_params = critic.parameters();
  diff::AdamConfig adam_config{0.9, 0.999, hyper.adam_epsilon};
  diff::AdamState policy_adam(policy_params, adam_config);
  diff::AdamState critic_adam(critic_params, adam_config);

  const std::int64_t num_updates = total_steps / hyper.steps_per_update;
  const auto batch_size = static_cast<std::size_t>(hyper.steps_per_update);
  Vector obs = env.reset();
  EpisodeTracker episodes;
  std::vector<std::size_t> order(batch_size);

  try {
    for (std::int64_t u = 0; u < num_updates; ++u) {
      const double lr_now = diff::LinearDecay(
          hyper.lr, static_cast<double>(u) / static_cast<double>(num_updates));
      RolloutBatch batch;
      batch.steps.reserve(batch_size);
      for (std::size_t t = 0; t < batch_size; ++t) {
        auto [action, tau] = policy.act(obs, act_rng);
        const double v = critic.value(obs);
        envs::StepResult step = env.step(action);
        batch.steps.push_back({obs, action, tau, step.reward, v, step.done, 0.0});
        episodes.add(step.reward, step.done);
        obs = step.done ? env.reset() : step.observation;
      }
      batch.bootstrap_value = critic.value(obs);
      const AdvantageEstimates adv = Gae(batch, hyper.gamma, hyper.lambda);

      Matrix states(env.observation_dim(), static_cast<Eigen::Index>(batch_size));
      Matrix actions(env.action_dim(), static_cast<Eigen::Index>(batch_size));
      for (std::size_t t = 0; t < batch_size; ++t) {
        states.col(static_cast<Eigen::Index>(t)) = batch.steps[t].state;
        actions.col(static_cast<Eigen::Index>(t)) = batch.steps[t].action;
      }

      double policy_loss_sum = 0.0;
      double value_loss_sum = 0.0;
      int minibatches = 0;
      for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t begin = 0; begin < batch_size;
             begin += static_cast<std::size_t>(hyper.minibatch)) {
          const std::size_t end =
              std::min(batch_size, begin + static_cast<std::size_t>(hyper.minibatch));
          const Matrix s = GatherColumns(states, order, begin, end);
          const Matrix a = GatherColumns(actions, order, begin, end);
          const Vector advs = Gather(adv.advantages, order, begin, end);
          const Vector rets = Gather(adv.returns, order, begin, end);
          diff::ZeroGrads(policy_params);
          diff::ZeroGrads(critic_params);
          const double ploss = QrdrlLoss(policy, s, a, advs, hyper.beta,
                                         hyper.quantile_samples, tau_rng, true);
          const double vloss = CriticLoss(critic, s, rets, true, hyper.value_coef);
          if (!AllFinite(ploss) || !AllFinite(vloss)) {
            Fail(ErrorCode::kNonFinite, "non-finite loss at update " +
                                            std::to_string(u));
          }
          diff::AdamStep(policy_params, policy_adam, lr_now);
          diff::AdamStep(critic_params, critic_adam, lr_now);
          policy_loss_sum += ploss;
          value_loss_sum += vloss;
          ++minibatches;
        }
        if (options.check_monotonicity) {
          const Vector f = policy.features_predict(states.col(0)).col(0);
          for (const auto& net : policy.nets()) {
            if (!IsMonotone(net, f)) ++result.monotonicity_violations;
          }
        }
      }
      CurvePoint point;
      point.update = static_cast<int>(u);
      point.env_steps = (u + 1) * hyper.steps_per_update;
      point.mean_return = episodes.close_window();
      point.policy_loss = policy_loss_sum / minibatches;
      point.value_loss = value_loss_sum / minibatches;
      point.lr = lr_now;
      result.curve.push_back(point);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFinite) throw;
    result.aborted = true;
    result.abort_reason = e.what();
  }

  Rng sample_rng = root.substream("qrdrl.final_samples");
  const Vector start = env.reset();
  for (int i = 0; i < options.final_samples; ++i) {
    result.final_actions.push_back(policy.act(start, sample_rng).first[0]);
  }
  result.quantile_policy = std::move(policy);
  return result;
}

TrainResult TrainPpo(envs::Environment& env, const QrdrlHyper& hyper,
                     std::int64_t total_steps, std::uint64_t seed,
                     const TrainOptions& options) {
  hyper.validate();
  Require(total_steps >= hyper.steps_per_update, ErrorCode::kConfig,
          "total_steps must cover at least one rollout");
  Rng root(seed);
  Rng init_rng = root.substream("ppo.init.policy");
  Rng critic_rng = root.substream("ppo.init.critic");
  Rng act_rng = root.substream("ppo.act");
  Rng shuffle_rng = root.substream("ppo.shuffle");

  TrainResult result;
  GaussianPolicy policy(env.observation_dim(), env.action_dim(),
                        {hyper.hidden, hyper.hidden}, init_rng);
  result.critic = ValueCritic(env.observation_dim(), {hyper.hidden, hyper.hidden},
                              critic_rng);
  ValueCritic& critic = result.critic;
  auto policy_params = policy.parameters();
  auto critic_params = critic.parameters();
  diff::AdamConfig adam_config{0.9, 0.999, hyper.adam_epsilon};
  diff::AdamState policy_adam(policy_params, adam_config);
  diff::AdamState critic_adam(critic_params, adam_config);

  const std::int64_t num_updates = total_steps / hyper.steps_per_update;
  const auto batch_size = static_cast<std::size_t>(hyper.steps_per_update);
  Vector obs = env.reset();
  EpisodeTracker episodes;
  std::vector<std::size_t> order(batch_size);

  try {
    for (std::int64_t u = 0; u < num_updates; ++u) {
      const double lr_now = diff::LinearDecay(
          hyper.lr, static_cast<double>(u) / static_cast<double>(num_updates));
      RolloutBatch batch;
      batch.steps.reserve(batch_size);
      for (std::size_t t = 0; t < batch_size; ++t) {
        auto [action, lp] = policy.act(obs, act_rng);
        const double v = critic.value(obs);
        envs::StepResult step = env.step(action);
        batch.steps.push_back({obs, action, Vector(), step.reward, v, step.done, lp});
        episodes.add(step.reward, step.done);
        obs = step.done ? env.reset() : step.observation;
      }
      batch.bootstrap_value = critic.value(obs);
      const AdvantageEstimates adv = Gae(batch, hyper.gamma, hyper.lambda);

      Matrix states(env.observation_dim(), static_cast<Eigen::Index>(batch_size));
      Matrix actions(env.action_dim(), static_cast<Eigen::Index>(batch_size));
      std::vector<double> old_lp(batch_size);
      for (std::size_t t = 0; t < batch_size; ++t) {
        states.col(static_cast<Eigen::Index>(t)) = batch.steps[t].state;
        actions.col(static_cast<Eigen::Index>(t)) = batch.steps[t].action;
        old_lp[t] = batch.steps[t].log_prob;
      }

      double policy_loss_sum = 0.0;
      double value_loss_sum = 0.0;
      int minibatches = 0;
      for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t begin = 0; begin < batch_size;
             begin += static_cast<std::size_t>(hyper.minibatch)) {
          const std::size_t end =
              std::min(batch_size, begin + static_cast<std::size_t>(hyper.minibatch));
          const Matrix s = GatherColumns(states, order, begin, end);
          const Matrix a = GatherColumns(actions, order, begin, end);
          const Vector advs = Gather(adv.advantages, order, begin, end);
          const Vector rets = Gather(adv.returns, order, begin, end);
          const Vector olp = Gather(old_lp, order, begin, end);
          diff::ZeroGrads(policy_params);
          diff::ZeroGrads(critic_params);
          const double ploss =
              PpoPolicyLoss(policy, s, a, olp, advs, hyper.clip, true);
          const double vloss = CriticLoss(critic, s, rets, true, hyper.value_coef);
          if (!AllFinite(ploss) || !AllFinite(vloss)) {
            Fail(ErrorCode::kNonFinite, "non-finite loss at update " +
                                            std::to_string(u));
          }
          diff::AdamStep(policy_params, policy_adam, lr_now);
          diff::AdamStep(critic_params, critic_adam, lr_now);
          policy_loss_sum += ploss;
          value_loss_sum += vloss;
          ++minibatches;
        }
      }
      CurvePoint point;
      point.update = static_cast<int>(u);
      point.env_steps = (u + 1) * hyper.steps_per_update;
      point.mean_return = episodes.close_window();
      point.policy_loss = policy_loss_sum / minibatches;
      point.value_loss = value_loss_sum / minibatches;
      point.lr = lr_now;
      result.curve.push_back(point);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFinite) throw;
    result.aborted = true;
    result.abort_reason = e.what();
  }

  Rng sample_rng = root.substream("ppo.final_samples");
  const Vector start = env.reset();
  for (int i = 0; i < options.final_samples; ++i) {
    result.final_actions.push_back(policy.act(start, sample_rng).first[0]);
  }
  result.gaussian_policy = std::move(policy);
  return result;
}

}  // namespace qrp::rl
