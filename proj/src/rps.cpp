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

#include "rps.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace qrp::envs {
namespace {

Vector State(double own, double other, double clip) {
  Vector s(2);
  s << std::clamp(own, -clip, clip), std::clamp(other, -clip, clip);
  return s;
}

}  // namespace

void RpsConfig::validate() const {
  space.validate();
  Require(iterations >= 1 && counter_games >= 1 && eval_games >= 1 &&
              counter_batch >= 1 && policy_steps >= 0 && hidden >= 1 &&
              final_samples >= 0 && state_clip > 0.0,
          ErrorCode::kConfig, "rps game and iteration counts must be positive");
  Require(counter_lr > 0.0 && policy_lr > 0.0, ErrorCode::kConfig,
          "rps learning rates must be positive");
  Require(counter_baseline_decay >= 0.0 && counter_baseline_decay <= 1.0,
          ErrorCode::kConfig, "counter_baseline_decay must lie in [0, 1]");
}

CounterResult TrainCounter(const RpsActor& actor, const RpsConfig& config,
                           Rng& rng) {
  Rng init_rng = rng.substream("counter.init");
  Rng play_rng = rng.substream("counter.play");
  Rng actor_rng = rng.substream("counter.opponent");
  CounterResult result{rl::StateGaussianPolicy(2, config.hidden, init_rng)};
  diff::AdamState adam(result.policy.parameters());

  const auto batch = static_cast<Eigen::Index>(config.counter_batch);
  Matrix states(2, batch);
  Vector actions(batch);
  Vector rewards(batch);
  Eigen::Index filled = 0;
  double counter_last = 0.0;
  double player_last = 0.0;
  int wins = 0;
  double baseline = 0.0;
  for (int g = 0; g < config.counter_games; ++g) {
    const Vector counter_state = State(counter_last, player_last, config.state_clip);
    const double counter_action = result.policy.sample(counter_state, play_rng);
    const double player_action =
        actor(State(player_last, counter_last, config.state_clip), actor_rng).first;
    const int r = RpsJudge(counter_action, player_action, config.space).first;
    states.col(filled) = counter_state;
    actions[filled] = counter_action;
    rewards[filled] = r;
    wins += r > 0 ? 1 : 0;
    ++filled;
    counter_last = counter_action;
    player_last = player_action;
    const bool last_game = g + 1 == config.counter_games;
    if (filled == batch || last_game) {
      const int played_before = g + 1 - static_cast<int>(filled);
      const double lr =
          config.counter_lr_decay
              ? diff::LinearDecay(config.counter_lr,
                                  static_cast<double>(played_before) / config.counter_games)
              : config.counter_lr;
      rl::GaussianPgUpdate(result.policy, adam, lr,
                           states.leftCols(filled), actions.head(filled),
                           rewards.head(filled), baseline);
      baseline = config.counter_baseline_decay * baseline +
                 (1.0 - config.counter_baseline_decay) * rewards.head(filled).mean();
      result.final_batch_win_rate = static_cast<double>(wins) / filled;
      filled = 0;
      wins = 0;
    }
  }
  result.last_counter_action = counter_last;
  result.last_player_action = player_last;
  return result;
}

double CounterWinRate(const rl::StateGaussianPolicy& counter,
                      const RpsActor& actor, int games, const RpsConfig& config,
                      Rng& rng) {
  Require(games >= 1, ErrorCode::kInvalidArgument, "need at least one game");
  double counter_last = 0.0;
  double player_last = 0.0;
  int wins = 0;
  for (int g = 0; g < games; ++g) {
    const double c = counter.sample(State(counter_last, player_last, config.state_clip), rng);
    const double p = actor(State(player_last, counter_last, config.state_clip), rng).first;
    wins += RpsJudge(c, p, config.space).first > 0 ? 1 : 0;
    counter_last = c;
    player_last = p;
  }
  return static_cast<double>(wins) / games;
}

RpsIteration RpsIterate(const RpsActor& actor, std::uint64_t counter_seed,
                        const RpsConfig& config) {
  config.validate();
  Rng rng(counter_seed);
  Rng counter_rng = rng.substream("rps.counter");
  CounterResult counter = TrainCounter(actor, config, counter_rng);

  Rng play_rng = rng.substream("rps.eval.counter");
  Rng actor_rng = rng.substream("rps.eval.player");
  RpsIteration it;
  double counter_last = counter.last_counter_action;
  double player_last = counter.last_player_action;
  int counter_wins = 0;
  double total = 0.0;
  for (int g = 0; g < config.eval_games; ++g) {
    const Vector player_state = State(player_last, counter_last, config.state_clip);
    const double c =
        counter.policy.sample(State(counter_last, player_last, config.state_clip), play_rng);
    const auto [p, tau] = actor(player_state, actor_rng);
    const int r = RpsJudge(p, c, config.space).first;
    it.games.push_back({player_state, p, tau, r});
    counter_wins += r < 0 ? 1 : 0;
    total += r;
    counter_last = c;
    player_last = p;
  }
  it.counter_win_rate = static_cast<double>(counter_wins) / config.eval_games;
  it.mean_reward = total / config.eval_games;
  return it;
}

RpsRunResult RunRps(RpsLearner learner, const RpsConfig& config,
                    std::uint64_t seed) {
  config.validate();
  Rng root(seed);
  Rng init_rng = root.substream("rps.init");
  Rng update_rng = root.substream("rps.update");

  RpsRunResult result;
  result.learner = learner;
  rl::QuantilePolicy quantile;
  rl::StateGaussianPolicy gaussian;
  diff::ParameterList params;
  if (learner == RpsLearner::kQuantile) {
    rl::QuantilePolicyConfig pc;
    pc.hidden_width = config.hidden;
    pc.feature_layers.clear();
    quantile = rl::QuantilePolicy(0, 1, pc, init_rng);
    params = quantile.parameters();
  } else {
    gaussian = rl::StateGaussianPolicy(2, config.hidden, init_rng);
    params = gaussian.parameters();
  }
  diff::AdamState adam(params);

  RpsActor actor;
  if (learner == RpsLearner::kQuantile) {
    actor = [&quantile](const Vector&, Rng& rng) {
      const double tau = rng.uniform();
      return std::make_pair(quantile.nets()[0].evaluate(tau), tau);
    };
  } else {
    actor = [&gaussian](const Vector& state, Rng& rng) {
      return std::make_pair(gaussian.sample(state, rng), 0.0);
    };
  }

  for (int i = 0; i < config.iterations; ++i) {
    const std::uint64_t counter_seed =
        root.substream("rps.iteration", static_cast<std::uint64_t>(i)).next_u64();
    RpsIteration it = RpsIterate(actor, counter_seed, config);
    result.returns.push_back(it.mean_reward);
    result.counter_win_rates.push_back(it.counter_win_rate);

    const auto n = static_cast<Eigen::Index>(it.games.size());
    Matrix states(2, n);
    Matrix actions(1, n);
    Vector rewards(n);
    for (Eigen::Index g = 0; g < n; ++g) {
      states.col(g) = it.games[static_cast<std::size_t>(g)].state;
      actions(0, g) = it.games[static_cast<std::size_t>(g)].action;
      rewards[g] = it.games[static_cast<std::size_t>(g)].reward;
    }
    for (int step = 0; step < config.policy_steps; ++step) {
      if (learner == RpsLearner::kQuantile) {
        // Bandit form of the advantage-weighted objective: weight r, K = 1.
        Matrix taus(1, n);
        for (Eigen::Index g = 0; g < n; ++g) taus(0, g) = update_rng.uniform();
        diff::ZeroGrads(params);
        rl::WeightedQuantileLoss(quantile, Matrix(), actions, rewards, taus, true);
        diff::AdamStep(params, adam, config.policy_lr);
      } else {
        rl::GaussianPgUpdate(gaussian, adam, config.policy_lr, states,
                             actions.row(0).transpose(), rewards);
      }
    }
  }

  Rng sample_rng = root.substream("rps.final_samples");
  const Vector start = Vector::Zero(2);
  for (int i = 0; i < config.final_samples; ++i) {
    result.final_actions.push_back(actor(start, sample_rng).first);
  }
  if (learner == RpsLearner::kQuantile) result.quantile_policy = std::move(quantile);
  return result;
}

std::vector<double> MovingAverage(const std::vector<double>& xs, int window) {
  Require(window >= 1, ErrorCode::kInvalidArgument, "window must be >= 1");
  std::vector<double> out(xs.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum += xs[i];
    if (i >= static_cast<std::size_t>(window)) sum -= xs[i - static_cast<std::size_t>(window)];
    const std::size_t count = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

}  // namespace qrp::envs
