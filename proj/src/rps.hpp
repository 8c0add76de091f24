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

// Continuous rock-paper-scissors against a countering Gaussian policy that
// is retrained from scratch every iteration.

#ifndef QRPOLICY_RPS_HPP_
#define QRPOLICY_RPS_HPP_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "envs.hpp"
#include "rlcore.hpp"
#include "rng.hpp"

namespace qrp::envs {

struct RpsConfig {
  RpsActionSpace space;
  int iterations = 200;
  int counter_games = 10000;
  int eval_games = 100;
  // Games per countering-policy gradient step.
  int counter_batch = 25;
  double counter_lr = 0.003;
  // Decay the counter's learning rate linearly to 0 over its games.
  bool counter_lr_decay = true;
  // The counter's rewards are centred on an exponential moving average of
  // past batch means with this decay; 1 keeps the baseline at 0.
  double counter_baseline_decay = 0.9;
  // Adam settings for the policy under training.
  double policy_lr = 0.003;
  int policy_steps = 10;
  int hidden = 64;
  int final_samples = 10000;
  // Previous actions enter the Gaussian nets clipped to [-clip, clip]; the
  // counter's own action feeds back into its input and can otherwise grow
  // without bound.
  double state_clip = 2.0;

  void validate() const;
};

// (action, tau) given the player's state; tau is 0 for players without one.
using RpsActor = std::function<std::pair<double, double>(const Vector&, Rng&)>;

struct RpsGame {
  Vector state;  // (own previous action, opponent previous action)
  double action = 0.0;
  double tau = 0.0;
  int reward = 0;
};

struct CounterResult {
  rl::StateGaussianPolicy policy;
  // Games played during the final counter update batch.
  double final_batch_win_rate = 0.0;
  // Continues the game sequence after training.
  double last_counter_action = 0.0;
  double last_player_action = 0.0;
};

// Trains a fresh countering policy on counter_games games against actor.
CounterResult TrainCounter(const RpsActor& actor, const RpsConfig& config,
                           Rng& rng);

struct RpsIteration {
  std::vector<RpsGame> games;  // the player's evaluation games
  double counter_win_rate = 0.0;
  double mean_reward = 0.0;
};

// One iteration: train a countering policy from scratch, then play
// eval_games games between it and the actor.
RpsIteration RpsIterate(const RpsActor& actor, std::uint64_t counter_seed,
                        const RpsConfig& config);

// Win rate of a trained counter against actor over the given number of
// games.
double CounterWinRate(const rl::StateGaussianPolicy& counter,
                      const RpsActor& actor, int games, const RpsConfig& config,
                      Rng& rng);

enum class RpsLearner { kQuantile, kGaussian };

struct RpsRunResult {
  RpsLearner learner;
  std::vector<double> returns;            // mean eval reward per iteration
  std::vector<double> counter_win_rates;  // per iteration
  std::vector<double> final_actions;
  std::optional<rl::QuantilePolicy> quantile_policy;
};

RpsRunResult RunRps(RpsLearner learner, const RpsConfig& config,
                    std::uint64_t seed);

// Trailing moving average over up to `window` points.
std::vector<double> MovingAverage(const std::vector<double>& xs, int window);

}  // namespace qrp::envs

#endif  // QRPOLICY_RPS_HPP_
