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

#ifndef QRPOLICY_ENVS_HPP_
#define QRPOLICY_ENVS_HPP_

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "diffcore.hpp"

namespace qrp::envs {

struct Interval {
  double lo;
  double hi;
  bool contains(double x) const { return x >= lo && x <= hi; }
  double width() const { return hi - lo; }
};

enum class RpsMove { kRock = 0, kPaper = 1, kScissors = 2, kInvalid = 3 };

std::string ToString(RpsMove move);

// Three disjoint closed intervals; every other real is invalid.
struct RpsActionSpace {
  std::array<Interval, 3> intervals{Interval{-1.25, -0.75},
                                    Interval{-0.25, 0.25},
                                    Interval{0.75, 1.25}};

  RpsMove classify(double action) const;
  // Throws kInvalidArgument when intervals overlap or are reversed.
  void validate() const;
};

// Rewards (r1, r2) in {-1, 0, 1}, r1 + r2 = 0. Rock beats Scissors, Paper
// beats Rock, Scissors beats Paper; an invalid action loses to any valid one
// and two invalid actions draw.
std::pair<int, int> RpsJudge(double a1, double a2,
                             const RpsActionSpace& space = {});

struct ChoiceConfig {
  int episode_length = 8;
  Interval button_a{-0.6, -0.4};
  Interval button_b{0.4, 0.6};
  int observation_dim = 2;
};

struct ChoiceState {
  int pressed_a = 0;
  int pressed_b = 0;
  int t = 0;
  int length = 8;
};

struct ChoiceOutcome {
  double reward;
  ChoiceState next;
  bool done;
};

enum class Button { kA, kB, kNone };
Button ClassifyButton(double action, const ChoiceConfig& config);

// A press is rewarded when that button's count so far is not larger than the
// other's (ties reward either button). Presses outside both buttons earn 0
// and leave the counts unchanged.
ChoiceOutcome ChoiceStep(const ChoiceState& state, double action,
                         const ChoiceConfig& config = {});

// Expected episode return of the memoryless policy that presses A with
// probability p_a, B with probability p_b and misses otherwise, by explicit
// enumeration of all 3^L press sequences.
double ChoicePolicyValue(int episode_length, double p_a, double p_b);

struct ChoiceOptimum {
  double value;
  double p_a;
  double p_b;
};

// Brute-force maximum of ChoicePolicyValue over a simplex grid with the
// given number of steps per unit probability.
ChoiceOptimum ChoiceOptimalMemorylessValue(int episode_length,
                                           int grid_steps = 100);

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vector reset() = 0;
  virtual StepResult step(const Vector& action) = 0;
  virtual std::string name() const = 0;
};

// The memoryless agent sees a constant vector of ones.
class ChoiceEnv : public Environment {
 public:
  explicit ChoiceEnv(ChoiceConfig config = {});

  int observation_dim() const override { return config_.observation_dim; }
  int action_dim() const override { return 1; }
  Vector reset() override;
  StepResult step(const Vector& action) override;
  std::string name() const override { return "choice"; }

  const ChoiceState& state() const { return state_; }
  const ChoiceConfig& config() const { return config_; }

 private:
  ChoiceConfig config_;
  ChoiceState state_;
};

// Histogram over [lo, hi] with equal-width bins; out-of-range samples are
// counted separately.
struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t below = 0;
  std::size_t above = 0;
  std::size_t total = 0;
};

Histogram MakeHistogram(const std::vector<double>& samples, int bins, double lo,
                        double hi);
double MassInside(const std::vector<double>& samples, const Interval& interval);

}  // namespace qrp::envs

#endif  // QRPOLICY_ENVS_HPP_
