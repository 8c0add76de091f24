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

#include "envs.hpp"

#include <cmath>

#include "error.hpp"

namespace qrp::envs {

std::string ToString(RpsMove move) {
  switch (move) {
    case RpsMove::kRock:
      return "rock";
    case RpsMove::kPaper:
      return "paper";
    case RpsMove::kScissors:
      return "scissors";
    case RpsMove::kInvalid:
      return "invalid";
  }
  return "invalid";
}

RpsMove RpsActionSpace::classify(double action) const {
  for (int i = 0; i < 3; ++i) {
    if (intervals[static_cast<std::size_t>(i)].contains(action)) {
      return static_cast<RpsMove>(i);
    }
  }
  return RpsMove::kInvalid;
}

void RpsActionSpace::validate() const {
  for (std::size_t i = 0; i < 3; ++i) {
    Require(intervals[i].lo <= intervals[i].hi, ErrorCode::kInvalidArgument,
            "rps interval " + std::to_string(i) + " is reversed");
    for (std::size_t j = i + 1; j < 3; ++j) {
      bool disjoint = intervals[i].hi < intervals[j].lo ||
                      intervals[j].hi < intervals[i].lo;
      Require(disjoint, ErrorCode::kInvalidArgument,
              "rps intervals must be disjoint");
    }
  }
}

std::pair<int, int> RpsJudge(double a1, double a2, const RpsActionSpace& space) {
  const RpsMove m1 = space.classify(a1);
  const RpsMove m2 = space.classify(a2);
  if (m1 == RpsMove::kInvalid && m2 == RpsMove::kInvalid) return {0, 0};
  if (m1 == RpsMove::kInvalid) return {-1, 1};
  if (m2 == RpsMove::kInvalid) return {1, -1};
  if (m1 == m2) return {0, 0};
  // Move i beats move (i + 2) % 3: paper > rock, scissors > paper, rock > scissors.
  const int i1 = static_cast<int>(m1);
  const int i2 = static_cast<int>(m2);
  if ((i1 + 2) % 3 == i2) return {1, -1};
  return {-1, 1};
}

Button ClassifyButton(double action, const ChoiceConfig& config) {
  if (config.button_a.contains(action)) return Button::kA;
  if (config.button_b.contains(action)) return Button::kB;
  return Button::kNone;
}

ChoiceOutcome ChoiceStep(const ChoiceState& state, double action,
                         const ChoiceConfig& config) {
  Require(state.t < state.length, ErrorCode::kInvalidArgument,
          "choice episode already finished");
  ChoiceOutcome out{0.0, state, false};
  switch (ClassifyButton(action, config)) {
    case Button::kA:
      out.reward = state.pressed_a <= state.pressed_b ? 1.0 : 0.0;
      out.next.pressed_a += 1;
      break;
    case Button::kB:
      out.reward = state.pressed_b <= state.pressed_a ? 1.0 : 0.0;
      out.next.pressed_b += 1;
      break;
    case Button::kNone:
      break;
  }
  out.next.t += 1;
  out.done = out.next.t >= out.next.length;
  return out;
}

double ChoicePolicyValue(int episode_length, double p_a, double p_b) {
  Require(episode_length >= 1 && episode_length <= 16,
          ErrorCode::kInvalidArgument, "enumeration supports 1 <= L <= 16");
  Require(p_a >= 0.0 && p_b >= 0.0 && p_a + p_b <= 1.0 + 1e-12,
          ErrorCode::kInvalidArgument, "press probabilities must be a distribution");
  const double p_none = std::max(0.0, 1.0 - p_a - p_b);
  const double probs[3] = {p_a, p_b, p_none};
  const double actions[3] = {-0.5, 0.5, 0.0};
  std::size_t sequences = 1;
  for (int i = 0; i < episode_length; ++i) sequences *= 3;
  double value = 0.0;
  for (std::size_t code = 0; code < sequences; ++code) {
    ChoiceState s;
    s.length = episode_length;
    double prob = 1.0;
    double ret = 0.0;
    std::size_t rest = code;
    for (int t = 0; t < episode_length; ++t) {
      const std::size_t k = rest % 3;
      rest /= 3;
      prob *= probs[k];
      ChoiceOutcome o = ChoiceStep(s, actions[k]);
      ret += o.reward;
      s = o.next;
    }
    value += prob * ret;
  }
  return value;
}

ChoiceOptimum ChoiceOptimalMemorylessValue(int episode_length, int grid_steps) {
  Require(grid_steps >= 1, ErrorCode::kInvalidArgument, "grid needs steps");
  ChoiceOptimum best{-1.0, 0.0, 0.0};
  for (int i = 0; i <= grid_steps; ++i) {
    for (int j = 0; i + j <= grid_steps; ++j) {
      const double p_a = static_cast<double>(i) / grid_steps;
      const double p_b = static_cast<double>(j) / grid_steps;
      const double v = ChoicePolicyValue(episode_length, p_a, p_b);
      if (v > best.value) best = {v, p_a, p_b};
    }
  }
  return best;
}

ChoiceEnv::ChoiceEnv(ChoiceConfig config) : config_(config) {
  Require(config_.episode_length >= 1, ErrorCode::kInvalidArgument,
          "choice episode length must be positive");
  Require(config_.observation_dim >= 1, ErrorCode::kInvalidArgument,
          "choice observation dimension must be positive");
  state_.length = config_.episode_length;
}

Vector ChoiceEnv::reset() {
  state_ = ChoiceState{};
  state_.length = config_.episode_length;
  return Vector::Ones(config_.observation_dim);
}

StepResult ChoiceEnv::step(const Vector& action) {
  Require(action.size() == 1, ErrorCode::kDimensionMismatch,
          "choice expects a scalar action");
  ChoiceOutcome o = ChoiceStep(state_, action[0], config_);
  state_ = o.next;
  return {Vector::Ones(config_.observation_dim), o.reward, o.done};
}

Histogram MakeHistogram(const std::vector<double>& samples, int bins, double lo,
                        double hi) {
  Require(bins >= 1 && hi > lo, ErrorCode::kInvalidArgument,
          "histogram needs bins >= 1 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (int i = 0; i <= bins; ++i) {
    h.edges.push_back(lo + (hi - lo) * i / bins);
  }
  for (double x : samples) {
    ++h.total;
    if (x < lo) {
      ++h.below;
    } else if (x > hi) {
      ++h.above;
    } else {
      auto bin = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
      if (bin == bins) bin = bins - 1;
      ++h.counts[static_cast<std::size_t>(bin)];
    }
  }
  return h;
}

double MassInside(const std::vector<double>& samples, const Interval& interval) {
  if (samples.empty()) return 0.0;
  std::size_t n = 0;
  for (double x : samples) n += interval.contains(x) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

}  // namespace qrp::envs
