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

// Monotonic quantile networks: one-hidden-layer approximators of a quantile
// function G(tau[, features]) that are non-decreasing in tau for every
// parameter setting. All weights on the tau path are exp-positive.
//
//   kReluSplit    W2 * split(W1 x + b1 + F f) + b2, split = relu on the first
//                 ceil(H/2) units, inv_relu on the rest.
//   kTanhPositive W2 * tanh(W1 x + b1 + F f) + b2
//   kMaxMin       min over groups of max within group of (W1 x + b1 + F f)
//
// x = 2 tau - 1 is the scaled quantile input and F is an optional
// unconstrained feature injection.

#ifndef QRPOLICY_MONONET_HPP_
#define QRPOLICY_MONONET_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diffcore.hpp"
#include "rng.hpp"

namespace qrp::mono {

enum class Architecture { kReluSplit, kTanhPositive, kMaxMin };

std::string ToString(Architecture arch);
Architecture ParseArchitecture(const std::string& name);

struct QuantileInput {
  double tau;
  double scaled;

  // Throws kInvalidArgument for tau outside [0, 1].
  static QuantileInput FromTau(double tau);
};

struct NetConfig {
  Architecture architecture = Architecture::kReluSplit;
  int hidden_width = 64;
  // Units per max-group; only used by kMaxMin.
  int group_size = 8;
  // Dimension of the injected state features, 0 for none.
  int feature_dim = 0;
  double sigma = 3.0;
};

// Per-batch values kept by forward() for backward(). Hidden pre-activations
// are recomputed in backward() rather than stored.
struct ForwardCache {
  Vector scaled;                     // N
  Matrix injected;                   // H x M feature injection
  Matrix features;                   // feature_dim x M
  std::vector<Eigen::Index> winner;  // kMaxMin: selected hidden row per sample
  Eigen::Index repeat = 1;
  Eigen::Index batch = 0;
};

class MonotonicQuantileNet {
 public:
  MonotonicQuantileNet() = default;

  // Weights ~ log(U(0, sqrt(sigma / fan_in))), biases 0. The feature
  // injection (if any) is initialized with a Glorot-uniform draw.
  static MonotonicQuantileNet Init(const NetConfig& config, std::uint64_t seed);
  static MonotonicQuantileNet Init(const NetConfig& config, Rng& rng);

  // Forward on a batch of quantile levels. features is feature_dim x M and
  // sample n uses column n / repeat (so M * repeat == taus.size()). Caches
  // the batch for backward().
  Vector forward(const Vector& taus, const Matrix* features = nullptr,
                 Eigen::Index repeat = 1);
  // Accumulates parameter gradients for dL/doutput and returns dL/dfeatures
  // (feature_dim x M, summed over repeats); empty when there are no features.
  Matrix backward(const Vector& grad_out);

  // Stateless evaluation.
  Vector predict(const Vector& taus, const Matrix* features = nullptr,
                 Eigen::Index repeat = 1) const;
  double evaluate(double tau) const;
  double evaluate(double tau, const Vector& features) const;

  const NetConfig& config() const { return config_; }
  Architecture architecture() const { return config_.architecture; }
  int hidden_width() const { return config_.hidden_width; }
  int feature_dim() const { return config_.feature_dim; }
  int relu_units() const;
  std::uint64_t seed() const { return seed_; }

  diff::Linear& input_layer() { return input_; }
  diff::Linear& output_layer() { return output_; }
  diff::Parameter& feature_weight() { return feature_weight_; }
  const diff::Linear& input_layer() const { return input_; }
  const diff::Linear& output_layer() const { return output_; }

  diff::ParameterList parameters();
  std::vector<const diff::Parameter*> parameters() const;

 private:
  // Validates the batch, fills scaled inputs and the feature injection.
  void prepare(const Vector& taus, const Matrix* features, Eigen::Index repeat,
               Vector& scaled, Matrix& injected) const;
  // Output for one sample given its hidden pre-activation.
  double head_one(const double* pre, const Eigen::Ref<const Vector>& w_out,
                  double b_out, Eigen::Index* winner) const;
  Vector run(const Vector& scaled, const Matrix& injected, Eigen::Index repeat,
             std::vector<Eigen::Index>* winner) const;

  NetConfig config_;
  std::uint64_t seed_ = 0;
  diff::Linear input_;
  diff::Linear output_;  // unused by kMaxMin
  diff::Parameter feature_weight_;
  ForwardCache cache_;
};

// Draws one tau per net and returns (action, tau).
std::pair<Vector, Vector> ActionSample(
    const std::vector<MonotonicQuantileNet>& nets,
    const std::optional<Vector>& features, Rng& rng);

// Checkpoint: 8-byte magic, u64 little-endian header length, JSON header,
// then every parameter value as little-endian float64 in header order
// (column-major within a parameter).
void SaveNet(const MonotonicQuantileNet& net, const std::string& path);
MonotonicQuantileNet LoadNet(const std::string& path);
std::string SerializeNet(const MonotonicQuantileNet& net);
MonotonicQuantileNet DeserializeNet(const std::string& bytes);

}  // namespace qrp::mono

#endif  // QRPOLICY_MONONET_HPP_
