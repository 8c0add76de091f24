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

// Reverse-mode differentiation for small dense networks.
//
// Batches are stored column-wise: an (features x batch) matrix holds one
// sample per column. Each layer caches what its backward pass needs during
// forward(); backward() accumulates parameter gradients and returns the
// gradient with respect to the layer input. Networks chain layers by calling
// backward() in reverse order.

#ifndef QRPOLICY_DIFFCORE_HPP_
#define QRPOLICY_DIFFCORE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"

namespace qrp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace diff {

enum class Constraint { kUnconstrained, kExpPositive };

// A trainable tensor. For kExpPositive the stored value is the unconstrained
// log-weight and the weight seen by the network is exp(value).
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Constraint constraint = Constraint::kUnconstrained;

  Parameter() = default;
  Parameter(std::string name, Eigen::Index rows, Eigen::Index cols,
            Constraint constraint);

  Matrix effective() const;
  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

using ParameterList = std::vector<Parameter*>;

void ZeroGrads(std::span<Parameter* const> params);
std::size_t CountValues(std::span<Parameter* const> params);

// y = W_eff x + b
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features,
         Constraint weight_constraint);

  Matrix forward(const Matrix& x);
  Matrix predict(const Matrix& x) const;
  Matrix backward(const Matrix& grad_out);

  int in_features() const { return static_cast<int>(weight_.value.cols()); }
  int out_features() const { return static_cast<int>(weight_.value.rows()); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }
  void append_parameters(ParameterList& out);

 private:
  Parameter weight_;
  Parameter bias_;
  Matrix input_cache_;
  Matrix weight_cache_;
};

enum class Activation { kIdentity, kRelu, kInvRelu, kTanh };

double Activate(Activation act, double x);
// Derivative evaluated at pre-activation x; the relu/inv_relu kink uses 0.
double ActivateDerivative(Activation act, double x);

Matrix Apply(Activation act, const Matrix& pre);
Matrix ApplyBackward(Activation act, const Matrix& pre, const Matrix& grad_out);

// Rows [0, split) use relu and rows [split, n) use inv_relu.
Matrix ApplySplit(int split, const Matrix& pre);
Matrix ApplySplitBackward(int split, const Matrix& pre, const Matrix& grad_out);

// Initialization helpers for unconstrained layers.
void InitUniform(Parameter& p, double bound, Rng& rng);
void InitGlorot(Linear& layer, Rng& rng, double gain = 1.0);

// Fully connected stack with a shared hidden activation and an identity
// output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, int in_features, std::vector<int> hidden,
      int out_features, Activation hidden_activation, Rng& rng,
      double output_gain = 1.0);

  Matrix forward(const Matrix& x);
  Matrix predict(const Matrix& x) const;
  Matrix backward(const Matrix& grad_out);

  int in_features() const { return layers_.front().in_features(); }
  int out_features() const { return layers_.back().out_features(); }
  ParameterList parameters();
  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation hidden_activation_ = Activation::kTanh;
  std::vector<Matrix> pre_cache_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  AdamState() = default;
  AdamState(std::span<Parameter* const> params, AdamConfig config = {});
};

// One Adam update with bias correction. Gradients are left in place.
// Throws Error(kNonFinite) before touching any value if a gradient entry is
// not finite.
void AdamStep(std::span<Parameter* const> params, AdamState& state,
              double lr_now);

// Learning rate after a fraction of training has elapsed: lr * (1 - f).
double LinearDecay(double lr, double fraction);

}  // namespace diff
}  // namespace qrp

#endif  // QRPOLICY_DIFFCORE_HPP_
