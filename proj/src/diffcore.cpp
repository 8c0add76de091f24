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

#include "diffcore.hpp"

#include <cmath>
#include <sstream>

#include "error.hpp"

namespace qrp::diff {

Parameter::Parameter(std::string name, Eigen::Index rows, Eigen::Index cols,
                     Constraint constraint)
    : name(std::move(name)),
      value(Matrix::Zero(rows, cols)),
      grad(Matrix::Zero(rows, cols)),
      constraint(constraint) {}

Matrix Parameter::effective() const {
  if (constraint == Constraint::kExpPositive) return value.array().exp();
  return value;
}

void ZeroGrads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

std::size_t CountValues(std::span<Parameter* const> params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

Linear::Linear(std::string name, int in_features, int out_features,
               Constraint weight_constraint)
    : weight_(name + ".weight", out_features, in_features, weight_constraint),
      bias_(name + ".bias", out_features, 1, Constraint::kUnconstrained) {
  Require(in_features > 0 && out_features > 0, ErrorCode::kInvalidArgument,
          "linear layer " + name + " needs positive dimensions");
}

Matrix Linear::predict(const Matrix& x) const {
  if (x.rows() != weight_.value.cols()) {
    std::ostringstream msg;
    msg << weight_.name << ": input has " << x.rows() << " rows, expected "
        << weight_.value.cols();
    Fail(ErrorCode::kDimensionMismatch, msg.str());
  }
  Matrix y = weight_.effective() * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::forward(const Matrix& x) {
  if (x.rows() != weight_.value.cols()) return predict(x);  // throws
  weight_cache_ = weight_.effective();
  input_cache_ = x;
  Matrix y = weight_cache_ * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  Require(grad_out.cols() == input_cache_.cols() &&
              grad_out.rows() == weight_cache_.rows(),
          ErrorCode::kDimensionMismatch,
          weight_.name + ": backward called without a matching forward");
  Matrix grad_w = grad_out * input_cache_.transpose();
  if (weight_.constraint == Constraint::kExpPositive) {
    weight_.grad.array() += grad_w.array() * weight_cache_.array();
  } else {
    weight_.grad += grad_w;
  }
  bias_.grad.col(0) += grad_out.rowwise().sum();
  return weight_cache_.transpose() * grad_out;
}

void Linear::append_parameters(ParameterList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

double Activate(Activation act, double x) {
  switch (act) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kInvRelu:
      return x < 0.0 ? x : 0.0;
    case Activation::kTanh:
      return std::tanh(x);
  }
  return x;
}

double ActivateDerivative(Activation act, double x) {
  switch (act) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::kInvRelu:
      return x < 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

Matrix Apply(Activation act, const Matrix& pre) {
  switch (act) {
    case Activation::kIdentity:
      return pre;
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kInvRelu:
      return pre.cwiseMin(0.0);
    case Activation::kTanh:
      return pre.array().tanh();
  }
  return pre;
}

Matrix ApplyBackward(Activation act, const Matrix& pre,
                     const Matrix& grad_out) {
  switch (act) {
    case Activation::kIdentity:
      return grad_out;
    case Activation::kRelu:
      return (pre.array() > 0.0).select(grad_out, 0.0);
    case Activation::kInvRelu:
      return (pre.array() < 0.0).select(grad_out, 0.0);
    case Activation::kTanh: {
      Eigen::ArrayXXd t = pre.array().tanh();
      return (grad_out.array() * (1.0 - t.square())).matrix();
    }
  }
  return grad_out;
}

Matrix ApplySplit(int split, const Matrix& pre) {
  Matrix out(pre.rows(), pre.cols());
  out.topRows(split) = pre.topRows(split).cwiseMax(0.0);
  out.bottomRows(pre.rows() - split) =
      pre.bottomRows(pre.rows() - split).cwiseMin(0.0);
  return out;
}

Matrix ApplySplitBackward(int split, const Matrix& pre,
                          const Matrix& grad_out) {
  Matrix out(pre.rows(), pre.cols());
  const auto rest = pre.rows() - split;
  out.topRows(split) =
      (pre.topRows(split).array() > 0.0).select(grad_out.topRows(split), 0.0);
  out.bottomRows(rest) = (pre.bottomRows(rest).array() < 0.0)
                             .select(grad_out.bottomRows(rest), 0.0);
  return out;
}

void InitUniform(Parameter& p, double bound, Rng& rng) {
  for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
      p.value(i, j) = rng.uniform(-bound, bound);
    }
  }
}

void InitGlorot(Linear& layer, Rng& rng, double gain) {
  double bound = gain * std::sqrt(6.0 / (layer.in_features() +
                                         layer.out_features()));
  InitUniform(layer.weight(), bound, rng);
  layer.bias().value.setZero();
}

Mlp::Mlp(std::string name, int in_features, std::vector<int> hidden,
         int out_features, Activation hidden_activation, Rng& rng,
         double output_gain)
    : hidden_activation_(hidden_activation) {
  int prev = in_features;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(name + ".l" + std::to_string(i), prev, hidden[i],
                         Constraint::kUnconstrained);
    InitGlorot(layers_.back(), rng);
    prev = hidden[i];
  }
  layers_.emplace_back(name + ".out", prev, out_features,
                       Constraint::kUnconstrained);
  InitGlorot(layers_.back(), rng, output_gain);
}

Matrix Mlp::forward(const Matrix& x) {
  pre_cache_.clear();
  Matrix h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    pre_cache_.push_back(layers_[i].forward(h));
    h = Apply(hidden_activation_, pre_cache_.back());
  }
  return layers_.back().forward(h);
}

Matrix Mlp::predict(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = Apply(hidden_activation_, layers_[i].predict(h));
  }
  return layers_.back().predict(h);
}

Matrix Mlp::backward(const Matrix& grad_out) {
  Matrix g = layers_.back().backward(grad_out);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) {
    g = ApplyBackward(hidden_activation_, pre_cache_[i], g);
    g = layers_[i].backward(g);
  }
  return g;
}

ParameterList Mlp::parameters() {
  ParameterList out;
  for (Linear& l : layers_) l.append_parameters(out);
  return out;
}

AdamState::AdamState(std::span<Parameter* const> params, AdamConfig config)
    : config(config) {
  for (const Parameter* p : params) {
    m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamStep(std::span<Parameter* const> params, AdamState& state,
              double lr_now) {
  Require(params.size() == state.m.size(), ErrorCode::kDimensionMismatch,
          "adam state does not match the parameter set");
  for (const Parameter* p : params) {
    if (!p->grad.allFinite()) {
      Fail(ErrorCode::kNonFinite,
           "non-finite gradient in parameter " + p->name);
    }
  }
  state.t += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const double step = lr_now * std::sqrt(correction2) / correction1;
  // Epsilon is applied to the bias-corrected second moment.
  const double eps_hat = c.epsilon * std::sqrt(correction2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * p.grad;
    state.v[i].array() = c.beta2 * state.v[i].array() +
                         (1.0 - c.beta2) * p.grad.array().square();
    p.value.array() -=
        step * state.m[i].array() / (state.v[i].array().sqrt() + eps_hat);
  }
}

double LinearDecay(double lr, double fraction) {
  return lr * (1.0 - fraction);
}

}  // namespace qrp::diff
