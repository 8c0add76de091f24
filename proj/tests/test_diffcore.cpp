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

#include <cmath>
#include <vector>

#include "doctest.h"

#include "diffcore.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "test_util.hpp"

namespace qrp::diff {
namespace {

Matrix RandomMatrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                    double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

void Randomize(ParameterList params, Rng& rng, double scale) {
  for (Parameter* p : params) p->value = RandomMatrix(p->value.rows(), p->value.cols(), rng, scale);
}

TEST_CASE("linear: exp-positive zero log-weight is the identity") {
  Linear layer("l", 1, 1, Constraint::kExpPositive);
  Matrix x(1, 1);
  x << 0.7;
  CHECK(layer.predict(x)(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("linear: unconstrained affine example") {
  Linear layer("l", 1, 1, Constraint::kUnconstrained);
  layer.weight().value(0, 0) = 2.0;
  layer.bias().value(0, 0) = 1.0;
  Matrix x(1, 1);
  x << 3.0;
  CHECK(layer.forward(x)(0, 0) == 7.0);
}

TEST_CASE("linear: shape mismatch is reported") {
  Linear layer("l", 3, 4, Constraint::kUnconstrained);
  Matrix x = Matrix::Zero(2, 5);
  try {
    layer.forward(x);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
  }
}

TEST_CASE("linear: gradients match finite differences on 100 configurations") {
  Rng rng(11);
  for (Constraint c : {Constraint::kUnconstrained, Constraint::kExpPositive}) {
    for (int trial = 0; trial < 100; ++trial) {
      Linear layer("l", 3, 4, c);
      ParameterList params;
      layer.append_parameters(params);
      Randomize(params, rng, 0.5);
      const Matrix x = RandomMatrix(3, 5, rng);
      const Matrix upstream = RandomMatrix(4, 5, rng);
      ZeroGrads(params);
      const Matrix y = layer.forward(x);
      CHECK(y.rows() == 4);
      CHECK(y.cols() == 5);
      layer.backward(upstream);
      auto loss = [&] { return (layer.predict(x).array() * upstream.array()).sum(); };
      auto check = testing::CheckGradients(params, loss);
      INFO(check.where);
      CHECK(check.worst <= 1e-4);
    }
  }
}

TEST_CASE("linear: input gradient matches finite differences") {
  Rng rng(12);
  Linear layer("l", 3, 4, Constraint::kExpPositive);
  ParameterList params;
  layer.append_parameters(params);
  Randomize(params, rng, 0.5);
  Matrix x = RandomMatrix(3, 2, rng);
  const Matrix upstream = RandomMatrix(4, 2, rng);
  layer.forward(x);
  const Matrix gx = layer.backward(upstream);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + 1e-5;
    const double up = (layer.predict(x).array() * upstream.array()).sum();
    x.data()[i] = saved - 1e-5;
    const double down = (layer.predict(x).array() * upstream.array()).sum();
    x.data()[i] = saved;
    CHECK(gx.data()[i] == doctest::Approx((up - down) / 2e-5).epsilon(1e-6));
  }
}

TEST_CASE("activations: examples") {
  CHECK(Activate(Activation::kRelu, -2.0) == 0.0);
  CHECK(Activate(Activation::kInvRelu, -2.0) == -2.0);
  CHECK(Activate(Activation::kRelu, 3.0) + Activate(Activation::kInvRelu, 3.0) == 3.0);
  Matrix pre(1, 1), up(1, 1);
  pre << 1.5;
  up << 2.0;
  CHECK(ApplyBackward(Activation::kRelu, pre, up)(0, 0) == 2.0);
  CHECK(ApplyBackward(Activation::kInvRelu, pre, up)(0, 0) == 0.0);
  CHECK(Activate(Activation::kTanh, 0.3) == std::tanh(0.3));
}

TEST_CASE("activations: split applies relu then inv_relu rows") {
  Matrix pre(4, 1);
  pre << -1.0, 2.0, -3.0, 4.0;
  const Matrix out = ApplySplit(2, pre);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == 2.0);
  CHECK(out(2, 0) == -3.0);
  CHECK(out(3, 0) == 0.0);
  const Matrix back = ApplySplitBackward(2, pre, Matrix::Ones(4, 1));
  CHECK(back(0, 0) == 0.0);
  CHECK(back(1, 0) == 1.0);
  CHECK(back(2, 0) == 1.0);
  CHECK(back(3, 0) == 0.0);
}

TEST_CASE("activations: derivatives match finite differences away from kinks") {
  Rng rng(13);
  for (Activation act : {Activation::kIdentity, Activation::kRelu,
                         Activation::kInvRelu, Activation::kTanh}) {
    for (int trial = 0; trial < 100; ++trial) {
      double x = rng.uniform(-3.0, 3.0);
      if (std::abs(x) <= 1e-3) continue;
      const double numeric =
          (Activate(act, x + 1e-5) - Activate(act, x - 1e-5)) / 2e-5;
      CHECK(ActivateDerivative(act, x) == doctest::Approx(numeric).epsilon(1e-4));
    }
  }
}

TEST_CASE("mlp: gradients match finite differences on 100 configurations") {
  Rng rng(14);
  for (Activation act : {Activation::kTanh, Activation::kRelu}) {
    int checked = 0;
    while (checked < 100) {
      Mlp mlp("m", 3, {5, 4}, 2, act, rng);
      ParameterList params = mlp.parameters();
      const Matrix x = RandomMatrix(3, 4, rng);
      // Reject configurations with a hidden pre-activation near a kink.
      bool near_kink = false;
      if (act == Activation::kRelu) {
        Matrix h = x;
        for (std::size_t l = 0; l + 1 < mlp.layers().size(); ++l) {
          h = mlp.layers()[l].predict(h);
          if ((h.array().abs() <= 1e-3).any()) near_kink = true;
          h = Apply(act, h);
        }
      }
      if (near_kink) continue;
      ++checked;
      const Matrix upstream = RandomMatrix(2, 4, rng);
      ZeroGrads(params);
      mlp.forward(x);
      mlp.backward(upstream);
      auto loss = [&] { return (mlp.predict(x).array() * upstream.array()).sum(); };
      auto check = testing::CheckGradients(params, loss);
      INFO(check.where);
      CHECK(check.worst <= 1e-4);
    }
  }
}

TEST_CASE("zero upstream gradient leaves all gradients zero") {
  Rng rng(15);
  Mlp mlp("m", 2, {6}, 3, Activation::kTanh, rng);
  ParameterList params = mlp.parameters();
  ZeroGrads(params);
  mlp.forward(RandomMatrix(2, 7, rng));
  mlp.backward(Matrix::Zero(3, 7));
  for (Parameter* p : params) CHECK(p->grad.isZero(0.0));
}

TEST_CASE("exp-positive parameters give strictly positive effective weights") {
  Rng rng(16);
  Parameter p("p", 4, 4, Constraint::kExpPositive);
  p.value = RandomMatrix(4, 4, rng, 30.0);
  CHECK((p.effective().array() > 0.0).all());
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Rng rng(17);
  Parameter p("p", 3, 2, Constraint::kUnconstrained);
  p.value = RandomMatrix(3, 2, rng);
  const Matrix before = p.value;
  ParameterList params{&p};
  AdamState state(params);
  for (int i = 0; i < 3; ++i) AdamStep(params, state, 0.1);
  CHECK(p.value == before);
}

TEST_CASE("adam: first step has the closed form lr / (1 + eps)") {
  Parameter p("p", 1, 1, Constraint::kUnconstrained);
  p.grad(0, 0) = 1.0;
  ParameterList params{&p};
  AdamState state(params, AdamConfig{0.9, 0.999, 1e-5});
  AdamStep(params, state, 0.1);
  CHECK(p.value(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-5)).epsilon(1e-12));
  CHECK(state.t == 1);
}

TEST_CASE("adam: non-finite gradient throws before any update") {
  Parameter a("a", 1, 1, Constraint::kUnconstrained);
  Parameter b("b", 1, 1, Constraint::kUnconstrained);
  a.grad(0, 0) = 1.0;
  b.grad(0, 0) = std::nan("");
  ParameterList params{&a, &b};
  AdamState state(params);
  try {
    AdamStep(params, state, 0.1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
  }
  CHECK(a.value(0, 0) == 0.0);
  CHECK(state.t == 0);
}

TEST_CASE("linear decay schedule") {
  CHECK(LinearDecay(3e-4, 0.0) == 3e-4);
  CHECK(LinearDecay(3e-4, 0.5) == doctest::Approx(1.5e-4));
  CHECK(LinearDecay(3e-4, 1.0) == 0.0);
}

}  // namespace
}  // namespace qrp::diff
