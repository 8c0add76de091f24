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

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"

#include "diffcore.hpp"
#include "error.hpp"
#include "mononet.hpp"
#include "quantfit.hpp"
#include "rng.hpp"
#include "test_util.hpp"

namespace qrp::mono {
namespace {

constexpr Architecture kAll[] = {Architecture::kReluSplit,
                                 Architecture::kTanhPositive,
                                 Architecture::kMaxMin};

NetConfig SmallConfig(Architecture arch, int feature_dim = 0) {
  NetConfig c;
  c.architecture = arch;
  c.hidden_width = arch == Architecture::kMaxMin ? 12 : 8;
  c.group_size = 3;
  c.feature_dim = feature_dim;
  return c;
}

// Every parameter (log-weights included) redrawn from N(0, scale^2).
void Scramble(MonotonicQuantileNet& net, Rng& rng, double scale) {
  for (diff::Parameter* p : net.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] = scale * rng.normal();
    }
  }
}

// ReluSplit with all log-weights 0 and biases 0: G(tau) = 2 tau - 1.
MonotonicQuantileNet IdentityNet() {
  NetConfig c;
  c.hidden_width = 2;
  MonotonicQuantileNet net = MonotonicQuantileNet::Init(c, 0);
  for (diff::Parameter* p : net.parameters()) p->value.setZero();
  return net;
}

Vector Grid(int n) {
  Vector taus(n);
  for (int i = 0; i < n; ++i) taus[i] = static_cast<double>(i) / (n - 1);
  return taus;
}

bool Sorted(const Vector& v) {
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) return false;
  }
  return true;
}

// Hidden pre-activations W1 x + b1 + F f for one sample.
Vector PreActivation(const MonotonicQuantileNet& net, double tau,
                     const Vector* features) {
  Vector pre = net.input_layer().weight().effective().col(0) * (2.0 * tau - 1.0) +
               net.input_layer().bias().value.col(0);
  if (features != nullptr) {
    pre += const_cast<MonotonicQuantileNet&>(net).feature_weight().value * *features;
  }
  return pre;
}

// Gap between the selected and the runner-up unit at each max and min.
double MaxMinMargin(const Vector& pre, int group) {
  const Eigen::Index groups = pre.size() / group;
  std::vector<double> maxes;
  double margin = 1e300;
  for (Eigen::Index g = 0; g < groups; ++g) {
    std::vector<double> v(pre.data() + g * group, pre.data() + (g + 1) * group);
    std::sort(v.rbegin(), v.rend());
    if (v.size() > 1) margin = std::min(margin, v[0] - v[1]);
    maxes.push_back(v[0]);
  }
  std::sort(maxes.begin(), maxes.end());
  if (maxes.size() > 1) margin = std::min(margin, maxes[1] - maxes[0]);
  return margin;
}

bool NearKink(const MonotonicQuantileNet& net, const Vector& taus,
              const Matrix* features) {
  for (Eigen::Index n = 0; n < taus.size(); ++n) {
    Vector f;
    if (features != nullptr) f = features->col(n);
    const Vector pre = PreActivation(net, taus[n], features ? &f : nullptr);
    switch (net.architecture()) {
      case Architecture::kReluSplit:
        if ((pre.array().abs() <= 1e-3).any()) return true;
        break;
      case Architecture::kMaxMin:
        if (MaxMinMargin(pre, net.config().group_size) <= 1e-3) return true;
        break;
      case Architecture::kTanhPositive:
        break;
    }
  }
  return false;
}

TEST_CASE("identity net examples") {
  MonotonicQuantileNet net = IdentityNet();
  CHECK(net.evaluate(0.7) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(net.evaluate(0.5) == 0.0);
  CHECK(net.relu_units() == 1);
}

TEST_CASE("random relu-split net: G(0.2) <= G(0.8)") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    MonotonicQuantileNet net = MonotonicQuantileNet::Init(SmallConfig(Architecture::kReluSplit), rng);
    Scramble(net, rng, 1.0);
    CHECK(net.evaluate(0.2) <= net.evaluate(0.8));
  }
}

TEST_CASE("init: effective first-layer weights lie in (0, sqrt(3)]") {
  NetConfig c;
  c.hidden_width = 10000;
  MonotonicQuantileNet net = MonotonicQuantileNet::Init(c, 5);
  const Matrix w = net.input_layer().weight().effective();
  CHECK((w.array() > 0.0).all());
  CHECK(w.maxCoeff() <= std::sqrt(3.0) * (1.0 + 1e-12));
  // Mean of U(0, sqrt 3) is sqrt(3)/2 with standard error 0.5/sqrt(n).
  const double se = 0.5 / std::sqrt(10000.0);
  CHECK(std::abs(w.mean() - std::sqrt(3.0) / 2.0) <= 3.0 * se);
  // Biases start at zero.
  CHECK(net.input_layer().bias().value.isZero(0.0));
  CHECK(net.output_layer().bias().value.isZero(0.0));
  // Output fan-in is the hidden width.
  CHECK(net.output_layer().weight().effective().maxCoeff() <=
        std::sqrt(3.0 / 10000.0) * (1.0 + 1e-12));
}

TEST_CASE("init: same seed gives bit-identical parameters") {
  for (Architecture arch : kAll) {
    MonotonicQuantileNet a = MonotonicQuantileNet::Init(SmallConfig(arch, 3), 42);
    MonotonicQuantileNet b = MonotonicQuantileNet::Init(SmallConfig(arch, 3), 42);
    MonotonicQuantileNet c = MonotonicQuantileNet::Init(SmallConfig(arch, 3), 43);
    auto pa = a.parameters();
    auto pb = b.parameters();
    auto pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->value == pb[i]->value);
      if (pa[i]->value != pc[i]->value) differs = true;
    }
    CHECK(differs);
  }
}

TEST_CASE("monotonicity under 1000 random parameterizations") {
  Rng rng(2);
  const Vector taus = Grid(201);
  for (Architecture arch : kAll) {
    for (int features : {0, 3}) {
      int violations = 0;
      for (int trial = 0; trial < 1000; ++trial) {
        MonotonicQuantileNet net = MonotonicQuantileNet::Init(SmallConfig(arch, features), rng);
        Scramble(net, rng, 2.0);
        Vector out;
        if (features > 0) {
          Vector f(3);
          for (int k = 0; k < 3; ++k) f[k] = 3.0 * rng.normal();
          Matrix fm = f;
          out = net.predict(taus, &fm, taus.size());
        } else {
          out = net.predict(taus);
        }
        if (!Sorted(out)) ++violations;
      }
      INFO(ToString(arch), " features=", features);
      CHECK(violations == 0);
    }
  }
}

TEST_CASE("monotonicity after aggressive Adam updates") {
  Rng rng(3);
  const Vector grid = Grid(201);
  for (Architecture arch : kAll) {
    MonotonicQuantileNet net = MonotonicQuantileNet::Init(SmallConfig(arch, 2), rng);
    diff::ParameterList params = net.parameters();
    diff::AdamState adam(params);
    for (int step = 0; step < 300; ++step) {
      Vector taus(16);
      Matrix f(2, 16);
      Vector grad(16);
      for (int n = 0; n < 16; ++n) {
        taus[n] = rng.uniform();
        f(0, n) = rng.normal();
        f(1, n) = rng.normal();
        grad[n] = 5.0 * rng.normal();
      }
      diff::ZeroGrads(params);
      net.forward(taus, &f);
      net.backward(grad);
      diff::AdamStep(params, adam, 0.5);
      Matrix probe(2, 1);
      probe << rng.normal(), rng.normal();
      const Vector out = net.predict(grid, &probe, grid.size());
      REQUIRE(Sorted(out));
    }
  }
}

TEST_CASE("gradients match finite differences on 100 configurations per architecture") {
  Rng rng(4);
  for (Architecture arch : kAll) {
    for (int features : {0, 2}) {
      int checked = 0;
      while (checked < 100) {
        MonotonicQuantileNet net = MonotonicQuantileNet::Init(SmallConfig(arch, features), rng);
        Scramble(net, rng, 0.7);
        Vector taus(4);
        for (int n = 0; n < 4; ++n) taus[n] = rng.uniform();
        Matrix f;
        const Matrix* fp = nullptr;
        if (features > 0) {
          f = Matrix(features, 4);
          for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
          fp = &f;
        }
        if (NearKink(net, taus, fp)) continue;
        ++checked;
        Vector upstream(4);
        for (int n = 0; n < 4; ++n) upstream[n] = rng.normal();
        diff::ParameterList params = net.parameters();
        diff::ZeroGrads(params);
        net.forward(taus, fp);
        const Matrix feature_grad = net.backward(upstream);
        auto loss = [&] { return net.predict(taus, fp).dot(upstream); };
        auto check = testing::CheckGradients(params, loss);
        INFO(ToString(arch), " ", check.where);
        CHECK(check.worst <= 1e-4);
        if (features > 0) {
          REQUIRE(feature_grad.rows() == features);
          for (Eigen::Index i = 0; i < f.size(); ++i) {
            const double saved = f.data()[i];
            f.data()[i] = saved + 1e-5;
            const double up = loss();
            f.data()[i] = saved - 1e-5;
            const double down = loss();
            f.data()[i] = saved;
            const double numeric = (up - down) / 2e-5;
            const double scale = std::max({std::abs(numeric), std::abs(feature_grad.data()[i]), 1e-4});
            CHECK(std::abs(numeric - feature_grad.data()[i]) / scale <= 1e-4);
          }
        } else {
          CHECK(feature_grad.size() == 0);
        }
      }
    }
  }
}

TEST_CASE("repeat shares one feature column across consecutive taus") {
  Rng rng(5);
  MonotonicQuantileNet net = MonotonicQuantileNet::Init(SmallConfig(Architecture::kTanhPositive, 2), rng);
  Matrix f(2, 2);
  f << 0.3, -1.0, 0.5, 2.0;
  Vector taus(6);
  taus << 0.1, 0.5, 0.9, 0.1, 0.5, 0.9;
  const Vector out = net.predict(taus, &f, 3);
  CHECK(out[1] == net.evaluate(0.5, f.col(0)));
  CHECK(out[5] == net.evaluate(0.9, f.col(1)));
}

TEST_CASE("max-min examples") {
  NetConfig c;
  c.architecture = Architecture::kMaxMin;
  c.hidden_width = 1;
  c.group_size = 1;
  MonotonicQuantileNet one = MonotonicQuantileNet::Init(c, 0);
  one.input_layer().weight().value.setZero();
  CHECK(one.evaluate(0.8) == doctest::Approx(0.6).epsilon(1e-15));

  c.hidden_width = 2;
  MonotonicQuantileNet two = MonotonicQuantileNet::Init(c, 0);
  two.input_layer().weight().value.setConstant(-100.0);  // weight ~ 4e-44
  two.input_layer().bias().value << 1.0, 3.0;
  CHECK(two.evaluate(0.3) == doctest::Approx(1.0).epsilon(1e-15));

  // Group maximum, then minimum across groups.
  c.hidden_width = 4;
  c.group_size = 2;
  MonotonicQuantileNet four = MonotonicQuantileNet::Init(c, 0);
  four.input_layer().weight().value.setConstant(-100.0);
  four.input_layer().bias().value << 5.0, 2.0, -1.0, 4.0;
  CHECK(four.evaluate(0.5) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("action sampling") {
  std::vector<MonotonicQuantileNet> nets{IdentityNet()};
  Rng a(9), b(9);
  auto [action, tau] = ActionSample(nets, std::nullopt, a);
  auto [action2, tau2] = ActionSample(nets, std::nullopt, b);
  CHECK(action[0] == doctest::Approx(2.0 * tau[0] - 1.0).epsilon(1e-15));
  CHECK(action2[0] == action[0]);
  CHECK(tau2[0] == tau[0]);

  // Kolmogorov-Smirnov distance to U(-1, 1).
  Rng rng(10);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(ActionSample(nets, std::nullopt, rng).first[0]);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = (xs[i] + 1.0) / 2.0;
    ks = std::max({ks, std::abs((i + 1) / n - cdf), std::abs(i / n - cdf)});
  }
  CHECK(ks < 0.02);
}

TEST_CASE("serialization round trip") {
  Rng rng(11);
  const Vector grid = Grid(33);
  for (Architecture arch : kAll) {
    MonotonicQuantileNet net = MonotonicQuantileNet::Init(SmallConfig(arch, 2), rng);
    Scramble(net, rng, 1.0);
    MonotonicQuantileNet copy = DeserializeNet(SerializeNet(net));
    CHECK(copy.architecture() == arch);
    CHECK(copy.feature_dim() == 2);
    Matrix f(2, 1);
    f << 0.4, -0.2;
    CHECK(copy.predict(grid, &f, grid.size()) == net.predict(grid, &f, grid.size()));

    const auto path = testing::TempDir("mononet") / "net.bin";
    SaveNet(net, path.string());
    MonotonicQuantileNet loaded = LoadNet(path.string());
    CHECK(loaded.predict(grid, &f, grid.size()) == net.predict(grid, &f, grid.size()));
  }
  try {
    DeserializeNet("not a checkpoint");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("validation errors") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return static_cast<int>(e.code());
    }
    return 0;
  };
  const int invalid = static_cast<int>(ErrorCode::kInvalidArgument);
  CHECK(code_of([] { QuantileInput::FromTau(1.5); }) == invalid);
  CHECK(code_of([] { QuantileInput::FromTau(-0.1); }) == invalid);
  NetConfig odd;
  odd.hidden_width = 7;
  CHECK(code_of([&] { MonotonicQuantileNet::Init(odd, 0); }) == invalid);
  NetConfig groups;
  groups.architecture = Architecture::kMaxMin;
  groups.hidden_width = 10;
  groups.group_size = 3;
  CHECK(code_of([&] { MonotonicQuantileNet::Init(groups, 0); }) == invalid);
  CHECK(code_of([] { ParseArchitecture("sigmoid"); }) == invalid);
  MonotonicQuantileNet plain = MonotonicQuantileNet::Init(SmallConfig(Architecture::kReluSplit), 0);
  Matrix f = Matrix::Zero(2, 1);
  CHECK(code_of([&] { plain.predict(Grid(3), &f, 3); }) == invalid);
  MonotonicQuantileNet with = MonotonicQuantileNet::Init(SmallConfig(Architecture::kReluSplit, 3), 0);
  CHECK(code_of([&] { with.predict(Grid(3)); }) == invalid);
  CHECK(code_of([&] { with.predict(Grid(3), &f, 3); }) ==
        static_cast<int>(ErrorCode::kDimensionMismatch));
}

// Builds a 4-unit relu-split net from kinks in x = 2 tau - 1. Relu units add
// slope to the right of their kink, inv_relu units to the left; each unit
// has input weight 1, so its output weight is its slope contribution.
struct Kink {
  double x;
  double slope;
};

MonotonicQuantileNet Construct(const std::vector<Kink>& relu,
                               const std::vector<Kink>& inv, double offset) {
  NetConfig c;
  c.hidden_width = 4;
  MonotonicQuantileNet net = MonotonicQuantileNet::Init(c, 0);
  net.input_layer().weight().value.setZero();
  for (int i = 0; i < 2; ++i) {
    net.input_layer().bias().value(i, 0) = -relu[i].x;
    net.output_layer().weight().value(0, i) = std::log(relu[i].slope);
    net.input_layer().bias().value(2 + i, 0) = -inv[i].x;
    net.output_layer().weight().value(0, 2 + i) = std::log(inv[i].slope);
  }
  net.output_layer().bias().value(0, 0) = offset;
  return net;
}

// Piecewise-linear target from its value at x = -1 and slopes between kinks.
double Target(double x, double left, const std::vector<double>& kinks,
              const std::vector<double>& slopes) {
  double value = left;
  double from = -1.0;
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    const double to = i < kinks.size() ? kinks[i] : 1.0;
    if (x <= to) return value + slopes[i] * (x - from);
    value += slopes[i] * (to - from);
    from = to;
  }
  return value;
}

TEST_CASE("relu-split represents 3-kink targets by direct construction") {
  SUBCASE("one convex and two concave kinks") {
    // slopes 3.0 -> 5.0 -> 4.0 -> 2.5; base slope 0.5 from a relu far left.
    const std::vector<double> kinks{-0.5, 0.2, 0.6};
    const std::vector<double> slopes{3.0, 5.0, 4.0, 2.5};
    const std::vector<Kink> relu{{-3.0, 0.5}, {-0.5, 2.0}};
    const std::vector<Kink> inv{{0.2, 1.0}, {0.6, 1.5}};
    // Offset makes G(-1) = 0.3: relu(-1 + 3) * 0.5 + inv terms at x = -1.
    const double at_left = 0.5 * 2.0 + 1.0 * (-1.2) + 1.5 * (-1.6);
    MonotonicQuantileNet net = Construct(relu, inv, 0.3 - at_left);
    for (int i = 0; i <= 1000; ++i) {
      const double tau = i / 1000.0;
      CHECK(net.evaluate(tau) ==
            doctest::Approx(Target(2.0 * tau - 1.0, 0.3, kinks, slopes)).epsilon(1e-12));
    }
  }
  SUBCASE("two convex and one concave kink") {
    // slopes 1.2 -> 1.9 -> 3.4 -> 2.4; base slope 0.2 from an inv_relu far right.
    const std::vector<double> kinks{-0.7, -0.1, 0.4};
    const std::vector<double> slopes{1.2, 1.9, 3.4, 2.4};
    const std::vector<Kink> relu{{-0.7, 0.7}, {-0.1, 1.5}};
    const std::vector<Kink> inv{{0.4, 1.0}, {3.0, 0.2}};
    const double at_left = 1.0 * (-1.4) + 0.2 * (-4.0);
    MonotonicQuantileNet net = Construct(relu, inv, -1.0 - at_left);
    for (int i = 0; i <= 1000; ++i) {
      const double tau = i / 1000.0;
      CHECK(net.evaluate(tau) ==
            doctest::Approx(Target(2.0 * tau - 1.0, -1.0, kinks, slopes)).epsilon(1e-12));
    }
  }
}

TEST_CASE("relu-split slope never exceeds the sum of slopes on either side") {
  // dG/dx is a nondecreasing relu part plus a nonincreasing inv_relu part,
  // so for x1 < x2 < x3: G'(x2) <= G'(x1) + G'(x3).
  Rng rng(12);
  const double h = 1e-6;
  auto slope = [&](const MonotonicQuantileNet& net, double tau) {
    return (net.evaluate(tau + h) - net.evaluate(tau - h)) / (4.0 * h);
  };
  for (int trial = 0; trial < 500; ++trial) {
    NetConfig c;
    c.hidden_width = 16;
    MonotonicQuantileNet net = MonotonicQuantileNet::Init(c, rng);
    Scramble(net, rng, 1.5);
    double t[3] = {rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)};
    std::sort(t, t + 3);
    if (t[1] - t[0] < 1e-4 || t[2] - t[1] < 1e-4) continue;
    const double s1 = slope(net, t[0]), s2 = slope(net, t[1]), s3 = slope(net, t[2]);
    CHECK(s2 <= s1 + s3 + 1e-6 * (1.0 + s1 + s3));
  }
}

}  // namespace
}  // namespace qrp::mono
