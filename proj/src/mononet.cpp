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

#include "mononet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "error.hpp"
#include "json.hpp"

namespace qrp::mono {
namespace {

using diff::Constraint;
using json = nlohmann::json;

constexpr char kMagic[8] = {'Q', 'R', 'P', 'N', 'E', 'T', '0', '1'};

void Validate(const NetConfig& c) {
  Require(c.hidden_width >= 1, ErrorCode::kInvalidArgument,
          "hidden_width must be positive");
  Require(c.feature_dim >= 0, ErrorCode::kInvalidArgument,
          "feature_dim must be non-negative");
  Require(c.sigma > 0.0, ErrorCode::kInvalidArgument, "sigma must be positive");
  switch (c.architecture) {
    case Architecture::kReluSplit:
      Require(c.hidden_width >= 2 && c.hidden_width % 2 == 0,
              ErrorCode::kInvalidArgument,
              "relu-split hidden_width must be even and at least 2, got " +
                  std::to_string(c.hidden_width));
      break;
    case Architecture::kMaxMin:
      Require(c.group_size >= 1 && c.hidden_width % c.group_size == 0,
              ErrorCode::kInvalidArgument,
              "max-min hidden_width " + std::to_string(c.hidden_width) +
                  " is not divisible by group_size " +
                  std::to_string(c.group_size));
      break;
    case Architecture::kTanhPositive:
      break;
  }
}

void InitLogUniform(diff::Parameter& w, int fan_in, double sigma, Rng& rng) {
  const double upper = std::sqrt(sigma / fan_in);
  for (Eigen::Index j = 0; j < w.value.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.value.rows(); ++i) {
      // (0, upper]; the open lower end keeps the log finite.
      w.value(i, j) = std::log(upper * rng.uniform_open0());
    }
  }
}

void PutU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t GetU64(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i]))
         << (8 * i);
  }
  return v;
}

}  // namespace

std::string ToString(Architecture arch) {
  switch (arch) {
    case Architecture::kReluSplit:
      return "relu";
    case Architecture::kTanhPositive:
      return "tanh";
    case Architecture::kMaxMin:
      return "maxmin";
  }
  return "relu";
}

Architecture ParseArchitecture(const std::string& name) {
  if (name == "relu" || name == "relu-split") return Architecture::kReluSplit;
  if (name == "tanh") return Architecture::kTanhPositive;
  if (name == "maxmin" || name == "max-min") return Architecture::kMaxMin;
  Fail(ErrorCode::kInvalidArgument, "unknown architecture '" + name + "'");
}

QuantileInput QuantileInput::FromTau(double tau) {
  Require(tau >= 0.0 && tau <= 1.0, ErrorCode::kInvalidArgument,
          "quantile level must lie in [0, 1]");
  return {tau, 2.0 * tau - 1.0};
}

MonotonicQuantileNet MonotonicQuantileNet::Init(const NetConfig& config,
                                                std::uint64_t seed) {
  Rng rng = Rng(seed).substream("mononet.init");
  MonotonicQuantileNet net = Init(config, rng);
  net.seed_ = seed;
  return net;
}

MonotonicQuantileNet MonotonicQuantileNet::Init(const NetConfig& config,
                                                Rng& rng) {
  Validate(config);
  MonotonicQuantileNet net;
  net.config_ = config;
  net.seed_ = rng.seed();
  const int h = config.hidden_width;
  net.input_ = diff::Linear("tau", 1, h, Constraint::kExpPositive);
  InitLogUniform(net.input_.weight(), 1, config.sigma, rng);
  if (config.architecture != Architecture::kMaxMin) {
    net.output_ = diff::Linear("out", h, 1, Constraint::kExpPositive);
    InitLogUniform(net.output_.weight(), h, config.sigma, rng);
  }
  if (config.feature_dim > 0) {
    net.feature_weight_ = diff::Parameter("features.weight", h,
                                          config.feature_dim,
                                          Constraint::kUnconstrained);
    diff::InitUniform(net.feature_weight_,
                      std::sqrt(6.0 / (h + config.feature_dim)), rng);
  }
  return net;
}

int MonotonicQuantileNet::relu_units() const {
  if (config_.architecture != Architecture::kReluSplit) return 0;
  return (config_.hidden_width + 1) / 2;
}

void MonotonicQuantileNet::prepare(const Vector& taus, const Matrix* features,
                                   Eigen::Index repeat, Vector& scaled,
                                   Matrix& injected) const {
  const bool wants_features = config_.feature_dim > 0;
  Require(wants_features == (features != nullptr),
          ErrorCode::kInvalidArgument,
          wants_features ? "net expects state features"
                         : "net has no feature injection");
  Require(repeat >= 1, ErrorCode::kInvalidArgument, "repeat must be >= 1");
  const Eigen::Index n = taus.size();
  scaled.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    scaled[i] = QuantileInput::FromTau(taus[i]).scaled;
  }
  if (features != nullptr) {
    Require(features->rows() == config_.feature_dim &&
                features->cols() * repeat == n,
            ErrorCode::kDimensionMismatch,
            "feature matrix shape does not match the tau batch");
    injected.noalias() = feature_weight_.value * (*features);
  } else {
    injected.resize(0, 0);
  }
}

double MonotonicQuantileNet::head_one(const double* p,
                                      const Eigen::Ref<const Vector>& w,
                                      double b, Eigen::Index* winner) const {
  const Eigen::Index h = config_.hidden_width;
  switch (config_.architecture) {
    case Architecture::kReluSplit: {
      const Eigen::Index split = relu_units();
      Eigen::Map<const Vector> pre(p, h);
      return w.head(split).dot(pre.head(split).cwiseMax(0.0)) +
             w.tail(h - split).dot(pre.tail(h - split).cwiseMin(0.0)) + b;
    }
    case Architecture::kTanhPositive: {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < h; ++k) acc += w[k] * std::tanh(p[k]);
      return acc + b;
    }
    case Architecture::kMaxMin: {
      const Eigen::Index g = config_.group_size;
      const Eigen::Index groups = h / g;
      double best_min = 0.0;
      Eigen::Index best_row = 0;
      for (Eigen::Index k = 0; k < groups; ++k) {
        Eigen::Index row = k * g;
        double group_max = p[row];
        for (Eigen::Index r = row + 1; r < (k + 1) * g; ++r) {
          if (p[r] > group_max) {
            group_max = p[r];
            row = r;
          }
        }
        if (k == 0 || group_max < best_min) {
          best_min = group_max;
          best_row = row;
        }
      }
      if (winner != nullptr) *winner = best_row;
      return best_min;
    }
  }
  return 0.0;
}

Vector MonotonicQuantileNet::run(const Vector& scaled, const Matrix& injected,
                                 Eigen::Index repeat,
                                 std::vector<Eigen::Index>* winner) const {
  const Eigen::Index n = scaled.size();
  const Eigen::Index h = config_.hidden_width;
  const Vector w_in = input_.weight().value.col(0).array().exp();
  const Vector& b_in = input_.bias().value.col(0);
  const bool maxmin = config_.architecture == Architecture::kMaxMin;
  const Vector w_out = maxmin ? Vector()
                              : Vector(output_.weight().value.row(0).transpose().array().exp());
  const double b_out = maxmin ? 0.0 : output_.bias().value(0, 0);
  if (winner != nullptr) winner->assign(static_cast<std::size_t>(n), 0);
  Vector pre(h);
  Vector out(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const double x = scaled[s];
    double* p = pre.data();
    if (injected.size() > 0) {
      const double* inj = injected.col(s / repeat).data();
      for (Eigen::Index k = 0; k < h; ++k) p[k] = w_in[k] * x + b_in[k] + inj[k];
    } else {
      for (Eigen::Index k = 0; k < h; ++k) p[k] = w_in[k] * x + b_in[k];
    }
    out[s] = head_one(p, w_out, b_out,
                      winner != nullptr ? &(*winner)[static_cast<std::size_t>(s)]
                                        : nullptr);
  }
  return out;
}

Vector MonotonicQuantileNet::predict(const Vector& taus, const Matrix* features,
                                     Eigen::Index repeat) const {
  Vector scaled;
  Matrix injected;
  prepare(taus, features, repeat, scaled, injected);
  return run(scaled, injected, repeat, nullptr);
}

Vector MonotonicQuantileNet::forward(const Vector& taus, const Matrix* features,
                                     Eigen::Index repeat) {
  cache_.batch = 0;
  prepare(taus, features, repeat, cache_.scaled, cache_.injected);
  Vector out = run(cache_.scaled, cache_.injected, repeat,
                   config_.architecture == Architecture::kMaxMin ? &cache_.winner
                                                                 : nullptr);
  cache_.repeat = repeat;
  cache_.batch = taus.size();
  if (features != nullptr) cache_.features = *features;
  return out;
}

Matrix MonotonicQuantileNet::backward(const Vector& grad_out) {
  Require(grad_out.size() == cache_.batch && cache_.batch > 0,
          ErrorCode::kDimensionMismatch,
          "mononet backward called without a matching forward");
  const Eigen::Index n = cache_.batch;
  const Eigen::Index h = config_.hidden_width;
  const Eigen::Index repeat = cache_.repeat;
  const bool has_features = config_.feature_dim > 0;
  const Vector w_in = input_.weight().value.col(0).array().exp();
  const Vector& b_in = input_.bias().value.col(0);
  Vector g_w_in = Vector::Zero(h);
  Vector g_b_in = Vector::Zero(h);
  Matrix g_inj;
  if (has_features) g_inj = Matrix::Zero(h, cache_.features.cols());

  switch (config_.architecture) {
    case Architecture::kReluSplit:
    case Architecture::kTanhPositive: {
      const Vector w_out = output_.weight().value.row(0).transpose().array().exp();
      Vector g_w_out = Vector::Zero(h);
      double g_b_out = 0.0;
      const bool relu = config_.architecture == Architecture::kReluSplit;
      const Eigen::Index split = relu ? relu_units() : h;
      Vector pre(h);
      Vector gate(h);
      double* __restrict p = pre.data();
      double* __restrict gp = gate.data();
      double* __restrict gwo = g_w_out.data();
      double* __restrict gwi = g_w_in.data();
      double* __restrict gbi = g_b_in.data();
      const double* __restrict wo = w_out.data();
      const double* __restrict wi = w_in.data();
      const double* __restrict bi = b_in.data();
      for (Eigen::Index s = 0; s < n; ++s) {
        const double g = grad_out[s];
        const double x = cache_.scaled[s];
        g_b_out += g;
        if (has_features) {
          const double* inj = cache_.injected.col(s / repeat).data();
          for (Eigen::Index k = 0; k < h; ++k) p[k] = wi[k] * x + bi[k] + inj[k];
        } else {
          for (Eigen::Index k = 0; k < h; ++k) p[k] = wi[k] * x + bi[k];
        }
        if (relu) {
          for (Eigen::Index k = 0; k < split; ++k) {
            const double m = p[k] > 0.0 ? g : 0.0;
            gwo[k] += m * p[k];
            gp[k] = m * wo[k];
          }
          for (Eigen::Index k = split; k < h; ++k) {
            const double m = p[k] < 0.0 ? g : 0.0;
            gwo[k] += m * p[k];
            gp[k] = m * wo[k];
          }
        } else {
          for (Eigen::Index k = 0; k < h; ++k) {
            const double t = std::tanh(p[k]);
            gwo[k] += g * t;
            gp[k] = g * wo[k] * (1.0 - t * t);
          }
        }
        for (Eigen::Index k = 0; k < h; ++k) {
          gwi[k] += gp[k] * x;
          gbi[k] += gp[k];
        }
        if (has_features) {
          double* __restrict gi = g_inj.col(s / repeat).data();
          for (Eigen::Index k = 0; k < h; ++k) gi[k] += gp[k];
        }
      }
      output_.weight().grad.row(0) +=
          (g_w_out.array() * w_out.array()).matrix().transpose();
      output_.bias().grad(0, 0) += g_b_out;
      break;
    }
    case Architecture::kMaxMin: {
      for (Eigen::Index s = 0; s < n; ++s) {
        const Eigen::Index k = cache_.winner[static_cast<std::size_t>(s)];
        const double g = grad_out[s];
        g_w_in[k] += g * cache_.scaled[s];
        g_b_in[k] += g;
        if (has_features) g_inj(k, s / repeat) += g;
      }
      break;
    }
  }
  input_.weight().grad.col(0) += (g_w_in.array() * w_in.array()).matrix();
  input_.bias().grad.col(0) += g_b_in;
  if (!has_features) return Matrix();
  feature_weight_.grad += g_inj * cache_.features.transpose();
  return feature_weight_.value.transpose() * g_inj;
}

double MonotonicQuantileNet::evaluate(double tau) const {
  Vector t(1);
  t[0] = tau;
  return predict(t)[0];
}

double MonotonicQuantileNet::evaluate(double tau, const Vector& features) const {
  Vector t(1);
  t[0] = tau;
  Matrix f = features;
  return predict(t, &f)[0];
}

diff::ParameterList MonotonicQuantileNet::parameters() {
  diff::ParameterList out;
  input_.append_parameters(out);
  if (config_.architecture != Architecture::kMaxMin) {
    output_.append_parameters(out);
  }
  if (config_.feature_dim > 0) out.push_back(&feature_weight_);
  return out;
}

std::vector<const diff::Parameter*> MonotonicQuantileNet::parameters() const {
  auto list = const_cast<MonotonicQuantileNet*>(this)->parameters();
  return {list.begin(), list.end()};
}

std::pair<Vector, Vector> ActionSample(
    const std::vector<MonotonicQuantileNet>& nets,
    const std::optional<Vector>& features, Rng& rng) {
  Require(!nets.empty(), ErrorCode::kInvalidArgument,
          "action sampling needs at least one net");
  Vector action(static_cast<Eigen::Index>(nets.size()));
  Vector tau(action.size());
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    tau[k] = rng.uniform();
    action[k] = features ? nets[i].evaluate(tau[k], *features)
                         : nets[i].evaluate(tau[k]);
  }
  return {action, tau};
}

std::string SerializeNet(const MonotonicQuantileNet& net) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  const NetConfig& c = net.config();
  json header;
  header["format"] = "qrpolicy.mononet";
  header["version"] = 1;
  header["architecture"] = ToString(c.architecture);
  header["hidden_width"] = c.hidden_width;
  header["group_size"] = c.group_size;
  header["feature_dim"] = c.feature_dim;
  header["sigma"] = c.sigma;
  header["seed"] = net.seed();
  json params = json::array();
  std::size_t count = 0;
  for (const diff::Parameter* p : net.parameters()) {
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"constraint", p->constraint == diff::Constraint::kExpPositive
                                         ? "exp-positive"
                                         : "unconstrained"}});
    count += static_cast<std::size_t>(p->size());
  }
  header["params"] = params;
  header["value_count"] = count;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  PutU64(out, text.size());
  out += text;
  for (const diff::Parameter* p : net.parameters()) {
    const auto* bytes = reinterpret_cast<const char*>(p->value.data());
    out.append(bytes, static_cast<std::size_t>(p->size()) * sizeof(double));
  }
  return out;
}

MonotonicQuantileNet DeserializeNet(const std::string& bytes) {
  Require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, 8) == 0,
          ErrorCode::kIo, "not a mononet checkpoint");
  const std::uint64_t header_len = GetU64(bytes, 8);
  Require(bytes.size() >= 16 + header_len, ErrorCode::kIo,
          "truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kIo, std::string("bad checkpoint header: ") + e.what());
  }
  NetConfig c;
  c.architecture = ParseArchitecture(header.at("architecture").get<std::string>());
  c.hidden_width = header.at("hidden_width").get<int>();
  c.group_size = header.at("group_size").get<int>();
  c.feature_dim = header.at("feature_dim").get<int>();
  c.sigma = header.at("sigma").get<double>();
  MonotonicQuantileNet net =
      MonotonicQuantileNet::Init(c, header.at("seed").get<std::uint64_t>());
  std::size_t offset = 16 + header_len;
  const auto& specs = header.at("params");
  auto params = net.parameters();
  Require(specs.size() == params.size(), ErrorCode::kIo,
          "checkpoint parameter list does not match the architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    diff::Parameter& p = *params[i];
    Require(specs[i].at("rows").get<Eigen::Index>() == p.value.rows() &&
                specs[i].at("cols").get<Eigen::Index>() == p.value.cols(),
            ErrorCode::kIo, "checkpoint shape mismatch for " + p.name);
    const std::size_t n = static_cast<std::size_t>(p.size()) * sizeof(double);
    Require(bytes.size() >= offset + n, ErrorCode::kIo, "truncated checkpoint");
    std::memcpy(p.value.data(), bytes.data() + offset, n);
    offset += n;
  }
  Require(offset == bytes.size(), ErrorCode::kIo,
          "trailing bytes in checkpoint");
  return net;
}

void SaveNet(const MonotonicQuantileNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  const std::string bytes = SerializeNet(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  Require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path);
}

MonotonicQuantileNet LoadNet(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return DeserializeNet(bytes);
}

}  // namespace qrp::mono
