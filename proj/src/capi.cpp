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

#include "qrpolicy/qrpolicy.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "json.hpp"

#include "envs.hpp"
#include "error.hpp"
#include "harness.hpp"
#include "mononet.hpp"
#include "quantfit.hpp"
#include "rng.hpp"

struct qrp_net {
  qrp::mono::MonotonicQuantileNet net;
};

struct qrp_config {
  qrp::harness::ExperimentConfig config;
};

namespace {

thread_local std::string last_error;

qrp_status Record(qrp_status status, const char* what) {
  last_error = what;
  return status;
}

// Runs body, mapping exceptions to status codes.
template <typename F>
qrp_status Guard(F&& body) {
  try {
    last_error.clear();
    body();
    return QRP_OK;
  } catch (const qrp::Error& e) {
    return Record(static_cast<qrp_status>(static_cast<int>(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return Record(QRP_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return Record(QRP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Record(QRP_ERR_INTERNAL, e.what());
  } catch (...) {
    return Record(QRP_ERR_INTERNAL, "unknown error");
  }
}

void NotNull(const void* p, const char* what) {
  qrp::Require(p != nullptr, qrp::ErrorCode::kInvalidArgument, what);
}

void CopyOut(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = text.size() + 1;
  if (buf == nullptr || cap == 0) return;
  const size_t n = std::min(cap - 1, text.size());
  std::memcpy(buf, text.data(), n);
  buf[n] = '\0';
}

}  // namespace

extern "C" {

const char* qrp_version(void) { return "1.0.0"; }

const char* qrp_last_error(void) { return last_error.c_str(); }

qrp_status qrp_net_create(const char* architecture, int hidden_width,
                          int group_size, int feature_dim, double sigma,
                          uint64_t seed, qrp_net** out) {
  return Guard([&] {
    NotNull(architecture, "architecture is null");
    NotNull(out, "output handle is null");
    qrp::mono::NetConfig config;
    config.architecture = qrp::mono::ParseArchitecture(architecture);
    config.hidden_width = hidden_width;
    config.group_size = group_size;
    config.feature_dim = feature_dim;
    config.sigma = sigma;
    *out = new qrp_net{qrp::mono::MonotonicQuantileNet::Init(config, seed)};
  });
}

void qrp_net_free(qrp_net* net) { delete net; }

qrp_status qrp_net_feature_dim(const qrp_net* net, int* out) {
  return Guard([&] {
    NotNull(net, "net is null");
    NotNull(out, "output is null");
    *out = net->net.feature_dim();
  });
}

qrp_status qrp_net_evaluate(const qrp_net* net, const double* taus, size_t n,
                            const double* features, double* out) {
  return Guard([&] {
    NotNull(net, "net is null");
    if (n == 0) return;
    NotNull(taus, "taus is null");
    NotNull(out, "output is null");
    const auto m = static_cast<Eigen::Index>(n);
    const qrp::Vector tau_vec = Eigen::Map<const qrp::Vector>(taus, m);
    const int f = net->net.feature_dim();
    qrp::Vector result;
    if (f > 0) {
      NotNull(features, "net expects features");
      const qrp::Matrix feats = Eigen::Map<const qrp::Matrix>(features, f, m);
      result = net->net.predict(tau_vec, &feats, 1);
    } else {
      qrp::Require(features == nullptr, qrp::ErrorCode::kDimensionMismatch,
                   "net takes no features");
      result = net->net.predict(tau_vec);
    }
    std::memcpy(out, result.data(), n * sizeof(double));
  });
}

qrp_status qrp_net_sample(const qrp_net* net, uint64_t seed, size_t n,
                          double* actions, double* taus) {
  return Guard([&] {
    NotNull(net, "net is null");
    qrp::Require(net->net.feature_dim() == 0, qrp::ErrorCode::kInvalidArgument,
                 "sampling a feature-conditioned net needs features");
    if (n == 0) return;
    NotNull(actions, "actions is null");
    qrp::Rng rng = qrp::Rng(seed).substream("capi.sample");
    qrp::Vector t(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    const qrp::Vector a = net->net.predict(t);
    std::memcpy(actions, a.data(), n * sizeof(double));
    if (taus != nullptr) std::memcpy(taus, t.data(), n * sizeof(double));
  });
}

qrp_status qrp_net_save(const qrp_net* net, const char* path) {
  return Guard([&] {
    NotNull(net, "net is null");
    NotNull(path, "path is null");
    qrp::mono::SaveNet(net->net, path);
  });
}

qrp_status qrp_net_load(const char* path, qrp_net** out) {
  return Guard([&] {
    NotNull(path, "path is null");
    NotNull(out, "output handle is null");
    *out = new qrp_net{qrp::mono::LoadNet(path)};
  });
}

qrp_status qrp_fit_distribution(const char* architecture,
                                const char* distribution, double lr,
                                uint64_t seed, int batches, double* mse,
                                qrp_net** out_net) {
  return Guard([&] {
    NotNull(architecture, "architecture is null");
    NotNull(distribution, "distribution is null");
    qrp::fit::FitOptions options;
    if (batches > 0) options.batches = batches;
    qrp::fit::FitReport report = qrp::fit::FitDistribution(
        qrp::fit::DistributionByName(distribution),
        qrp::mono::ParseArchitecture(architecture), lr, seed, options);
    if (mse != nullptr) *mse = report.mse;
    if (out_net != nullptr) *out_net = new qrp_net{std::move(report.net)};
  });
}

qrp_status qrp_quantile_loss(double tau, double delta, double* out) {
  return Guard([&] {
    NotNull(out, "output is null");
    qrp::Require(tau >= 0.0 && tau <= 1.0, qrp::ErrorCode::kInvalidArgument,
                 "tau must lie in [0, 1]");
    *out = qrp::fit::QuantileLoss(tau, delta);
  });
}

qrp_status qrp_crps(const qrp_net* net, double z, int n, double* out) {
  return Guard([&] {
    NotNull(net, "net is null");
    NotNull(out, "output is null");
    *out = qrp::fit::Crps(net->net, z, n);
  });
}

qrp_status qrp_likelihood(const qrp_net* net, double tau, double* density,
                          int* unbounded) {
  return Guard([&] {
    NotNull(net, "net is null");
    NotNull(density, "output is null");
    const qrp::fit::DensityEstimate d = qrp::fit::Likelihood(net->net, tau);
    *density = d.density;
    if (unbounded != nullptr) *unbounded = d.unbounded ? 1 : 0;
  });
}

qrp_status qrp_rps_judge(double a1, double a2, int* r1, int* r2) {
  return Guard([&] {
    NotNull(r1, "output is null");
    NotNull(r2, "output is null");
    const auto [x, y] = qrp::envs::RpsJudge(a1, a2);
    *r1 = x;
    *r2 = y;
  });
}

qrp_status qrp_choice_policy_value(int episode_length, double p_a, double p_b,
                                   double* out) {
  return Guard([&] {
    NotNull(out, "output is null");
    *out = qrp::envs::ChoicePolicyValue(episode_length, p_a, p_b);
  });
}

qrp_status qrp_choice_optimum(int episode_length, int grid_steps, double* value,
                              double* p_a, double* p_b) {
  return Guard([&] {
    NotNull(value, "output is null");
    const auto opt = qrp::envs::ChoiceOptimalMemorylessValue(episode_length, grid_steps);
    *value = opt.value;
    if (p_a != nullptr) *p_a = opt.p_a;
    if (p_b != nullptr) *p_b = opt.p_b;
  });
}

qrp_status qrp_config_default(const char* experiment, qrp_config** out) {
  return Guard([&] {
    NotNull(experiment, "experiment is null");
    NotNull(out, "output handle is null");
    auto* c = new qrp_config;
    c->config.experiment = qrp::harness::ParseExperiment(experiment);
    *out = c;
  });
}

qrp_status qrp_config_from_json(const char* json, qrp_config** out) {
  return Guard([&] {
    NotNull(json, "json is null");
    NotNull(out, "output handle is null");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      qrp::Fail(qrp::ErrorCode::kConfig, std::string("malformed config: ") + e.what());
    }
    *out = new qrp_config{qrp::harness::ConfigFromJson(j)};
  });
}

qrp_status qrp_config_from_file(const char* path, qrp_config** out) {
  return Guard([&] {
    NotNull(path, "path is null");
    NotNull(out, "output handle is null");
    *out = new qrp_config{qrp::harness::LoadConfig(path)};
  });
}

qrp_status qrp_config_patch(qrp_config* config, const char* json_patch) {
  return Guard([&] {
    NotNull(config, "config is null");
    NotNull(json_patch, "patch is null");
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(json_patch);
    } catch (const nlohmann::json::parse_error& e) {
      qrp::Fail(qrp::ErrorCode::kConfig, std::string("malformed patch: ") + e.what());
    }
    nlohmann::json merged = qrp::harness::ConfigToJson(config->config);
    merged.merge_patch(patch);
    config->config = qrp::harness::ConfigFromJson(merged);
  });
}

qrp_status qrp_config_to_json(const qrp_config* config, char* buf, size_t cap,
                              size_t* needed) {
  return Guard([&] {
    NotNull(config, "config is null");
    CopyOut(qrp::harness::ConfigToJson(config->config).dump(2), buf, cap, needed);
  });
}

void qrp_config_free(qrp_config* config) { delete config; }

qrp_status qrp_run(const qrp_config* config, int* exit_code, char* buf,
                   size_t cap, size_t* needed) {
  return Guard([&] {
    NotNull(config, "config is null");
    const qrp::harness::RunOutcome outcome = qrp::harness::Run(config->config);
    if (exit_code != nullptr) *exit_code = outcome.exit_code;
    CopyOut(outcome.summary.dump(2), buf, cap, needed);
  });
}

qrp_status qrp_plotdata(const char* dir, char* buf, size_t cap, size_t* needed) {
  return Guard([&] {
    NotNull(dir, "dir is null");
    const qrp::harness::PlotOutcome outcome = qrp::harness::Plotdata(dir);
    std::string report;
    for (const auto& w : outcome.written) report += "wrote " + w + "\n";
    for (const auto& w : outcome.warnings) report += "warning: " + w + "\n";
    CopyOut(report, buf, cap, needed);
  });
}

}  // extern "C"
