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

// Exercises the shared library strictly through its C header.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "qrpolicy/qrpolicy.h"

namespace {

namespace fs = std::filesystem;

std::string ConfigJson(const qrp_config* config) {
  size_t needed = 0;
  REQUIRE(qrp_config_to_json(config, nullptr, 0, &needed) == QRP_OK);
  std::string buf(needed, '\0');
  REQUIRE(qrp_config_to_json(config, buf.data(), buf.size(), &needed) == QRP_OK);
  buf.resize(needed - 1);
  return buf;
}

TEST_CASE("net lifecycle") {
  qrp_net* net = nullptr;
  REQUIRE(qrp_net_create("maxmin", 12, 4, 0, 3.0, 5, &net) == QRP_OK);
  int dim = -1;
  CHECK(qrp_net_feature_dim(net, &dim) == QRP_OK);
  CHECK(dim == 0);
  const double taus[3] = {0.1, 0.5, 0.9};
  double out[3];
  REQUIRE(qrp_net_evaluate(net, taus, 3, nullptr, out) == QRP_OK);
  CHECK(out[0] <= out[1]);
  CHECK(out[1] <= out[2]);

  const fs::path path = fs::temp_directory_path() / "qrpolicy_capi.qrpnet";
  REQUIRE(qrp_net_save(net, path.c_str()) == QRP_OK);
  qrp_net* loaded = nullptr;
  REQUIRE(qrp_net_load(path.c_str(), &loaded) == QRP_OK);
  double again[3];
  REQUIRE(qrp_net_evaluate(loaded, taus, 3, nullptr, again) == QRP_OK);
  for (int i = 0; i < 3; ++i) CHECK(again[i] == out[i]);

  std::vector<double> actions(100), sample_taus(100);
  CHECK(qrp_net_sample(net, 1, 100, actions.data(), sample_taus.data()) == QRP_OK);
  CHECK(qrp_net_sample(net, 1, 100, actions.data(), nullptr) == QRP_OK);
  qrp_net_free(loaded);
  qrp_net_free(net);
  qrp_net_free(nullptr);
}

TEST_CASE("errors are reported as status codes") {
  qrp_net* net = nullptr;
  CHECK(qrp_net_create("sigmoid", 8, 4, 0, 3.0, 0, &net) == QRP_ERR_INVALID_ARGUMENT);
  CHECK(net == nullptr);
  CHECK(std::string(qrp_last_error()).size() > 0);
  CHECK(qrp_net_create("relu", 8, 4, 0, 3.0, 0, nullptr) == QRP_ERR_INVALID_ARGUMENT);
  CHECK(qrp_net_load("/nonexistent/x.qrpnet", &net) == QRP_ERR_IO);
  REQUIRE(qrp_net_create("relu", 8, 4, 0, 3.0, 0, &net) == QRP_OK);
  const double bad = 1.5;
  double out;
  CHECK(qrp_net_evaluate(net, &bad, 1, nullptr, &out) == QRP_ERR_INVALID_ARGUMENT);
  qrp_net_free(net);
  qrp_config* config = nullptr;
  CHECK(qrp_config_from_json("{\"nope\": 1}", &config) == QRP_ERR_CONFIG);
  CHECK(qrp_config_from_json("{", &config) == QRP_ERR_CONFIG);
  CHECK(qrp_config_default("chess", &config) == QRP_ERR_CONFIG);
}

TEST_CASE("scoring and environment helpers") {
  double loss = 0.0;
  REQUIRE(qrp_quantile_loss(0.25, -2.0, &loss) == QRP_OK);
  CHECK(loss == doctest::Approx(1.5));
  int r1 = 0, r2 = 0;
  REQUIRE(qrp_rps_judge(-1.0, 1.0, &r1, &r2) == QRP_OK);
  CHECK(r1 == 1);
  CHECK(r2 == -1);
  double value = 0.0, pa = 0.0, pb = 0.0;
  REQUIRE(qrp_choice_policy_value(8, 0.5, 0.5, &value) == QRP_OK);
  CHECK(value == doctest::Approx(5.09375).epsilon(1e-12));
  REQUIRE(qrp_choice_optimum(8, 20, &value, &pa, &pb) == QRP_OK);
  CHECK(value == doctest::Approx(5.09375).epsilon(1e-12));
  CHECK(pa == doctest::Approx(0.5));

  qrp_net* net = nullptr;
  double mse = 0.0;
  REQUIRE(qrp_fit_distribution("relu", "gaussian", 0.01, 0, 300, &mse, &net) == QRP_OK);
  CHECK(std::isfinite(mse));
  double crps = 0.0, density = 0.0;
  int unbounded = 0;
  CHECK(qrp_crps(net, 0.0, 1000, &crps) == QRP_OK);
  CHECK(crps > 0.0);
  CHECK(qrp_likelihood(net, 0.5, &density, &unbounded) == QRP_OK);
  qrp_net_free(net);
}

TEST_CASE("config patch, run and plotdata") {
  qrp_config* config = nullptr;
  REQUIRE(qrp_config_default("fitbench", &config) == QRP_OK);
  const fs::path out = fs::temp_directory_path() / "qrpolicy_capi_run";
  fs::remove_all(out);
  const std::string patch = nlohmann::json{
      {"seeds", {0}},
      {"out", out.string()},
      {"fitbench", {{"architectures", {"tanh"}},
                    {"distributions", {"bimodal"}},
                    {"learning_rates", {0.01}},
                    {"batches", 100}}}}.dump();
  REQUIRE(qrp_config_patch(config, patch.c_str()) == QRP_OK);
  const auto j = nlohmann::json::parse(ConfigJson(config));
  CHECK(j["fitbench"]["batches"] == 100);
  CHECK(j["fitbench"]["batch_size"] == 128);  // untouched by the patch
  CHECK(qrp_config_patch(config, "{\"fitbench\": {\"batches\": \"x\"}}") == QRP_ERR_CONFIG);

  int exit_code = -1;
  size_t needed = 0;
  REQUIRE(qrp_run(config, &exit_code, nullptr, 0, &needed) == QRP_OK);
  CHECK(exit_code == 0);
  CHECK(needed > 1);
  CHECK(fs::exists(out / "fitbench.csv"));

  std::vector<char> report(4096);
  REQUIRE(qrp_plotdata(out.c_str(), report.data(), report.size(), &needed) == QRP_OK);
  CHECK(std::string(report.data()).find("wrote") != std::string::npos);
  CHECK(fs::exists(out / "plot" / "fitbench_tanh_bimodal.csv"));
  qrp_config_free(config);
}

}  // namespace
