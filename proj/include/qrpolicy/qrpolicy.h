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

// C interface to the qrpolicy library. Every fallible call returns a
// qrp_status; on failure qrp_last_error() describes the problem for the
// calling thread. Handles are opaque and owned by the caller.

#ifndef QRPOLICY_QRPOLICY_H_
#define QRPOLICY_QRPOLICY_H_

#include <stddef.h>
#include <stdint.h>

#if defined(QRP_BUILDING_LIBRARY)
#define QRP_API __attribute__((visibility("default")))
#else
#define QRP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qrp_status {
  QRP_OK = 0,
  QRP_ERR_INVALID_ARGUMENT = 1,
  QRP_ERR_DIMENSION_MISMATCH = 2,
  QRP_ERR_NON_FINITE = 3,
  QRP_ERR_IO = 4,
  QRP_ERR_CONFIG = 5,
  QRP_ERR_INTERNAL = 6,
} qrp_status;

typedef struct qrp_net qrp_net;
typedef struct qrp_config qrp_config;

QRP_API const char* qrp_version(void);
// Message for the last failed call on this thread ("" if none).
QRP_API const char* qrp_last_error(void);

// String results use one convention: up to cap - 1 bytes plus a NUL are
// copied to buf (which may be NULL when cap is 0) and *needed receives the
// full length including the NUL.

// ---- Monotonic quantile networks ------------------------------------------

// architecture: "relu", "tanh" or "maxmin".
QRP_API qrp_status qrp_net_create(const char* architecture, int hidden_width,
                                  int group_size, int feature_dim,
                                  double sigma, uint64_t seed, qrp_net** out);
QRP_API void qrp_net_free(qrp_net* net);
QRP_API qrp_status qrp_net_feature_dim(const qrp_net* net, int* out);
// out[i] = G(taus[i]). features is feature_dim x n column-major, or NULL
// when the net has no feature input.
QRP_API qrp_status qrp_net_evaluate(const qrp_net* net, const double* taus,
                                    size_t n, const double* features,
                                    double* out);
// Draws n actions with tau ~ U[0, 1]; taus may be NULL.
QRP_API qrp_status qrp_net_sample(const qrp_net* net, uint64_t seed, size_t n,
                                  double* actions, double* taus);
QRP_API qrp_status qrp_net_save(const qrp_net* net, const char* path);
QRP_API qrp_status qrp_net_load(const char* path, qrp_net** out);

// Trains a fresh net on a named target ("gaussian", "bimodal",
// "discontinuous_uniform"). batches <= 0 uses the default. out_net may be
// NULL.
QRP_API qrp_status qrp_fit_distribution(const char* architecture,
                                        const char* distribution, double lr,
                                        uint64_t seed, int batches,
                                        double* mse, qrp_net** out_net);

// ---- Scoring ----------------------------------------------------------------

QRP_API qrp_status qrp_quantile_loss(double tau, double delta, double* out);
// Midpoint-rule CRPS of the net's distribution at observation z.
QRP_API qrp_status qrp_crps(const qrp_net* net, double z, int n, double* out);
// Density at the tau-quantile; *unbounded is set when the local slope
// vanishes (density reported as +inf).
QRP_API qrp_status qrp_likelihood(const qrp_net* net, double tau,
                                  double* density, int* unbounded);

// ---- Environments -----------------------------------------------------------

// Rewards for two continuous rock-paper-scissors actions under the default
// intervals.
QRP_API qrp_status qrp_rps_judge(double a1, double a2, int* r1, int* r2);
// Expected episode return of the memoryless policy pressing A with p_a and
// B with p_b.
QRP_API qrp_status qrp_choice_policy_value(int episode_length, double p_a,
                                           double p_b, double* out);
QRP_API qrp_status qrp_choice_optimum(int episode_length, int grid_steps,
                                      double* value, double* p_a,
                                      double* p_b);

// ---- Experiments ------------------------------------------------------------

// Defaults for the named experiment ("fitbench", "rps", "choice").
QRP_API qrp_status qrp_config_default(const char* experiment, qrp_config** out);
QRP_API qrp_status qrp_config_from_json(const char* json, qrp_config** out);
QRP_API qrp_status qrp_config_from_file(const char* path, qrp_config** out);
// Applies a JSON merge patch (objects merge, arrays and scalars replace).
QRP_API qrp_status qrp_config_patch(qrp_config* config, const char* json_patch);
QRP_API qrp_status qrp_config_to_json(const qrp_config* config, char* buf,
                                      size_t cap, size_t* needed);
QRP_API void qrp_config_free(qrp_config* config);

// Runs the experiment and writes its output directory. *exit_code is 0 when
// every seed completed and 1 otherwise; the summary JSON is returned in buf.
QRP_API qrp_status qrp_run(const qrp_config* config, int* exit_code,
                           char* buf, size_t cap, size_t* needed);
// Writes <dir>/plot/*.csv. The report lists one "wrote <path>" or
// "warning: <text>" line per event.
QRP_API qrp_status qrp_plotdata(const char* dir, char* buf, size_t cap,
                                size_t* needed);

#ifdef __cplusplus
}  // extern "C"
#endif

#endif  // QRPOLICY_QRPOLICY_H_
