/**
 * Copyright 2026 The FedSense Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Round orchestration: broadcast, perturbed local training, compensated
// quantized uplink, aggregation, feedback update and public-data
// distillation, plus metrics and the linear-probe evaluation.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedsense/client_state.hpp"
#include "fedsense/csg.hpp"
#include "fedsense/error.hpp"
#include "fedsense/nn.hpp"
#include "fedsense/scg.hpp"
#include "fedsense/ssl.hpp"

namespace fedsense::sim {

struct ProbeConfig {
  int samples = 1200;  // half fit, half scored
  int steps = 200;
  double lr = 0.5;
};

struct FederationConfig {
  int rounds = 100;
  int clients = 10;
  int local_epochs = 1;
  double participation = 1.0;  // fixed fraction of clients per round
  std::uint64_t seed = 0;
  int threads = 1;

  ssl::Mode mode = ssl::Mode::kMasked;
  double mask_ratio = 0.5;
  int batch_size = 32;

  std::vector<int> hidden = {32};
  int feature_dim = 8;

  ssl::DataConfig data;
  std::vector<int> samples_per_client = {128};  // one entry broadcasts
  int public_samples = 160;
  double heterogeneity = 0.3;

  scg::ScgConfig scg;

  int bits = 8;
  double alpha = 0.9;
  int reset_period = 10;
  bool error_feedback = true;
  csg::Rounding rounding = csg::Rounding::kStochastic;

  int clusters = 3;
  bool distill = true;
  int distill_batches = 5;
  int distill_batch_size = 32;

  ssl::Mode uni_mode = ssl::Mode::kContrastive;
  int uni_steps = 200;
  double uni_lr = 0.05;

  ProbeConfig probe;
  bool wall_clock = false;  // wall_ms stays 0 unless set, keeping CSVs reproducible

  std::vector<int> layer_dims() const;
  int head_dim() const;
  std::vector<int> client_sizes() const;
  void validate() const;
};

struct RoundRecord {
  int round = 0;
  double mean_ssl_loss = 0.0;
  double mean_sst_loss = 0.0;
  double distill_loss = 0.0;
  double global_grad_norm_sq = 0.0;
  double mean_client_drift = 0.0;
  std::uint64_t uplink_bytes = 0;
  std::int64_t wall_ms = 0;
};

/// Live checks of the perturbation-norm and feedback-error bounds.
struct TheoryCounters {
  scg::EpochStats perturbation;
  int feedback_checks = 0;
  int feedback_violations = 0;
  double feedback_max_excess = -1e300;  // max of ||e|| - bound
};

struct FederationState {
  int round = 0;
  nn::EncoderModel global;
  nn::EncoderModel uni;
  std::vector<ClientState> clients;
  ssl::Shard public_shard;
  std::vector<std::vector<ssl::ViewPair>> eval_views;  // fixed, per client
  std::vector<double> feedback_bound;                  // per client
  TheoryCounters checks;
};

/// Raised when a round aborts; names the client (-1 for the server) and phase.
class RoundError : public Error {
 public:
  RoundError(int round, int client, std::string phase, const std::string& what);
  int client() const { return client_; }
  const std::string& phase() const { return phase_; }

 private:
  int client_;
  std::string phase_;
};

/// Pre-trains the frozen universal encoder on the public shard.
nn::EncoderModel pretrain_universal(const FederationConfig& cfg,
                                    const ssl::Shard& public_shard);

FederationState init_federation(const FederationConfig& cfg);

RoundRecord run_round(FederationState& state, const FederationConfig& cfg);

/// Full-batch L_ssl + sst_weight * L_sst at the given parameters, weighted by
/// data volume, on the fixed evaluation views.
nn::GradResult global_objective(const FederationState& state,
                                const FederationConfig& cfg,
                                const ParamVector& params);

struct FederationResult {
  std::vector<RoundRecord> records;
  FederationState state;
};

/// Runs cfg.rounds rounds. When `out_dir` is non-empty writes metrics.csv
/// and final.fsns there.
FederationResult run_federation(const FederationConfig& cfg,
                                const std::string& out_dir = "");

void write_metrics_csv(std::ostream& out, const std::vector<RoundRecord>& records);

/// Linear probe: frozen features, standardized, softmax regression on domain
/// labels of a held-out labeled set; returns test accuracy.
double probe_accuracy(const nn::EncoderModel& model, const ssl::DataConfig& data,
                      const ProbeConfig& probe, std::uint64_t seed);

/// Runs `n` independent tasks on up to `threads` threads.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace fedsense::sim
