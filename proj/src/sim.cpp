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

#include "fedsense/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include "fedsense/checkpoint.hpp"
#include "fedsense/rng.hpp"
#include "fedsense/server.hpp"

namespace fedsense::sim {

std::vector<int> FederationConfig::layer_dims() const {
  std::vector<int> dims{data.patch_dim()};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(feature_dim);
  return dims;
}

int FederationConfig::head_dim() const {
  return mode == ssl::Mode::kMasked ? data.patch_dim() : 0;
}

std::vector<int> FederationConfig::client_sizes() const {
  if (samples_per_client.size() == 1) {
    return std::vector<int>(static_cast<std::size_t>(clients), samples_per_client[0]);
  }
  return samples_per_client;
}

void FederationConfig::validate() const {
  if (rounds < 1) throw ParameterError("federation.rounds: T must be >= 1");
  if (clients < 1) throw ParameterError("federation.clients: M must be >= 1");
  if (local_epochs < 1) throw ParameterError("federation.local_epochs: E must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ParameterError("federation.participation must lie in (0,1]");
  }
  if (threads < 1) throw ParameterError("threads must be >= 1");
  if (bits < 1 || bits > 32) throw ParameterError("csg.bits: 1 ≤ b ≤ 32 required");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ParameterError("csg.alpha must lie in [0,1)");
  if (reset_period < 1) throw ParameterError("csg.reset_period must be >= 1");
  if (batch_size < 1) throw ParameterError("ssl.batch_size must be >= 1");
  if (mode == ssl::Mode::kMasked && !(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw ParameterError("ssl.mask_ratio must lie in (0,1)");
  }
  if (feature_dim < 1) throw ParameterError("model.feature_dim must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw ParameterError("model.hidden widths must be >= 1");
  }
  if (data.patch_side < 1) throw ParameterError("data.patch_side must be >= 1");
  if (data.num_domains < 1) throw ParameterError("data.domains must be >= 1");
  if (samples_per_client.size() != 1 &&
      static_cast<int>(samples_per_client.size()) != clients) {
    throw ParameterError("data.samples_per_client needs 1 or M entries");
  }
  for (int n : samples_per_client) {
    if (n < 1) throw ParameterError("data.samples_per_client entries must be >= 1");
  }
  if (public_samples < 1) throw ParameterError("data.public_samples must be >= 1");
  if (!(heterogeneity > 0.0)) throw ParameterError("data.heterogeneity must be > 0");
  if (clusters < 1) throw ParameterError("server.clusters must be >= 1");
  if (distill_batches < 0) throw ParameterError("server.distill_batches must be >= 0");
  if (distill_batch_size < 1) throw ParameterError("server.distill_batch_size must be >= 1");
  if (uni_steps < 0) throw ParameterError("uni.steps must be >= 0");
  if (!(uni_lr >= 0.0)) throw ParameterError("uni.lr must be >= 0");
  if (probe.samples < 2) throw ParameterError("probe.samples must be >= 2");
  if (probe.steps < 0) throw ParameterError("probe.steps must be >= 0");
  scg.validate();
}

RoundError::RoundError(int round, int client, std::string phase,
                       const std::string& what)
    : Error("round " + std::to_string(round) + ", " +
            (client >= 0 ? "client " + std::to_string(client) : std::string("server")) +
            ", phase " + phase + ": " + what),
      client_(client),
      phase_(std::move(phase)) {}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

std::vector<ssl::Sample> cyclic_batch(const ssl::Shard& shard,
                                      std::vector<std::size_t>& order,
                                      std::size_t& cursor, int batch_size,
                                      std::mt19937_64& rng) {
  std::vector<ssl::Sample> batch;
  const int want = std::min<int>(batch_size, static_cast<int>(shard.size()));
  while (static_cast<int>(batch.size()) < want) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    batch.push_back(shard.samples[order[cursor++]]);
  }
  return batch;
}

std::vector<std::size_t> iota_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

nn::EncoderModel pretrain_universal(const FederationConfig& cfg,
                                    const ssl::Shard& public_shard) {
  const int head = cfg.uni_mode == ssl::Mode::kMasked ? cfg.data.patch_dim() : 0;
  auto rng = make_rng(cfg.seed, {kStreamUni});
  nn::EncoderModel uni = nn::EncoderModel::random(cfg.layer_dims(), head, rng);
  auto order = iota_order(public_shard.size());
  std::size_t cursor = order.size();
  for (int step = 0; step < cfg.uni_steps && cfg.uni_lr > 0.0; ++step) {
    const auto batch = cyclic_batch(public_shard, order, cursor, cfg.batch_size, rng);
    std::vector<ssl::ViewPair> views;
    for (const auto& s : batch) {
      views.push_back(ssl::make_views(s, cfg.uni_mode, cfg.mask_ratio, rng));
    }
    const auto g = ssl::ssl_loss(uni, views, cfg.uni_mode);
    uni = uni.with_params(nn::sgd_step(uni.params(), g.grad, cfg.uni_lr));
  }
  return uni;
}

FederationState init_federation(const FederationConfig& cfg) {
  cfg.validate();
  const auto sizes = cfg.client_sizes();
  auto data = ssl::gen_federation_data(cfg.clients, sizes, cfg.public_samples,
                                       cfg.heterogeneity, cfg.seed, cfg.data);
  auto init_rng = make_rng(cfg.seed, {kStreamInit});
  FederationState st{
      0,
      nn::EncoderModel::random(cfg.layer_dims(), cfg.head_dim(), init_rng),
      pretrain_universal(cfg, data.server),
      {},
      std::move(data.server),
      {},
      std::vector<double>(static_cast<std::size_t>(cfg.clients), 0.0),
      {}};
  const std::size_t dim = st.global.params().size();
  for (int m = 0; m < cfg.clients; ++m) {
    ClientState c{m,
                  std::move(data.clients[m]),
                  st.global,
                  csg::FeedbackState::zeros(dim, cfg.alpha, cfg.reset_period),
                  cfg.seed ^ static_cast<std::uint64_t>(m),
                  st.global.params()};
    auto eval_rng = make_rng(c.rng_seed, {kStreamEval});
    std::vector<ssl::ViewPair> views;
    for (const auto& s : c.shard.samples) {
      views.push_back(ssl::make_views(s, cfg.mode, cfg.mask_ratio, eval_rng));
    }
    st.eval_views.push_back(std::move(views));
    st.clients.push_back(std::move(c));
  }
  return st;
}

nn::GradResult global_objective(const FederationState& state,
                                const FederationConfig& cfg,
                                const ParamVector& params) {
  const nn::EncoderModel model = state.global.with_params(params);
  std::vector<std::size_t> sizes;
  for (const auto& c : state.clients) sizes.push_back(c.shard.size());
  const auto w = server::AggregationWeights::from_sizes(sizes);
  std::vector<double> grad(params.size(), 0.0);
  double loss = 0.0;
  for (std::size_t m = 0; m < state.clients.size(); ++m) {
    auto g = ssl::ssl_loss(model, state.eval_views[m], cfg.mode);
    double lm = g.loss;
    ParamVector gm = g.grad;
    if (cfg.scg.sst_weight > 0.0) {
      const auto s = scg::sst_loss(model, state.uni, state.clients[m].shard.samples);
      lm += cfg.scg.sst_weight * s.loss;
      gm = gm + cfg.scg.sst_weight * s.grad;
    }
    loss += w.p[m] * lm;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w.p[m] * gm[i];
  }
  return {loss, ParamVector(std::move(grad))};
}

namespace {

struct ClientUpload {
  io::Bytes wire;
  ParamVector compensated;
  scg::EpochStats stats;
  double drift = 0.0;
  std::optional<ClientState> next;
};

std::vector<int> select_participants(const FederationConfig& cfg, int round) {
  std::vector<int> ids(static_cast<std::size_t>(cfg.clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (cfg.participation >= 1.0) return ids;
  const int count = std::max(
      1, static_cast<int>(std::lround(cfg.participation * cfg.clients)));
  auto rng = make_rng(cfg.seed, {kStreamParticipation, static_cast<std::uint64_t>(round)});
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

RoundRecord run_round(FederationState& state, const FederationConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int round = state.round + 1;
  const ParamVector theta_global = state.global.params();
  const auto participants = select_participants(cfg, round);
  const int n = static_cast<int>(participants.size());

  const scg::LocalOptions opts{cfg.mode, cfg.batch_size, cfg.mask_ratio};
  std::vector<ClientUpload> uploads(static_cast<std::size_t>(n));
  parallel_for(n, cfg.threads, [&](int i) {
    const int m = participants[i];
    ClientState client = state.clients[m];
    std::string phase = "local_train";
    try {
      client.prev_params = theta_global;
      client.model = state.global;
      auto rng = make_rng(client.rng_seed, {kStreamLocal, static_cast<std::uint64_t>(round)});
      ClientUpload& up = uploads[i];
      for (int e = 0; e < cfg.local_epochs; ++e) {
        client = scg::local_train_epoch(std::move(client), theta_global, state.uni,
                                        cfg.scg, opts, rng, &up.stats);
      }
      phase = "compress";
      const ParamVector delta = client.model.params() - theta_global;
      up.drift = norm_l2(delta);
      up.compensated = cfg.error_feedback ? csg::compensate(delta, client.feedback) : delta;
      auto qrng = make_rng(client.rng_seed, {kStreamQuant, static_cast<std::uint64_t>(round)});
      up.wire = csg::encode_wire(csg::cpr(up.compensated, cfg.bits, qrng, cfg.rounding));
      up.next = std::move(client);
    } catch (const Error& e) {
      throw RoundError(round, m, phase, e.what());
    }
  });

  RoundRecord rec;
  rec.round = round;
  std::vector<ParamVector> deq;
  std::vector<std::size_t> sizes;
  for (int i = 0; i < n; ++i) {
    const int m = participants[i];
    auto& up = uploads[i];
    try {
      const csg::QuantizedUpdate q = csg::decode_wire(up.wire);
      deq.push_back(csg::dcpr(q));
      if (cfg.error_feedback) {
        csg::FeedbackTrace trace;
        up.next->feedback = csg::update_feedback(up.next->feedback, up.compensated, q, &trace);
        double& bound = state.feedback_bound[m];
        bound = cfg.alpha * bound + (1.0 - cfg.alpha) * trace.instantaneous_norm;
        ++state.checks.feedback_checks;
        const double excess = trace.error_norm - bound;
        state.checks.feedback_max_excess = std::max(state.checks.feedback_max_excess, excess);
        if (excess > 1e-9) ++state.checks.feedback_violations;
        if (trace.reset) bound = 0.0;
      }
    } catch (const Error& e) {
      throw RoundError(round, m, "decode", e.what());
    }
    sizes.push_back(up.next->shard.size());
    rec.uplink_bytes += up.wire.size();
    rec.mean_client_drift += up.drift / n;
    if (up.stats.steps > 0) {
      rec.mean_ssl_loss += up.stats.ssl_loss_sum / up.stats.steps / n;
      rec.mean_sst_loss += up.stats.sst_loss_sum / up.stats.steps / n;
    }
    state.checks.perturbation.merge(up.stats);
    state.clients[m] = std::move(*up.next);
  }

  nn::EncoderModel global = state.global;
  try {
    const auto w = server::AggregationWeights::from_sizes(sizes);
    global = global.with_params(theta_global + server::aggregate(deq, w));
  } catch (const Error& e) {
    throw RoundError(round, -1, "aggregate", e.what());
  }

  if (cfg.distill && cfg.distill_batches > 0) {
    try {
      std::vector<ParamVector> client_params;
      for (const auto& d : deq) client_params.push_back(theta_global + d);
      auto rng = make_rng(cfg.seed, {kStreamServer, static_cast<std::uint64_t>(round)});
      const auto clusters = server::cluster_models(
          client_params, sizes, std::min(cfg.clusters, n), rng());
      auto order = iota_order(state.public_shard.size());
      std::size_t cursor = order.size();
      for (int b = 0; b < cfg.distill_batches; ++b) {
        const auto batch = cyclic_batch(state.public_shard, order, cursor,
                                        cfg.distill_batch_size, rng);
        auto res = server::distill_step(global, clusters, batch, cfg.scg.gamma);
        global = std::move(res.model);
        rec.distill_loss += res.loss / cfg.distill_batches;
      }
    } catch (const Error& e) {
      throw RoundError(round, -1, "distill", e.what());
    }
  }

  state.global = std::move(global);
  state.round = round;
  try {
    const auto g = global_objective(state, cfg, state.global.params());
    rec.global_grad_norm_sq = dot(g.grad, g.grad);
  } catch (const Error& e) {
    throw RoundError(round, -1, "evaluate", e.what());
  }
  if (cfg.wall_clock) {
    rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  }
  return rec;
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundRecord>& records) {
  out << "round,mean_ssl_loss,mean_sst_loss,distill_loss,global_grad_norm_sq,"
         "mean_client_drift,uplink_bytes,wall_ms\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%llu,%lld\n", r.round,
                  r.mean_ssl_loss, r.mean_sst_loss, r.distill_loss,
                  r.global_grad_norm_sq, r.mean_client_drift,
                  static_cast<unsigned long long>(r.uplink_bytes),
                  static_cast<long long>(r.wall_ms));
    out << buf;
  }
}

FederationResult run_federation(const FederationConfig& cfg,
                                const std::string& out_dir) {
  FederationResult result{{}, init_federation(cfg)};
  for (int t = 0; t < cfg.rounds; ++t) {
    result.records.push_back(run_round(result.state, cfg));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(std::filesystem::path(out_dir) / "metrics.csv", std::ios::trunc);
    if (!csv) throw Error("cannot write metrics.csv under " + out_dir);
    write_metrics_csv(csv, result.records);
    save_checkpoint((std::filesystem::path(out_dir) / "final.fsns").string(),
                    result.state.global.params());
  }
  return result;
}

double probe_accuracy(const nn::EncoderModel& model, const ssl::DataConfig& data,
                      const ProbeConfig& probe, std::uint64_t seed) {
  const auto labeled = ssl::gen_labeled(probe.samples, seed, data);
  const int classes = data.num_domains;
  const std::size_t n_fit = labeled.size() / 2;
  std::vector<nn::Vec> feats;
  feats.reserve(labeled.size());
  for (const auto& s : labeled) feats.push_back(nn::forward(model, s.pixels));
  const std::size_t d = feats.front().size();

  // Standardize with statistics of the fitting half.
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n_fit; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += feats[i][j] / n_fit;
  }
  for (std::size_t i = 0; i < n_fit; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = feats[i][j] - mean[j];
      scale[j] += c * c / n_fit;
    }
  }
  for (auto& s : scale) s = s > 1e-18 ? 1.0 / std::sqrt(s) : 0.0;
  for (auto& f : feats) {
    for (std::size_t j = 0; j < d; ++j) f[j] = (f[j] - mean[j]) * scale[j];
  }

  std::vector<double> w(static_cast<std::size_t>(classes) * d, 0.0);
  std::vector<double> b(static_cast<std::size_t>(classes), 0.0);
  auto logits = [&](const nn::Vec& f, std::vector<double>& out) {
    for (int c = 0; c < classes; ++c) {
      double acc = b[c];
      for (std::size_t j = 0; j < d; ++j) acc += w[c * d + j] * f[j];
      out[c] = acc;
    }
  };
  std::vector<double> z(static_cast<std::size_t>(classes));
  for (int step = 0; step < probe.steps; ++step) {
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    for (std::size_t i = 0; i < n_fit; ++i) {
      logits(feats[i], z);
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (auto& v : z) sum += (v = std::exp(v - mx));
      for (int c = 0; c < classes; ++c) {
        const double g = (z[c] / sum - (labeled[i].domain_id == c ? 1.0 : 0.0)) / n_fit;
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[c * d + j] += g * feats[i][j];
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= probe.lr * gw[k];
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= probe.lr * gb[k];
  }
  int correct = 0;
  for (std::size_t i = n_fit; i < labeled.size(); ++i) {
    logits(feats[i], z);
    const int pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    correct += pred == labeled[i].domain_id;
  }
  return static_cast<double>(correct) / static_cast<double>(labeled.size() - n_fit);
}

}  // namespace fedsense::sim
