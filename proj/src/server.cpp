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

#include "fedsense/server.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "fedsense/error.hpp"

namespace fedsense::server {

AggregationWeights AggregationWeights::from_sizes(
    std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ParameterError("no shard sizes given");
  const double total = static_cast<double>(
      std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  if (!(total > 0.0)) throw ParameterError("total data volume is zero");
  AggregationWeights w;
  for (auto s : sizes) w.p.push_back(static_cast<double>(s) / total);
  return w;
}

void AggregationWeights::validate() const {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw ParameterError("aggregation weights must be >= 0");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ParameterError("aggregation weights must sum to 1");
  }
}

ParamVector aggregate(std::span<const ParamVector> vectors,
                      const AggregationWeights& weights) {
  if (vectors.empty()) throw ParameterError("nothing to aggregate");
  if (vectors.size() != weights.p.size()) {
    throw ShapeError("aggregate: " + std::to_string(vectors.size()) +
                     " vectors but " + std::to_string(weights.p.size()) +
                     " weights");
  }
  weights.validate();
  std::vector<double> out(vectors.front().size(), 0.0);
  for (std::size_t m = 0; m < vectors.size(); ++m) {
    require_same_dim(vectors[m], vectors.front(), "aggregate");
    const double w = weights.p[m];
    const auto v = vectors[m].values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * v[i];
  }
  return ParamVector(std::move(out));
}

namespace {

double sq_dist(const ParamVector& a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

using Centroid = std::vector<double>;

std::vector<Centroid> kmeans_plus_plus(std::span<const ParamVector> pts, int k,
                                       std::mt19937_64& rng) {
  std::vector<Centroid> c;
  std::vector<bool> taken(pts.size(), false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, pts.size() - 1)(rng);
  c.emplace_back(pts[first].raw());
  taken[first] = true;
  std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(c.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts[i], c.back()));
      if (!taken[i]) total += d2[i];
    }
    std::size_t pick = pts.size();
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (taken[i]) continue;
        pick = i;
        if ((r -= d2[i]) < 0.0) break;
      }
    } else {
      // Every remaining point coincides with a centroid; take them in order.
      for (std::size_t i = 0; i < pts.size() && pick == pts.size(); ++i) {
        if (!taken[i]) pick = i;
      }
    }
    taken[pick] = true;
    c.emplace_back(pts[pick].raw());
  }
  return c;
}

// Moves the point farthest from its centroid (taken from a cluster with more
// than one member) into every empty cluster.
void fill_empty(std::span<const ParamVector> pts, std::vector<int>& assign,
                std::vector<Centroid>& centroids) {
  const int k = static_cast<int>(centroids.size());
  std::vector<int> counts(k, 0);
  for (int a : assign) ++counts[a];
  for (int j = 0; j < k; ++j) {
    if (counts[j] > 0) continue;
    std::size_t far = pts.size();
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (counts[assign[i]] <= 1) continue;
      const double d = sq_dist(pts[i], centroids[assign[i]]);
      if (d > best) {
        best = d;
        far = i;
      }
    }
    --counts[assign[far]];
    assign[far] = j;
    counts[j] = 1;
    centroids[j] = pts[far].raw();
  }
}

void recompute_centroids(std::span<const ParamVector> pts,
                         const std::vector<int>& assign,
                         std::vector<Centroid>& centroids) {
  const std::size_t d = pts.front().size();
  std::vector<int> counts(centroids.size(), 0);
  for (auto& c : centroids) c.assign(d, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto& c = centroids[assign[i]];
    ++counts[assign[i]];
    for (std::size_t j = 0; j < d; ++j) c[j] += pts[i][j];
  }
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    for (auto& x : centroids[k]) x /= counts[k];
  }
}

}  // namespace

std::vector<ModelCluster> cluster_models(std::span<const ParamVector> params,
                                         std::span<const std::size_t> shard_sizes,
                                         int k, std::uint64_t seed) {
  const int m = static_cast<int>(params.size());
  if (k <= 0) throw ParameterError("k must be positive");
  if (k > m) {
    throw ParameterError("k=" + std::to_string(k) + " exceeds the number of models " +
                         std::to_string(m));
  }
  if (shard_sizes.size() != params.size()) {
    throw ShapeError("one shard size per model required");
  }
  for (const auto& p : params) require_same_dim(p, params.front(), "cluster_models");

  std::mt19937_64 rng(seed);
  auto centroids = kmeans_plus_plus(params, k, rng);
  std::vector<int> assign(m, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < m; ++i) {
      int best = 0;
      double best_d = sq_dist(params[i], centroids[0]);
      for (int j = 1; j < k; ++j) {
        const double d = sq_dist(params[i], centroids[j]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    std::vector<int> before = assign;
    fill_empty(params, assign, centroids);
    if (assign != before) changed = true;
    recompute_centroids(params, assign, centroids);
    if (!changed) break;
  }

  const double total = static_cast<double>(
      std::accumulate(shard_sizes.begin(), shard_sizes.end(), std::size_t{0}));
  std::vector<ModelCluster> out(k);
  for (int i = 0; i < m; ++i) {
    out[assign[i]].member_ids.push_back(i);
    out[assign[i]].weight += static_cast<double>(shard_sizes[i]) / total;
  }
  for (int j = 0; j < k; ++j) {
    out[j].representative = ParamVector(std::move(centroids[j]));
  }
  return out;
}

SimilarityMatrix similarity_from_features(std::span<const nn::Vec> z) {
  if (z.empty()) throw ParameterError("similarity needs a non-empty batch");
  const int p = static_cast<int>(z.size());
  double fro_sq = 0.0;
  for (const auto& row : z) {
    for (double v : row) fro_sq += v * v;
  }
  const double denom = std::sqrt(fro_sq) + ssl::kNormEps;
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw NumericalError("degenerate feature matrix norm", -1);
  }
  SimilarityMatrix s(p);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < z[i].size(); ++c) acc += z[i][c] * z[j][c];
      s(i, j) = s(j, i) = acc / denom;
    }
  }
  return s;
}

SimilarityMatrix similarity_matrix(const nn::EncoderModel& model,
                                   std::span<const ssl::Sample> batch) {
  std::vector<nn::Vec> z;
  z.reserve(batch.size());
  for (const auto& s : batch) z.push_back(nn::forward(model, s.pixels));
  return similarity_from_features(z);
}

SimilarityMatrix consensus_similarity(std::span<const ModelCluster> clusters,
                                      const nn::EncoderModel& shape,
                                      std::span<const ssl::Sample> batch) {
  if (clusters.empty()) throw ParameterError("no clusters");
  double wsum = 0.0;
  for (const auto& c : clusters) wsum += c.weight;
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw ParameterError("cluster weights must sum to 1");
  }
  SimilarityMatrix out(static_cast<int>(batch.size()));
  std::vector<double> acc(out.values().size(), 0.0);
  for (const auto& c : clusters) {
    const auto s = similarity_matrix(shape.with_params(c.representative), batch);
    const auto v = s.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c.weight * v[i];
  }
  for (int i = 0; i < out.size(); ++i) {
    for (int j = 0; j < out.size(); ++j) {
      out(i, j) = acc[static_cast<std::size_t>(i) * out.size() + j];
    }
  }
  return out;
}

nn::GradResult distill_loss(const nn::EncoderModel& global,
                            const SimilarityMatrix& consensus,
                            std::span<const ssl::Sample> batch) {
  if (batch.empty()) throw ParameterError("distillation needs a non-empty batch");
  if (consensus.size() != static_cast<int>(batch.size())) {
    throw ShapeError("consensus size does not match the batch");
  }
  std::vector<nn::Vec> inputs;
  inputs.reserve(batch.size());
  for (const auto& s : batch) inputs.push_back(s.pixels);
  const int p = static_cast<int>(batch.size());
  const double inv_p2 = 1.0 / (static_cast<double>(p) * p);
  return nn::loss_and_grad(global, inputs, [&](std::span<const nn::Vec> z) {
    const SimilarityMatrix s = similarity_from_features(z);
    double fro_sq = 0.0;
    for (const auto& row : z) {
      for (double v : row) fro_sq += v * v;
    }
    const double fro = std::sqrt(fro_sq);
    const double n = fro + ssl::kNormEps;
    // D = dL/dS (symmetric); <D, Z Z^T> drives the normalization term.
    std::vector<double> d(static_cast<std::size_t>(p) * p);
    nn::FeatureLoss out;
    double d_dot_g = 0.0;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) {
        const double diff = s(i, j) - consensus(i, j);
        out.loss += diff * diff * inv_p2;
        const double dij = 2.0 * diff * inv_p2;
        d[static_cast<std::size_t>(i) * p + j] = dij;
        d_dot_g += dij * s(i, j) * n;
      }
    }
    const double norm_coeff = fro > 0.0 ? d_dot_g / (n * n * fro) : 0.0;
    out.dfeatures.assign(p, nn::Vec(z.front().size(), 0.0));
    for (int i = 0; i < p; ++i) {
      auto& dz = out.dfeatures[i];
      for (int j = 0; j < p; ++j) {
        const double coeff = 2.0 * d[static_cast<std::size_t>(i) * p + j] / n;
        for (std::size_t c = 0; c < dz.size(); ++c) dz[c] += coeff * z[j][c];
      }
      for (std::size_t c = 0; c < dz.size(); ++c) dz[c] -= norm_coeff * z[i][c];
    }
    return out;
  });
}

DistillResult distill_step(const nn::EncoderModel& global,
                           std::span<const ModelCluster> clusters,
                           std::span<const ssl::Sample> public_batch, double lr) {
  if (public_batch.empty()) throw ParameterError("distillation needs a non-empty batch");
  if (!(lr >= 0.0)) throw ParameterError("distillation lr must be >= 0");
  const SimilarityMatrix consensus = consensus_similarity(clusters, global, public_batch);
  const nn::GradResult g = distill_loss(global, consensus, public_batch);
  if (lr == 0.0) return {global, g.loss};
  return {global.with_params(nn::sgd_step(global.params(), g.grad, lr)), g.loss};
}

}  // namespace fedsense::server
