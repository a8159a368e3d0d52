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

// Server side: data-volume weighted aggregation, k-means grouping of client
// models, and similarity-matrix distillation on the public shard.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsense/nn.hpp"
#include "fedsense/ssl.hpp"

namespace fedsense::server {

struct AggregationWeights {
  std::vector<double> p;

  /// p_m = |D_m| / sum |D_i|.
  static AggregationWeights from_sizes(std::span<const std::size_t> sizes);
  void validate() const;
};

ParamVector aggregate(std::span<const ParamVector> vectors,
                      const AggregationWeights& weights);

struct ModelCluster {
  std::vector<int> member_ids;
  ParamVector representative;  // unweighted centroid of member parameters
  double weight = 0.0;         // member data volume over total data volume
};

/// Lloyd's algorithm with k-means++ seeding on raw parameter vectors, at most
/// 100 iterations. A cluster that empties is reseeded with the point farthest
/// from its own centroid.
std::vector<ModelCluster> cluster_models(std::span<const ParamVector> params,
                                         std::span<const std::size_t> shard_sizes,
                                         int k, std::uint64_t seed);

class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(int p) : p_(p), s_(static_cast<std::size_t>(p) * p, 0.0) {}

  int size() const { return p_; }
  double operator()(int i, int j) const { return s_[static_cast<std::size_t>(i) * p_ + j]; }
  double& operator()(int i, int j) { return s_[static_cast<std::size_t>(i) * p_ + j]; }
  std::span<const double> values() const { return s_; }

 private:
  int p_;
  std::vector<double> s_;
};

/// S = Z Z^T / (||Z||_F + eps) for the stacked features Z of `batch`.
SimilarityMatrix similarity_matrix(const nn::EncoderModel& model,
                                   std::span<const ssl::Sample> batch);
SimilarityMatrix similarity_from_features(std::span<const nn::Vec> features);

/// sum_k w_k S(representative_k). `shape` supplies the architecture the
/// representatives are laid out for.
SimilarityMatrix consensus_similarity(std::span<const ModelCluster> clusters,
                                      const nn::EncoderModel& shape,
                                      std::span<const ssl::Sample> batch);

/// (1/p^2) ||S^g - consensus||_F^2 and its gradient w.r.t. the global
/// parameters, consensus held constant.
nn::GradResult distill_loss(const nn::EncoderModel& global,
                            const SimilarityMatrix& consensus,
                            std::span<const ssl::Sample> batch);

struct DistillResult {
  nn::EncoderModel model;
  double loss = 0.0;  // before the step
};

/// One SGD step on the distillation loss. lr == 0 reports the loss only.
DistillResult distill_step(const nn::EncoderModel& global,
                           std::span<const ModelCluster> clusters,
                           std::span<const ssl::Sample> public_batch, double lr);

}  // namespace fedsense::server
