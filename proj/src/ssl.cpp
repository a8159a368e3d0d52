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

#include "fedsense/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fedsense/checkpoint.hpp"
#include "fedsense/error.hpp"
#include "fedsense/rng.hpp"

namespace fedsense::ssl {

Mode parse_mode(const std::string& name) {
  if (name == "contrastive") return Mode::kContrastive;
  if (name == "masked") return Mode::kMasked;
  throw ParameterError("unknown ssl mode \"" + name + "\"");
}

std::string to_string(Mode mode) {
  return mode == Mode::kContrastive ? "contrastive" : "masked";
}

std::vector<Domain> domain_table(int num_domains) {
  if (num_domains <= 0) throw ParameterError("num_domains must be positive");
  std::vector<Domain> table;
  for (int k = 0; k < num_domains; ++k) {
    Domain d;
    d.orientation = std::numbers::pi * k / num_domains;
    d.frequency = 1.0 + 0.75 * (k % 3);
    d.phase = std::fmod(2.0 * std::numbers::pi * 0.618034 * k,
                        2.0 * std::numbers::pi);
    d.noise = 0.02 + 0.03 * (k % 2);
    table.push_back(d);
  }
  return table;
}

Sample draw_sample(const Domain& domain, int domain_id, const DataConfig& cfg,
                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(0.25 * cfg.amplitude_scale,
                                             0.4 * cfg.amplitude_scale);
  std::uniform_real_distribution<double> bright(-cfg.brightness, cfg.brightness);
  std::uniform_real_distribution<double> jitter(-cfg.phase_jitter,
                                                cfg.phase_jitter);
  std::normal_distribution<double> noise(0.0, domain.noise * cfg.noise_scale);
  const double a = amp(rng);
  const double b = bright(rng);
  const double phase = domain.phase + jitter(rng);
  const double c = std::cos(domain.orientation);
  const double s = std::sin(domain.orientation);
  const int side = cfg.patch_side;
  const double centre = 0.5 * (side - 1);
  Sample out;
  out.domain_id = domain_id;
  out.pixels.resize(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    for (int col = 0; col < side; ++col) {
      const double u = col - centre;
      const double v = r - centre;
      const double arg =
          2.0 * std::numbers::pi * domain.frequency * (u * c + v * s) / side +
          phase;
      double px = cfg.background + b + a * std::sin(arg) + noise(rng);
      px = std::clamp(px, 0.0, 1.0);
      // Keep pixels f32-representable so shard dumps round-trip exactly.
      out.pixels[static_cast<std::size_t>(r) * side + col] =
          static_cast<float>(px);
    }
  }
  return out;
}

namespace {

std::vector<int> apportion(int total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(weights.size());
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = total * weights[k] / sum;
    counts[k] = static_cast<int>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - counts[k], static_cast<int>(k));
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (int i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % remainders.size()].second];
  }
  return counts;
}

Shard build_shard(int owner, int n, std::span<const double> weights,
                  const std::vector<Domain>& domains, const DataConfig& cfg,
                  std::mt19937_64& rng) {
  const auto counts = apportion(n, weights);
  std::vector<int> ids;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    ids.insert(ids.end(), static_cast<std::size_t>(counts[k]),
               static_cast<int>(k));
  }
  std::shuffle(ids.begin(), ids.end(), rng);
  Shard shard;
  shard.owner = owner;
  for (int id : ids) shard.samples.push_back(draw_sample(domains[id], id, cfg, rng));
  return shard;
}

}  // namespace

FederationData gen_federation_data(int num_clients,
                                   std::span<const int> samples_per_client,
                                   int public_samples, double heterogeneity,
                                   std::uint64_t seed, const DataConfig& cfg) {
  if (num_clients <= 0) throw ParameterError("num_clients must be positive");
  if (static_cast<int>(samples_per_client.size()) != num_clients) {
    throw ParameterError("samples_per_client must list one size per client");
  }
  if (!(heterogeneity > 0.0) || !std::isfinite(heterogeneity)) {
    throw ParameterError("heterogeneity must be a positive finite number");
  }
  if (public_samples <= 0) throw ParameterError("public_samples must be positive");
  const auto domains = domain_table(cfg.num_domains);
  FederationData data;
  for (int m = 0; m < num_clients; ++m) {
    if (samples_per_client[m] <= 0) {
      throw ParameterError("every client needs at least one sample");
    }
    auto rng = make_rng(seed, {kStreamData, static_cast<std::uint64_t>(m)});
    std::gamma_distribution<double> gamma(heterogeneity, 1.0);
    std::vector<double> w(domains.size());
    double sum = 0.0;
    for (auto& x : w) sum += (x = gamma(rng));
    if (!(sum > 0.0)) {
      std::fill(w.begin(), w.end(), 0.0);
      w[std::uniform_int_distribution<std::size_t>(0, w.size() - 1)(rng)] = 1.0;
    }
    data.clients.push_back(
        build_shard(m, samples_per_client[m], w, domains, cfg, rng));
  }
  auto rng = make_rng(seed, {kStreamData, 0xffffffffULL});
  const std::vector<double> uniform(domains.size(), 1.0);
  data.server = build_shard(kServerOwner, public_samples, uniform, domains, cfg, rng);
  return data;
}

std::vector<Sample> gen_labeled(int count, std::uint64_t seed,
                                const DataConfig& cfg) {
  if (count <= 0) throw ParameterError("count must be positive");
  const auto domains = domain_table(cfg.num_domains);
  auto rng = make_rng(seed, {kStreamProbe});
  const std::vector<double> uniform(domains.size(), 1.0);
  return build_shard(kServerOwner, count, uniform, domains, cfg, rng).samples;
}

ViewPair make_views(const Sample& x, Mode mode, double mask_ratio,
                    std::mt19937_64& rng) {
  const std::size_t n = x.pixels.size();
  ViewPair out;
  if (mode == Mode::kContrastive) {
    std::normal_distribution<double> noise(0.0, 0.05);
    std::bernoulli_distribution drop(0.1);
    std::uniform_real_distribution<double> shift(-0.1, 0.1);
    auto augment = [&] {
      Vec v(x.pixels);
      for (auto& p : v) p += noise(rng);
      for (auto& p : v) {
        if (drop(rng)) p = 0.0;
      }
      const double s = shift(rng);
      for (auto& p : v) p = std::clamp(p + s, 0.0, 1.0);
      return v;
    };
    out.view_a = augment();
    out.view_b = augment();
    out.mask.assign(n, 0);
    return out;
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw ParameterError("mask_ratio must lie in (0,1)");
  }
  std::bernoulli_distribution masked(mask_ratio);
  out.mask.resize(n);
  std::size_t hits = 0;
  for (auto& m : out.mask) hits += (m = masked(rng) ? 1 : 0);
  if (hits == 0 && n > 0) {
    out.mask[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1;
  }
  out.view_a = x.pixels;
  out.view_b = x.pixels;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.mask[i]) out.view_b[i] = 0.0;
  }
  return out;
}

CosineGrad cosine_with_grad(std::span<const double> a,
                            std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double la = std::sqrt(aa);
  const double lb = std::sqrt(bb);
  const double na = la + kNormEps;
  const double nb = lb + kNormEps;
  const double denom = na * nb;
  if (!(denom > 0.0) || !std::isfinite(denom) || !std::isfinite(ab)) {
    throw NumericalError("degenerate feature norm in cosine similarity", -1);
  }
  CosineGrad out;
  out.cosine = ab / denom;
  out.d_a.resize(a.size());
  out.d_b.resize(b.size());
  const double ua = la > 0.0 ? out.cosine / (na * la) : 0.0;
  const double ub = lb > 0.0 ? out.cosine / (nb * lb) : 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.d_a[i] = b[i] / denom - ua * a[i];
    out.d_b[i] = a[i] / denom - ub * b[i];
  }
  return out;
}

namespace {

nn::GradResult contrastive_loss(const nn::EncoderModel& model,
                                std::span<const ViewPair> batch) {
  std::vector<Vec> inputs;
  inputs.reserve(2 * batch.size());
  for (const auto& vp : batch) {
    inputs.push_back(vp.view_a);
    inputs.push_back(vp.view_b);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  return nn::loss_and_grad(model, inputs, [inv](std::span<const Vec> f) {
    nn::FeatureLoss out;
    out.dfeatures.resize(f.size());
    for (std::size_t i = 0; i + 1 < f.size(); i += 2) {
      auto cg = cosine_with_grad(f[i], f[i + 1]);
      out.loss += (1.0 - cg.cosine) * inv;
      out.dfeatures[i] = std::move(cg.d_a);
      out.dfeatures[i + 1] = std::move(cg.d_b);
      for (auto& g : out.dfeatures[i]) g *= -inv;
      for (auto& g : out.dfeatures[i + 1]) g *= -inv;
    }
    return out;
  });
}

nn::GradResult masked_loss(const nn::EncoderModel& model,
                           std::span<const ViewPair> batch) {
  if (model.head_dim() != model.input_dim()) {
    throw ShapeError("masked mode needs a reconstruction head of input width");
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<nn::ForwardTrace> traces;
  traces.reserve(batch.size());
  Vec grad(model.params().size(), 0.0);
  double loss = 0.0;
  for (const auto& vp : batch) {
    traces.push_back(nn::forward_trace(model, vp.view_b));
    const Vec& feat = traces.back().activations.back();
    const Vec rec = nn::reconstruct(model, feat);
    double count = 0.0;
    for (auto m : vp.mask) count += m;
    if (count == 0.0) throw ParameterError("masked view without masked entries");
    Vec drec(rec.size(), 0.0);
    double err = 0.0;
    for (std::size_t j = 0; j < rec.size(); ++j) {
      if (!vp.mask[j]) continue;
      const double r = rec[j] - vp.view_a[j];
      err += r * r;
      drec[j] = 2.0 * r * inv / count;
    }
    loss += err * inv / count;
    const Vec dfeat = nn::reconstruct_backward(model, feat, drec, grad);
    nn::backward(model, traces.back(), dfeat, grad);
  }
  nn::require_finite_loss(loss, traces);
  return {loss, ParamVector(std::move(grad))};
}

}  // namespace

nn::GradResult ssl_loss(const nn::EncoderModel& model,
                        std::span<const ViewPair> batch, Mode mode) {
  if (batch.empty()) throw ParameterError("ssl_loss needs a non-empty batch");
  return mode == Mode::kContrastive ? contrastive_loss(model, batch)
                                    : masked_loss(model, batch);
}

io::Bytes encode_shard(const Shard& shard) {
  if (shard.samples.empty()) throw ParameterError("cannot encode an empty shard");
  const std::size_t dim = shard.samples.front().pixels.size();
  std::vector<double> flat;
  flat.reserve(shard.size() * (dim + 1));
  for (const auto& s : shard.samples) {
    if (s.pixels.size() != dim) throw ShapeError("ragged shard");
    flat.insert(flat.end(), s.pixels.begin(), s.pixels.end());
    flat.push_back(static_cast<double>(s.domain_id));
  }
  io::Bytes out;
  io::put_u32(out, static_cast<std::uint32_t>(shard.size()));
  io::put_u32(out, static_cast<std::uint32_t>(dim));
  const auto body = encode_checkpoint(ParamVector(std::move(flat)));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Shard decode_shard(std::span<const std::uint8_t> bytes, int owner) {
  io::Reader r(bytes);
  const std::uint32_t count = r.u32("shard count");
  const std::uint32_t dim = r.u32("shard dimension");
  const ParamVector flat = decode_checkpoint(bytes.subspan(8));
  if (count == 0 || dim == 0 ||
      flat.size() != static_cast<std::size_t>(count) * (dim + 1)) {
    throw FormatError("shard header does not match its payload");
  }
  Shard shard;
  shard.owner = owner;
  for (std::size_t i = 0; i < count; ++i) {
    const auto row = flat.values().subspan(i * (dim + 1), dim + 1);
    Sample s;
    s.pixels.assign(row.begin(), row.begin() + dim);
    s.domain_id = static_cast<int>(row[dim]);
    shard.samples.push_back(std::move(s));
  }
  return shard;
}

}  // namespace fedsense::ssl
