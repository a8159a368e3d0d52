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

#include "fedsense/experiments.hpp"

#include <cstdio>
#include <ostream>

namespace fedsense::experiments {

sim::FederationConfig with_components(const sim::FederationConfig& base,
                                      bool perturbation, bool sst, bool distill) {
  sim::FederationConfig cfg = base;
  if (!perturbation) cfg.scg.lambda = 0.0;
  if (!sst) cfg.scg.sst_weight = 0.0;
  cfg.distill = base.distill && distill;
  return cfg;
}

sim::FederationConfig fedavg_baseline(const sim::FederationConfig& base) {
  sim::FederationConfig cfg = with_components(base, false, false, false);
  cfg.scg.beta = 0.0;
  cfg.bits = csg::kFullPrecisionBits;
  cfg.error_feedback = false;
  return cfg;
}

sim::FederationConfig uniform_quantizer(const sim::FederationConfig& base, int bits) {
  sim::FederationConfig cfg = base;
  cfg.bits = bits;
  cfg.error_feedback = false;
  cfg.rounding = csg::Rounding::kDeterministic;
  return cfg;
}

std::vector<Variant> component_grid(const sim::FederationConfig& base) {
  std::vector<Variant> out;
  for (int mask = 7; mask >= 0; --mask) {
    const bool p = mask & 4, s = mask & 2, d = mask & 1;
    char name[64];
    std::snprintf(name, sizeof name, "pert=%d,sst=%d,distill=%d", p, s, d);
    out.push_back({name, with_components(base, p, s, d)});
  }
  return out;
}

std::vector<Variant> single_ablations(const sim::FederationConfig& base) {
  return {{"full", base},
          {"no_perturbation", with_components(base, false, true, true)},
          {"no_sst", with_components(base, true, false, true)},
          {"no_distill", with_components(base, true, true, false)}};
}

std::vector<Variant> bit_sweep(const sim::FederationConfig& base) {
  std::vector<Variant> out;
  for (int b : {32, 8, 2, 1}) {
    sim::FederationConfig cfg = base;
    cfg.bits = b;
    out.push_back({"bits=" + std::to_string(b), cfg});
  }
  return out;
}

std::vector<Variant> quantizer_comparison(const sim::FederationConfig& base) {
  std::vector<Variant> out;
  sim::FederationConfig full = base;
  full.bits = csg::kFullPrecisionBits;
  out.push_back({"full_precision", full});
  for (int b : {8, 2, 1}) {
    sim::FederationConfig ours = base;
    ours.bits = b;
    out.push_back({"ours_b" + std::to_string(b), ours});
    out.push_back({"uniform_b" + std::to_string(b), uniform_quantizer(base, b)});
  }
  return out;
}

std::vector<Variant> local_epoch_presets(const sim::FederationConfig& base) {
  std::vector<Variant> out;
  for (auto [e, t] : {std::pair{1, 100}, std::pair{4, 25}, std::pair{100, 1}}) {
    sim::FederationConfig cfg = base;
    cfg.local_epochs = e;
    cfg.rounds = t;
    out.push_back({"E=" + std::to_string(e) + ",T=" + std::to_string(t), cfg});
  }
  return out;
}

Cell run_cell(const Variant& variant, std::uint64_t seed) {
  sim::FederationConfig cfg = variant.cfg;
  cfg.seed = seed;
  const auto result = sim::run_federation(cfg);
  Cell cell;
  cell.variant = variant.name;
  cell.seed = seed;
  cell.probe_accuracy = sim::probe_accuracy(result.state.global, cfg.data, cfg.probe, seed);
  cell.final_ssl_loss = result.records.back().mean_ssl_loss;
  for (const auto& r : result.records) cell.uplink_bytes += r.uplink_bytes;
  return cell;
}

std::vector<Cell> run_cells(const std::vector<Variant>& variants,
                            const std::vector<std::uint64_t>& seeds) {
  std::vector<Cell> cells;
  for (std::uint64_t seed : seeds) {
    for (const auto& v : variants) cells.push_back(run_cell(v, seed));
  }
  return cells;
}

void write_cells_csv(std::ostream& out, const std::vector<Cell>& cells) {
  out << "variant,seed,probe_accuracy,final_ssl_loss,uplink_bytes\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, ",%llu,%.9g,%.9g,%llu\n",
                  static_cast<unsigned long long>(c.seed), c.probe_accuracy,
                  c.final_ssl_loss, static_cast<unsigned long long>(c.uplink_bytes));
    out << '"' << c.variant << '"' << buf;
  }
}

}  // namespace fedsense::experiments
