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

// Named configuration variants and a runner that reports the final probe
// accuracy and SSL loss per (variant, seed) cell.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedsense/sim.hpp"

namespace fedsense::experiments {

struct Variant {
  std::string name;
  sim::FederationConfig cfg;
};

/// Turns the perturbation (lambda), the alignment term (sst_weight) and the
/// server distillation on or off; everything else is kept from `base`.
sim::FederationConfig with_components(const sim::FederationConfig& base,
                                      bool perturbation, bool sst, bool distill);

/// Weighted FedAvg over the SSL loss: no perturbation, no alignment term, no
/// distillation, full-precision uplink without feedback.
sim::FederationConfig fedavg_baseline(const sim::FederationConfig& base);

/// Deterministic-level quantizer without error feedback at `bits`.
sim::FederationConfig uniform_quantizer(const sim::FederationConfig& base, int bits);

/// 2^3 on/off grid, full configuration first, all-off last. Names look like
/// "pert=1,sst=0,distill=1".
std::vector<Variant> component_grid(const sim::FederationConfig& base);

/// "full" plus the three single-component ablations.
std::vector<Variant> single_ablations(const sim::FederationConfig& base);

/// Bit widths {32, 8, 2, 1} with the configured codec.
std::vector<Variant> bit_sweep(const sim::FederationConfig& base);

/// ours-b / uniform-b for b in {1, 2, 8} plus full precision.
std::vector<Variant> quantizer_comparison(const sim::FederationConfig& base);

/// (E, T) in {(1,100), (4,25), (100,1)}.
std::vector<Variant> local_epoch_presets(const sim::FederationConfig& base);

struct Cell {
  std::string variant;
  std::uint64_t seed = 0;
  double probe_accuracy = 0.0;
  double final_ssl_loss = 0.0;
  std::uint64_t uplink_bytes = 0;  // summed over rounds
};

/// Runs the variant with federation seed `seed` and probes the final model.
Cell run_cell(const Variant& variant, std::uint64_t seed);

std::vector<Cell> run_cells(const std::vector<Variant>& variants,
                            const std::vector<std::uint64_t>& seeds);

void write_cells_csv(std::ostream& out, const std::vector<Cell>& cells);

}  // namespace fedsense::experiments
