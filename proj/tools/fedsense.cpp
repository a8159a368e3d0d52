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

// fedsense: command-line runner for the federated pre-training simulator.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fedsense/checkpoint.hpp"
#include "fedsense/config.hpp"
#include "fedsense/csg.hpp"
#include "fedsense/error.hpp"
#include "fedsense/experiments.hpp"
#include "fedsense/rng.hpp"
#include "fedsense/sim.hpp"
#include "fedsense/theory.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fedsense;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "fedsense_out";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int thread_cap() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("FEDSENSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError(std::string("FEDSENSE_THREADS must be a positive integer, got \"") +
                        env + "\"");
    }
    n = std::min<long>(n, v);
  }
  return n;
}

sim::FederationConfig load(const Common& c) {
  auto cfg = config::parse_config(c.config_path, c.overrides);
  if (c.seed_set) cfg.seed = c.seed;
  cfg.threads = thread_cap();
  return cfg;
}

fs::path prepare_out(const Common& c) {
  fs::path dir(c.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

void write_config(const fs::path& dir, const sim::FederationConfig& cfg) {
  std::ofstream f(dir / "config.txt", std::ios::trunc);
  f << config::render(cfg);
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

int cmd_run(const Common& c) {
  const auto cfg = load(c);
  const auto dir = prepare_out(c);
  write_config(dir, cfg);
  const auto result = sim::run_federation(cfg, dir.string());
  const auto& last = result.records.back();
  json summary = {{"status", "ok"},
                  {"rounds", cfg.rounds},
                  {"final_ssl_loss", last.mean_ssl_loss},
                  {"final_global_grad_norm_sq", last.global_grad_norm_sq},
                  {"probe_accuracy",
                   sim::probe_accuracy(result.state.global, cfg.data, cfg.probe, cfg.seed)}};
  std::uint64_t bytes = 0;
  for (const auto& r : result.records) bytes += r.uplink_bytes;
  summary["uplink_bytes"] = bytes;
  write_json(dir / "summary.json", summary);
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_codec_bench(const Common& c, int dim, int draws) {
  if (dim <= 0 || draws <= 1) throw ParameterError("--dim must be positive and --draws > 1");
  const auto cfg = load(c);
  const auto dir = prepare_out(c);
  auto rng = make_rng(cfg.seed, {kStreamQuant, static_cast<std::uint64_t>(dim)});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> g_values(static_cast<std::size_t>(dim));
  for (auto& v : g_values) v = normal(rng);
  const ParamVector g(g_values);

  std::ofstream csv(dir / "codec_bench.csv", std::ios::trunc);
  csv << "bits,dim,wire_bytes,header_bytes,payload_bytes,draws,max_abs_bias,max_bias_z\n";
  for (int bits : {1, 2, 4, 8, 16, 32}) {
    std::vector<double> sum(g.size(), 0.0);
    std::size_t wire = 0;
    for (int k = 0; k < draws; ++k) {
      const auto q = csg::cpr(g, bits, rng, cfg.rounding);
      wire = csg::encode_wire(q).size();
      const auto d = csg::dcpr(q);
      for (std::size_t i = 0; i < g.size(); ++i) sum[i] += d[i];
    }
    // Standard error from the rounding variance unit^2 * p * (1 - p).
    const double norm = static_cast<float>(norm_l2(g));
    const double unit = bits == 1 ? norm / std::sqrt(static_cast<double>(g.size()))
                                  : norm / csg::level_count(bits);
    double max_bias = 0.0, max_z = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double bias = std::abs(sum[i] / draws - g[i]);
      max_bias = std::max(max_bias, bias);
      double var = 0.0;
      if (bits != csg::kFullPrecisionBits && bits != 1 &&
          cfg.rounding == csg::Rounding::kStochastic) {
        const double scaled = std::abs(g[i]) / unit;
        const double p = scaled - std::floor(scaled);
        var = unit * unit * p * (1.0 - p);
      }
      const double se = std::sqrt(var / draws);
      if (se > 0.0) {
        max_z = std::max(max_z, bias / se);
      } else if (bias > 1e-6 * std::abs(g[i])) {
        max_z = INFINITY;
      }
    }
    const std::size_t header = csg::wire_header_size(bits);
    char line[256];
    std::snprintf(line, sizeof line, "%d,%d,%zu,%zu,%zu,%d,%.9g,%.9g\n", bits, dim, wire,
                  header, wire - header, draws, max_bias, max_z);
    csv << line;
    std::cout << line;
  }
  return 0;
}

int cmd_theory_check(const Common& c, int seeds, bool skip_convergence) {
  const auto cfg = load(c);
  const auto dir = prepare_out(c);
  json report = json::object();
  bool ok = true;

  json lemma_rows = json::array();
  for (std::uint64_t s : seed_list(cfg.seed, seeds)) {
    auto run = cfg;
    run.seed = s;
    const auto r = theory::check_lemmas(run);
    ok = ok && r.passed();
    lemma_rows.push_back({{"seed", s},
                          {"passed", r.passed()},
                          {"perturbation_steps", r.perturbation_steps},
                          {"drifted_steps", r.drifted_steps},
                          {"nonzero_perturbations", r.nonzero_perturbations},
                          {"perturbation_violations", r.perturbation_violations},
                          {"drifted_norm_misses", r.drifted_norm_misses},
                          {"max_perturbation_norm", r.max_perturbation_norm},
                          {"feedback_checks", r.feedback_checks},
                          {"feedback_violations", r.feedback_violations},
                          {"feedback_max_excess", r.feedback_max_excess}});
  }
  report["lemmas"] = lemma_rows;

  if (!skip_convergence) {
    json conv_rows = json::array();
    int trending = 0;
    for (std::uint64_t s : seed_list(cfg.seed, seeds)) {
      auto small = theory::small_model_config(cfg);
      small.seed = s;
      const auto r = theory::check_convergence(small);
      trending += r.non_increasing;
      json points = json::array();
      for (const auto& p : r.points) {
        points.push_back({{"rounds", p.rounds},
                          {"gamma", p.gamma},
                          {"mean_grad_norm_sq", p.mean_grad_norm_sq}});
      }
      conv_rows.push_back({{"seed", s}, {"non_increasing", r.non_increasing}, {"points", points}});
    }
    report["convergence"] = conv_rows;
    report["convergence_non_increasing_seeds"] = trending;
    ok = ok && trending == seeds;
  }
  report["status"] = ok ? "ok" : "fail";
  write_json(dir / "theory.json", report);
  std::cout << json{{"status", report["status"]}}.dump() << "\n";
  if (!ok) std::cerr << report.dump() << "\n";
  return ok ? 0 : 1;
}

int cmd_ablate(const Common& c, int seeds) {
  const auto cfg = load(c);
  const auto dir = prepare_out(c);
  auto variants = experiments::component_grid(cfg);
  for (auto& v : experiments::bit_sweep(cfg)) variants.push_back(std::move(v));
  const auto cells = experiments::run_cells(variants, seed_list(cfg.seed, seeds));
  std::ofstream csv(dir / "ablate.csv", std::ios::trunc);
  experiments::write_cells_csv(csv, cells);
  experiments::write_cells_csv(std::cout, cells);
  return 0;
}

int cmd_probe(const Common& c, const std::string& checkpoint) {
  const auto cfg = load(c);
  const auto dir = prepare_out(c);
  const ParamVector params = load_checkpoint(checkpoint);
  const nn::EncoderModel model(cfg.layer_dims(), params, cfg.head_dim());
  const double acc = sim::probe_accuracy(model, cfg.data, cfg.probe, cfg.seed);
  const json summary = {{"status", "ok"}, {"checkpoint", checkpoint}, {"probe_accuracy", acc}};
  write_json(dir / "probe.json", summary);
  std::cout << summary.dump() << "\n";
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
  if (dynamic_cast<const ParameterError*>(&e)) return "parameter";
  if (dynamic_cast<const sim::RoundError*>(&e)) return "round";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated self-supervised pre-training simulator"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "flat key = value config file");
    sub->add_option("--set", common.overrides, "override, key=value (repeatable)")
        ->allow_extra_args(false);
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "federation seed")
        ->each([&](const std::string&) { common.seed_set = true; });
  };

  auto* run = app.add_subcommand("run", "run a federation, write metrics.csv and final.fsns");
  add_common(run);

  int dim = 64, draws = 10000;
  auto* codec = app.add_subcommand("codec-bench", "wire bytes and Monte-Carlo bias per bit width");
  add_common(codec);
  codec->add_option("--dim", dim, "vector dimension");
  codec->add_option("--draws", draws, "quantization draws per bit width");

  int theory_seeds = 1;
  bool skip_convergence = false;
  auto* theory_cmd = app.add_subcommand("theory-check", "live bound checks and convergence trend");
  add_common(theory_cmd);
  theory_cmd->add_option("--seeds", theory_seeds, "number of consecutive seeds")
      ->check(CLI::PositiveNumber);
  theory_cmd->add_flag("--skip-convergence", skip_convergence, "only run the bound checks");

  int ablate_seeds = 1;
  auto* ablate = app.add_subcommand("ablate", "component grid and bit-width sweep");
  add_common(ablate);
  ablate->add_option("--seeds", ablate_seeds, "number of consecutive seeds")
      ->check(CLI::PositiveNumber);

  std::string checkpoint;
  auto* probe = app.add_subcommand("probe", "linear probe on a saved checkpoint");
  add_common(probe);
  probe->add_option("--checkpoint", checkpoint, "FSNS checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(common);
    if (*codec) return cmd_codec_bench(common, dim, draws);
    if (*theory_cmd) return cmd_theory_check(common, theory_seeds, skip_convergence);
    if (*ablate) return cmd_ablate(common, ablate_seeds);
    if (*probe) return cmd_probe(common, checkpoint);
  } catch (const std::exception& e) {
    std::cerr << json{{"status", "error"}, {"kind", error_kind(e)}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  }
  return 2;
}
