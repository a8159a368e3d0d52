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

#include "fedsense/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedsense/error.hpp"

namespace fedsense::config {

namespace {

using sim::FederationConfig;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("expected a number, got \"" + v + "\"");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("expected true/false, got \"" + v + "\"");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(trim(item)));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Key {
  std::function<void(FederationConfig&, const std::string&)> set;
  std::function<std::string(const FederationConfig&)> get;
};

#define FS_INT(name, field)                                                      {name, {[](FederationConfig& c, const std::string& v) {                                  c.field = parse_number<decltype(c.field)>(v);                                },                                                                             [](const FederationConfig& c) { return std::to_string(c.field); }}}
#define FS_DOUBLE(name, field)                                                   {name, {[](FederationConfig& c, const std::string& v) {                                  c.field = parse_number<double>(v);                                           },                                                                             [](const FederationConfig& c) { return fmt_double(c.field); }}}
#define FS_BOOL(name, field)                                                     {name, {[](FederationConfig& c, const std::string& v) {                                  c.field = parse_bool(v);                                                     },                                                                             [](const FederationConfig& c) {                                                  return std::string(c.field ? "true" : "false");                              }}}
#define FS_MODE(name, field)                                                     {name, {[](FederationConfig& c, const std::string& v) {                                  c.field = ssl::parse_mode(v);                                                },                                                                             [](const FederationConfig& c) { return ssl::to_string(c.field); }}}

const std::vector<std::pair<std::string, Key>>& keys() {
  static const std::vector<std::pair<std::string, Key>> table = {
      FS_INT("federation.rounds", rounds),
      FS_INT("federation.clients", clients),
      FS_INT("federation.local_epochs", local_epochs),
      FS_DOUBLE("federation.participation", participation),
      FS_INT("federation.seed", seed),
      FS_MODE("ssl.mode", mode),
      FS_DOUBLE("ssl.mask_ratio", mask_ratio),
      FS_INT("ssl.batch_size", batch_size),
      {"model.hidden",
       {[](FederationConfig& c, const std::string& v) { c.hidden = parse_int_list(v); },
        [](const FederationConfig& c) { return join(c.hidden); }}},
      FS_INT("model.feature_dim", feature_dim),
      FS_INT("data.patch_side", data.patch_side),
      FS_INT("data.domains", data.num_domains),
      FS_DOUBLE("data.phase_jitter", data.phase_jitter),
      FS_DOUBLE("data.brightness", data.brightness),
      FS_DOUBLE("data.background", data.background),
      FS_DOUBLE("data.amplitude_scale", data.amplitude_scale),
      FS_DOUBLE("data.noise_scale", data.noise_scale),
      {"data.samples_per_client",
       {[](FederationConfig& c, const std::string& v) {
          c.samples_per_client = parse_int_list(v);
        },
        [](const FederationConfig& c) { return join(c.samples_per_client); }}},
      FS_INT("data.public_samples", public_samples),
      FS_DOUBLE("data.heterogeneity", heterogeneity),
      FS_DOUBLE("scg.beta", scg.beta),
      FS_DOUBLE("scg.lambda", scg.lambda),
      FS_DOUBLE("scg.rho", scg.rho),
      FS_DOUBLE("scg.gamma", scg.gamma),
      FS_DOUBLE("scg.sst_weight", scg.sst_weight),
      FS_INT("csg.bits", bits),
      FS_DOUBLE("csg.alpha", alpha),
      FS_INT("csg.reset_period", reset_period),
      FS_BOOL("csg.feedback", error_feedback),
      {"csg.rounding",
       {[](FederationConfig& c, const std::string& v) {
          if (v == "stochastic") {
            c.rounding = csg::Rounding::kStochastic;
          } else if (v == "deterministic") {
            c.rounding = csg::Rounding::kDeterministic;
          } else {
            throw ConfigError("expected stochastic or deterministic, got \"" + v + "\"");
          }
        },
        [](const FederationConfig& c) {
          return std::string(c.rounding == csg::Rounding::kStochastic ? "stochastic"
                                                                      : "deterministic");
        }}},
      FS_INT("server.clusters", clusters),
      FS_BOOL("server.distill", distill),
      FS_INT("server.distill_batches", distill_batches),
      FS_INT("server.distill_batch_size", distill_batch_size),
      FS_MODE("uni.mode", uni_mode),
      FS_INT("uni.steps", uni_steps),
      FS_DOUBLE("uni.lr", uni_lr),
      FS_INT("probe.samples", probe.samples),
      FS_INT("probe.steps", probe.steps),
      FS_DOUBLE("probe.lr", probe.lr),
      FS_BOOL("metrics.wall_clock", wall_clock),
  };
  return table;
}

#undef FS_INT
#undef FS_DOUBLE
#undef FS_BOOL
#undef FS_MODE

const Key& find_key(const std::string& name) {
  for (const auto& [k, v] : keys()) {
    if (k == name) return v;
  }
  throw ConfigError("unknown config key \"" + name + "\"");
}

void apply(FederationConfig& cfg, const std::string& key, const std::string& value,
           const std::string& where) {
  const Key& k = find_key(key);
  try {
    k.set(cfg, value);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + key + ": " + e.what());
  }
}

}  // namespace

sim::FederationConfig parse_config_text(const std::string& text,
                                        const std::vector<std::string>& overrides) {
  FederationConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno);
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected \"section.key = value\"");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos || value.empty()) {
      throw ConfigError(where + ": expected \"section.key = value\"");
    }
    try {
      apply(cfg, key, value, where);
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw ConfigError(where + ": " + msg);
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override \"" + o + "\" is not key=value");
    }
    apply(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)), "override");
  }
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

sim::FederationConfig parse_config(const std::string& path,
                                   const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_config_text("", overrides);
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

std::vector<std::pair<std::string, std::string>> default_table() {
  const FederationConfig cfg;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : keys()) out.emplace_back(k, v.get(cfg));
  return out;
}

std::string render(const sim::FederationConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : keys()) out += k + " = " + v.get(cfg) + "\n";
  return out;
}

}  // namespace fedsense::config
