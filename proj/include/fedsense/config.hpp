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

#pragma once

#include <string>
#include <vector>

#include "fedsense/sim.hpp"

namespace fedsense::config {

/// Parses flat `section.key = value` text (`#` starts a comment), then
/// applies `overrides` (each `key=value`) and validates. Unknown keys,
/// malformed lines and invariant violations raise ConfigError.
sim::FederationConfig parse_config_text(const std::string& text,
                                        const std::vector<std::string>& overrides = {});

/// As parse_config_text, reading `path`; an empty path means all defaults.
sim::FederationConfig parse_config(const std::string& path,
                                   const std::vector<std::string>& overrides = {});

/// Every recognized key with its default value, in documentation order.
std::vector<std::pair<std::string, std::string>> default_table();

/// Renders `cfg` back to config text that parse_config_text accepts.
std::string render(const sim::FederationConfig& cfg);

}  // namespace fedsense::config
