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

#include <span>
#include <string>

#include "fedsense/byte_io.hpp"
#include "fedsense/param_vector.hpp"

namespace fedsense {

/// "FSNS" | u8 version=1 | u32 count | count x f32, all little-endian.
/// Parameters are narrowed to f32 on encode.
io::Bytes encode_checkpoint(const ParamVector& params);
ParamVector decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint(const std::string& path);

}  // namespace fedsense
