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

#include <cstdint>

#include "fedsense/csg.hpp"
#include "fedsense/nn.hpp"
#include "fedsense/ssl.hpp"

namespace fedsense {

/// Everything a client carries between rounds.
struct ClientState {
  int id = 0;
  ssl::Shard shard;
  nn::EncoderModel model;
  csg::FeedbackState feedback;
  std::uint64_t rng_seed = 0;
  ParamVector prev_params;  // the broadcast this round's update is taken against
};

}  // namespace fedsense
