// Copyright 2026 The dmoe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>

#include "dmoe/signal.hpp"

namespace dmoe::signal {

// Reads a 16-bit PCM mono WAV, scaling samples by 1/32768. A file whose rate
// differs from `expected_rate` is rejected unless `resample` is set, in which
// case it is linearly resampled.
Waveform read_wav(const std::string& path, int expected_rate = 16000,
                  bool resample = false);

// Writes 16-bit PCM mono, clipping to [-1, 1).
void write_wav(const std::string& path, const Waveform& w);

Waveform resample_linear(const Waveform& w, int target_rate);

}  // namespace dmoe::signal
