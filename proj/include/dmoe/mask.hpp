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

#include <cstdint>
#include <span>
#include <vector>

namespace dmoe::mask {

// Default attenuation: 10 dB of amplitude in natural-log units (ln(10) / 2).
inline constexpr double kDefaultBeta = 1.1513;

struct BinaryMask {
  std::vector<std::uint8_t> bits;  // each 0 or 1
  std::size_t size() const { return bits.size(); }
};

struct SppVector {
  std::vector<double> probs;  // each in [0, 1]
  std::size_t size() const { return probs.size(); }
};

struct EnhanceConfig {
  double beta = kDefaultBeta;
  // Throws ConfigError unless beta > 0. A zero beta is accepted only by
  // callers that explicitly allow it (oracle_enhance's bypass mode).
  void validate(bool allow_zero = false) const;
};

// Bit k is 1 iff speech strictly dominates noise in bin k.
BinaryMask max_mask(std::span<const double> speech, std::span<const double> noise);

// x_k - (1 - rho_k) * beta.
std::vector<double> soft_attenuate(std::span<const double> x, std::span<const double> rho,
                                   const EnhanceConfig& cfg);

std::vector<double> hard_mask_apply(std::span<const double> x, const BinaryMask& b,
                                    const EnhanceConfig& cfg);

}  // namespace dmoe::mask
