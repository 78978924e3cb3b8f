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

#include "dmoe/mask.hpp"

#include <cmath>
#include <string>

#include "dmoe/error.hpp"

namespace dmoe::mask {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
}

}  // namespace

void EnhanceConfig::validate(bool allow_zero) const {
  if (!std::isfinite(beta) || beta < 0.0 || (beta == 0.0 && !allow_zero))
    throw ConfigError("attenuation beta must be positive, got " + std::to_string(beta));
}

BinaryMask max_mask(std::span<const double> speech, std::span<const double> noise) {
  check_lengths(speech.size(), noise.size(), "max_mask");
  BinaryMask b;
  b.bits.resize(speech.size());
  for (std::size_t k = 0; k < speech.size(); ++k) b.bits[k] = speech[k] > noise[k] ? 1 : 0;
  return b;
}

std::vector<double> soft_attenuate(std::span<const double> x, std::span<const double> rho,
                                   const EnhanceConfig& cfg) {
  check_lengths(x.size(), rho.size(), "soft_attenuate");
  cfg.validate(true);
  for (double r : rho)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("speech presence probability outside [0, 1]");
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - (1.0 - rho[k]) * cfg.beta;
  return out;
}

std::vector<double> hard_mask_apply(std::span<const double> x, const BinaryMask& b,
                                    const EnhanceConfig& cfg) {
  check_lengths(x.size(), b.size(), "hard_mask_apply");
  std::vector<double> rho(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) rho[k] = b.bits[k] ? 1.0 : 0.0;
  return soft_attenuate(x, rho, cfg);
}

}  // namespace dmoe::mask
