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

#include <vector>

#include "dmoe/dataset.hpp"
#include "dmoe/mask.hpp"
#include "dmoe/mixture.hpp"
#include "dmoe/signal.hpp"

namespace dmoe::enhance {

struct EnhanceOptions {
  mask::EnhanceConfig attenuation;
  bool peak_normalize = true;  // rescale only if some |sample| > 1
};

struct EnhanceResult {
  signal::Waveform enhanced;
  Grid spp;  // one row per STFT frame of the input, values in [0, 1]

  std::vector<mask::SppVector> spp_track() const;
};

// Attenuates each frame's log-magnitude by (1 - rho) * beta and resynthesises
// with the noisy phase. `spp` has one row per STFT frame of `noisy`; the
// signal tail past the last full frame is zero-padded for analysis and
// reuses the last SPP row.
signal::Waveform apply_spp(const signal::Waveform& noisy, const Grid& spp,
                           const data::FeatureConfig& cfg, const EnhanceOptions& opts);

EnhanceResult enhance_utterance(const DmoeParams& p, const signal::Waveform& noisy,
                                const data::FeatureConfig& cfg, const EnhanceOptions& opts = {});

// Enhancement driven by the true binary mask of the mixture described by
// `spec`. beta = 0 is accepted and leaves the mixture unchanged.
signal::Waveform oracle_enhance(const signal::Waveform& clean, const signal::Waveform& noise,
                                const data::MixSpec& spec, const mask::EnhanceConfig& cfg,
                                const data::FeatureConfig& features = {},
                                bool peak_normalize = true);

}  // namespace dmoe::enhance
