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
#include <vector>

#include <json.hpp>

#include "dmoe/enhance.hpp"
#include "dmoe/mask.hpp"
#include "dmoe/signal.hpp"

namespace dmoe::eval {

struct SsnrConfig {
  std::size_t frame_len = 512;
  std::size_t hop = 256;
  double min_db = -10.0;
  double max_db = 35.0;
  // Frames whose reference energy is below silence_ratio times the mean
  // frame energy are skipped.
  double silence_ratio = 1e-8;
};

// Mean of clamped per-frame 10 log10(sum ref^2 / sum (ref - test)^2).
// Reference-directional: swapping the arguments changes the value.
double segmental_snr(const signal::Waveform& reference, const signal::Waveform& test,
                     const SsnrConfig& cfg = {});

struct MaskScores {
  double accuracy = 0.0;
  double auc = 0.5;  // 0.5 when only one class is present
};

// Accuracy of (rho >= 0.5) against the bits, and ROC AUC over every
// (frame, bin) pair via the rank-sum statistic with tied ranks averaged.
MaskScores mask_metrics(const std::vector<mask::SppVector>& predicted,
                        const std::vector<mask::BinaryMask>& truth);
MaskScores mask_metrics(const Grid& predicted, const Grid& truth);

// RMS of the element-wise difference. Symmetric.
double log_spectral_distortion(const signal::LogSpectrum& a, const signal::LogSpectrum& b);

struct UtteranceEval {
  std::string name;
  double snr_db = 0.0;
  double ssnr_noisy = 0.0;
  double ssnr_enhanced = 0.0;
  double ssnr_oracle = 0.0;
  double mask_accuracy = 0.0;
  double mask_auc = 0.5;
  double lsd_noisy = 0.0;
  double lsd_enhanced = 0.0;
  std::size_t frames = 0;
};

// Mixes, enhances with the model and with the oracle mask, and scores both.
UtteranceEval evaluate_mixture(const DmoeParams& p, const signal::Waveform& clean,
                               const signal::Waveform& noise, const data::MixSpec& spec,
                               const data::FeatureConfig& cfg,
                               const enhance::EnhanceOptions& opts = {});

struct EvalReport {
  double ssnr_db = 0.0;        // mean enhanced SSNR
  double ssnr_noisy_db = 0.0;  // mean noisy SSNR
  double ssnr_oracle_db = 0.0;
  double mask_accuracy = 0.0;
  double mask_auc = 0.5;
  double lsd = 0.0;
  std::vector<UtteranceEval> utterances;

  static EvalReport aggregate(std::vector<UtteranceEval> rows);
  nlohmann::json to_json() const;
};

// One CSV line per SNR with the mean of each metric.
std::string per_snr_csv(const std::vector<UtteranceEval>& rows);

}  // namespace dmoe::eval
