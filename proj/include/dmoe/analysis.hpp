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

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmoe/dataset.hpp"
#include "dmoe/mixture.hpp"

namespace dmoe::analysis {

// Gate usage per regime tag. Rows of both tables sum to 1.
struct GatingTable {
  std::vector<int> regimes;                // sorted distinct tags
  std::vector<std::size_t> frames;         // per regime
  Grid mean_prob;                          // regimes x m, mean gate probability
  Grid hard_fraction;                      // regimes x m, argmax routing share
  double routing_entropy = 0.0;            // entropy (nats) of the corpus-mean gate distribution
  double mean_frame_entropy = 0.0;         // mean per-frame gate entropy (nats)

  std::size_t majority_expert(std::size_t regime_row) const;
  double majority_fraction(std::size_t regime_row) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Requires every frame to carry a regime tag.
GatingTable gating_stats(const DmoeParams& p, const data::Corpus& corpus);

// Final SPP per frame with every expert fed an all-ones input and the gate
// fed the frame's real gate input. frames x num_bins.
Grid expert_probe(const DmoeParams& p, const data::Corpus& corpus);

// Energy share of each probe row in bins below `split_hz`.
Eigen::VectorXd low_band_share(const Grid& spp_rows, const data::FeatureConfig& cfg,
                               double split_hz = 2000.0);

// Held-out mixtures for SSNR scoring in the sweep.
struct HeldOut {
  std::vector<signal::Waveform> cleans;
  signal::Waveform noise;
  data::MixSpec spec;
};

struct SweepRow {
  std::size_t num_experts = 0;
  double mask_accuracy = 0.0;
  double mask_auc = 0.5;
  double train_mean_loglik = 0.0;
  double ssnr_db = 0.0;
  bool has_ssnr = false;
  TrainReport report;
};

// Trains one joint model per expert count with identical seed and budget and
// scores mask accuracy on `eval`. Sequential unless `parallel`.
std::vector<SweepRow> expert_sweep(const data::Corpus& train, const data::Corpus& eval,
                                   std::span<const std::size_t> m_list, const TrainConfig& cfg,
                                   const HeldOut* heldout = nullptr, bool parallel = false);

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace dmoe::analysis
