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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmoe/mask.hpp"
#include "dmoe/signal.hpp"

namespace dmoe::data {

// Analysis and feature configuration shared by corpora, models and the
// enhancement pipeline.
struct FeatureConfig {
  int sample_rate = 16000;
  std::size_t frame_len = 512;
  std::size_t hop = 256;
  signal::Window window = signal::Window::kHamming;
  std::size_t num_filters = 26;
  std::size_t num_ceps = 13;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = signal::kDefaultLogFloor;
  std::size_t context = 4;  // frames on each side

  std::size_t num_bins() const { return frame_len / 2 + 1; }
  std::size_t span() const { return 2 * context + 1; }
  std::size_t expert_dim() const { return num_bins() * span(); }
  std::size_t gate_dim() const { return num_ceps * span(); }
  signal::MelConfig mel() const;
  void validate() const;
};

nlohmann::json to_json(const FeatureConfig& cfg);
FeatureConfig feature_config_from_json(const nlohmann::json& j);

// Name of the first field on which the two configurations differ.
std::optional<std::string> first_mismatch(const FeatureConfig& a, const FeatureConfig& b);

struct FeaturePair {
  std::vector<double> expert_input;  // context-stacked normalised log-spectrum
  std::vector<double> gate_input;    // context-stacked normalised MFCC
  mask::BinaryMask label;
  std::optional<int> regime_tag;
};

struct MixSpec {
  double snr_db = 5.0;
  std::string noise_kind = "white";
  std::uint64_t seed = 0;
};

struct MixResult {
  signal::Waveform noisy;
  signal::Waveform scaled_noise;
  double gain = 0.0;
  std::size_t noise_offset = 0;
};

// Cuts a seed-chosen segment of `noise` the length of `clean` and scales it so
// that 10 log10(P_clean / P_noise) = snr_db, P being mean power.
MixResult mix_at_snr(const signal::Waveform& clean, const signal::Waveform& noise, double snr_db,
                     std::uint64_t seed);

// Stacks frames t-C..t+C of `frames` into row t, replicating edge frames.
Grid stack_context(const Grid& frames, std::size_t context);

// Network inputs of one noisy utterance.
struct NoisyFeatures {
  signal::Stft stft;
  signal::LogSpectrum log_spec;  // raw, not normalised
  Grid expert_inputs;            // frames x expert_dim
  Grid gate_inputs;              // frames x gate_dim
};

NoisyFeatures featurize(const signal::Waveform& noisy, const FeatureConfig& cfg);

struct LabeledUtterance {
  MixResult mix;
  NoisyFeatures features;
  signal::LogSpectrum clean_log;
  signal::LogSpectrum noise_log;
  Grid labels;  // frames x num_bins, 0/1
};

LabeledUtterance build_utterance(const signal::Waveform& clean, const signal::Waveform& noise,
                                 const MixSpec& spec, const FeatureConfig& cfg);

std::vector<FeaturePair> build_pairs(const signal::Waveform& clean, const signal::Waveform& noise,
                                     const MixSpec& spec, const FeatureConfig& cfg);
std::vector<FeaturePair> build_pairs(const signal::Waveform& clean, const signal::Waveform& noise,
                                     const MixSpec& spec, std::size_t context);

// Two-regime synthetic speech stand-in. Regime 0 is harmonic ("voiced-like",
// energy below 2 kHz); regime 1 is high-passed noise ("unvoiced-like").
inline constexpr int kVoicedRegime = 0;
inline constexpr int kUnvoicedRegime = 1;

struct SynthUtterance {
  signal::Waveform clean;
  std::vector<int> regime_tags;  // one per STFT frame
};

std::vector<SynthUtterance> synth_corpus(std::size_t num_utterances, std::uint64_t seed,
                                         const FeatureConfig& cfg = {});

// Stationary noise: "white" or "pink".
signal::Waveform synth_noise(std::size_t length, const std::string& kind, std::uint64_t seed,
                             int sample_rate = 16000);

// Frame-level training corpus. Row t of each grid is one FeaturePair.
struct Corpus {
  FeatureConfig features;
  Grid expert_inputs;
  Grid gate_inputs;
  Grid labels;
  std::vector<int> regime_tags;  // -1 when untagged
  std::vector<std::size_t> utterance_frames;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return static_cast<std::size_t>(labels.rows()); }
  bool has_regime_tags() const;
  FeaturePair pair(std::size_t t) const;

  void append(const LabeledUtterance& u, const std::vector<int>* tags = nullptr);
  // Subset of whole utterances [first, first + count).
  Corpus utterances(std::size_t first, std::size_t count) const;
};

// Mixes every clean utterance with `noise` (child seed per utterance) and
// featurises them in parallel; results are appended in input order.
Corpus build_corpus(const std::vector<signal::Waveform>& cleans, const signal::Waveform& noise,
                    const MixSpec& spec, const FeatureConfig& cfg,
                    const std::vector<std::vector<int>>* tags = nullptr);

// synth_corpus + synth_noise + build_corpus.
Corpus synthetic_corpus(std::size_t num_utterances, const MixSpec& spec,
                        const FeatureConfig& cfg = {});

inline constexpr const char* kCorpusSchema = "dmoe-corpus/1";

// Binary frame records (little-endian float32: expert input, gate input,
// label bits, regime tag) plus a JSON sidecar at path + ".json".
void write_corpus(const std::string& path, const Corpus& c);
Corpus read_corpus(const std::string& path);

}  // namespace dmoe::data
