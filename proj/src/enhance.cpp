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

#include "dmoe/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "dmoe/error.hpp"

namespace dmoe::enhance {

std::vector<mask::SppVector> EnhanceResult::spp_track() const {
  std::vector<mask::SppVector> out(static_cast<std::size_t>(spp.rows()));
  for (Eigen::Index t = 0; t < spp.rows(); ++t)
    out[static_cast<std::size_t>(t)].probs.assign(spp.row(t).begin(), spp.row(t).end());
  return out;
}

signal::Waveform apply_spp(const signal::Waveform& noisy, const Grid& spp,
                           const data::FeatureConfig& cfg, const EnhanceOptions& opts) {
  opts.attenuation.validate(true);
  const std::size_t len = noisy.samples.size();
  if (len < cfg.frame_len) throw TooShortError("signal shorter than one frame");
  const std::size_t frames = signal::frame_count(len, cfg.frame_len, cfg.hop);
  if (spp.rows() != static_cast<Eigen::Index>(frames) ||
      spp.cols() != static_cast<Eigen::Index>(cfg.num_bins()))
    throw ShapeError("SPP grid must be frames x num_bins (" + std::to_string(frames) + " x " +
                     std::to_string(cfg.num_bins()) + ")");

  signal::Waveform padded = noisy;
  const std::size_t rem = (len - cfg.frame_len) % cfg.hop;
  if (rem != 0) padded.samples.resize(len + cfg.hop - rem, 0.0);

  const auto st = signal::stft(padded, cfg.frame_len, cfg.hop, cfg.window);
  signal::LogSpectrum log_mag = signal::log_spectrum(st, cfg.log_floor);
  for (Eigen::Index t = 0; t < log_mag.frames.rows(); ++t) {
    const Eigen::Index src = std::min<Eigen::Index>(t, spp.rows() - 1);
    log_mag.frames.row(t).array() -= (1.0 - spp.row(src).array()) * opts.attenuation.beta;
  }
  signal::Waveform out = signal::istft(signal::from_log_magnitude(log_mag, st), st);
  out.samples.resize(len);

  if (opts.peak_normalize) {
    double peak = 0.0;
    for (double v : out.samples) peak = std::max(peak, std::abs(v));
    if (peak > 1.0)
      for (double& v : out.samples) v /= peak;
  }
  return out;
}

EnhanceResult enhance_utterance(const DmoeParams& p, const signal::Waveform& noisy,
                                const data::FeatureConfig& cfg, const EnhanceOptions& opts) {
  if (!p.features) throw ConfigError("model carries no feature configuration");
  if (const auto field = data::first_mismatch(*p.features, cfg))
    throw ConfigError("model and pipeline feature configurations differ in '" + *field + "'");
  const data::NoisyFeatures f = data::featurize(noisy, cfg);
  EnhanceResult r;
  r.spp = predict_spp(p, f.expert_inputs, f.gate_inputs);
  r.enhanced = apply_spp(noisy, r.spp, cfg, opts);
  return r;
}

signal::Waveform oracle_enhance(const signal::Waveform& clean, const signal::Waveform& noise,
                                const data::MixSpec& spec, const mask::EnhanceConfig& cfg,
                                const data::FeatureConfig& features, bool peak_normalize) {
  const data::LabeledUtterance u = data::build_utterance(clean, noise, spec, features);
  EnhanceOptions opts;
  opts.attenuation = cfg;
  opts.peak_normalize = peak_normalize;
  return apply_spp(u.mix.noisy, u.labels, features, opts);
}

}  // namespace dmoe::enhance
