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

#include "dmoe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "dmoe/error.hpp"

namespace dmoe::eval {

double segmental_snr(const signal::Waveform& reference, const signal::Waveform& test,
                     const SsnrConfig& cfg) {
  if (reference.samples.size() != test.samples.size())
    throw ShapeError("segmental_snr: length mismatch (" + std::to_string(reference.samples.size()) +
                     " vs " + std::to_string(test.samples.size()) + ")");
  if (reference.sample_rate != test.sample_rate)
    throw ConfigError("segmental_snr: sample rates differ");
  const std::size_t len = reference.samples.size();
  std::size_t frame = cfg.frame_len, hop = cfg.hop;
  if (len < frame) frame = hop = len;
  if (frame == 0) throw ShapeError("segmental_snr: empty signals");
  const std::size_t frames = signal::frame_count(len, frame, hop);

  std::vector<double> ref_energy(frames), err_energy(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double e = 0.0, d = 0.0;
    for (std::size_t j = t * hop; j < t * hop + frame; ++j) {
      e += reference.samples[j] * reference.samples[j];
      const double diff = reference.samples[j] - test.samples[j];
      d += diff * diff;
    }
    ref_energy[t] = e;
    err_energy[t] = d;
  }
  const double mean_energy =
      std::accumulate(ref_energy.begin(), ref_energy.end(), 0.0) / static_cast<double>(frames);
  if (mean_energy <= 0.0) throw NumericError("segmental_snr: reference is silent");

  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    if (ref_energy[t] < cfg.silence_ratio * mean_energy) continue;
    const double db = err_energy[t] > 0.0 ? 10.0 * std::log10(ref_energy[t] / err_energy[t]) : cfg.max_db;
    acc += std::clamp(db, cfg.min_db, cfg.max_db);
    ++used;
  }
  return acc / static_cast<double>(used);
}

MaskScores mask_metrics(const Grid& predicted, const Grid& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
    throw ShapeError("mask_metrics: predicted and truth grids are misaligned");
  const auto n = static_cast<std::size_t>(predicted.size());
  if (n == 0) throw ShapeError("mask_metrics: empty input");

  std::size_t correct = 0, positives = 0;
  std::vector<std::pair<double, bool>> scored(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = predicted.data()[i];
    const bool bit = truth.data()[i] > 0.5;
    if ((rho >= 0.5) == bit) ++correct;
    if (bit) ++positives;
    scored[i] = {rho, bit};
  }
  MaskScores s;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return s;

  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scored[j].first == scored[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (scored[k].second) rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
  s.auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
  return s;
}

MaskScores mask_metrics(const std::vector<mask::SppVector>& predicted,
                        const std::vector<mask::BinaryMask>& truth) {
  if (predicted.size() != truth.size())
    throw ShapeError("mask_metrics: " + std::to_string(predicted.size()) + " SPP frames vs " +
                     std::to_string(truth.size()) + " mask frames");
  if (predicted.empty()) throw ShapeError("mask_metrics: empty input");
  const std::size_t bins = truth.front().size();
  Grid p(static_cast<Eigen::Index>(predicted.size()), static_cast<Eigen::Index>(bins));
  Grid b(p.rows(), p.cols());
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    if (predicted[t].size() != bins || truth[t].size() != bins)
      throw ShapeError("mask_metrics: frame " + std::to_string(t) + " has the wrong length");
    for (std::size_t k = 0; k < bins; ++k) {
      p(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = predicted[t].probs[k];
      b(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = truth[t].bits[k];
    }
  }
  return mask_metrics(p, b);
}

double log_spectral_distortion(const signal::LogSpectrum& a, const signal::LogSpectrum& b) {
  if (a.frames.rows() != b.frames.rows() || a.frames.cols() != b.frames.cols())
    throw ShapeError("log_spectral_distortion: shape mismatch");
  if (a.frames.size() == 0) throw ShapeError("log_spectral_distortion: empty input");
  return std::sqrt((a.frames - b.frames).array().square().mean());
}

UtteranceEval evaluate_mixture(const DmoeParams& p, const signal::Waveform& clean,
                               const signal::Waveform& noise, const data::MixSpec& spec,
                               const data::FeatureConfig& cfg, const enhance::EnhanceOptions& opts) {
  const data::LabeledUtterance u = data::build_utterance(clean, noise, spec, cfg);
  const enhance::EnhanceResult r = enhance::enhance_utterance(p, u.mix.noisy, cfg, opts);
  const signal::Waveform oracle =
      enhance::apply_spp(u.mix.noisy, u.labels, cfg, opts);

  SsnrConfig sc;
  sc.frame_len = cfg.frame_len;
  sc.hop = cfg.hop;
  UtteranceEval e;
  e.snr_db = spec.snr_db;
  e.frames = static_cast<std::size_t>(u.labels.rows());
  e.ssnr_noisy = segmental_snr(clean, u.mix.noisy, sc);
  e.ssnr_enhanced = segmental_snr(clean, r.enhanced, sc);
  e.ssnr_oracle = segmental_snr(clean, oracle, sc);
  const MaskScores ms = mask_metrics(r.spp, u.labels);
  e.mask_accuracy = ms.accuracy;
  e.mask_auc = ms.auc;
  const auto enhanced_log = signal::log_spectrum(
      signal::stft(r.enhanced, cfg.frame_len, cfg.hop, cfg.window), cfg.log_floor);
  e.lsd_noisy = log_spectral_distortion(u.clean_log, u.features.log_spec);
  e.lsd_enhanced = log_spectral_distortion(u.clean_log, enhanced_log);
  return e;
}

EvalReport EvalReport::aggregate(std::vector<UtteranceEval> rows) {
  EvalReport r;
  if (rows.empty()) return r;
  const double n = static_cast<double>(rows.size());
  r.mask_auc = 0.0;
  for (const auto& u : rows) {
    r.ssnr_db += u.ssnr_enhanced / n;
    r.ssnr_noisy_db += u.ssnr_noisy / n;
    r.ssnr_oracle_db += u.ssnr_oracle / n;
    r.mask_accuracy += u.mask_accuracy / n;
    r.mask_auc += u.mask_auc / n;
    r.lsd += u.lsd_enhanced / n;
  }
  r.utterances = std::move(rows);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& u : utterances)
    rows.push_back({{"name", u.name},
                    {"snr_db", u.snr_db},
                    {"frames", u.frames},
                    {"ssnr_noisy_db", u.ssnr_noisy},
                    {"ssnr_enhanced_db", u.ssnr_enhanced},
                    {"ssnr_oracle_db", u.ssnr_oracle},
                    {"mask_accuracy", u.mask_accuracy},
                    {"mask_auc", u.mask_auc},
                    {"lsd_noisy", u.lsd_noisy},
                    {"lsd_enhanced", u.lsd_enhanced}});
  return {{"ssnr_db", ssnr_db},
          {"ssnr_noisy_db", ssnr_noisy_db},
          {"ssnr_oracle_db", ssnr_oracle_db},
          {"mask_accuracy", mask_accuracy},
          {"mask_auc", mask_auc},
          {"lsd", lsd},
          {"utterances", rows}};
}

std::string per_snr_csv(const std::vector<UtteranceEval>& rows) {
  std::map<double, std::vector<const UtteranceEval*>> by_snr;
  for (const auto& u : rows) by_snr[u.snr_db].push_back(&u);
  std::ostringstream out;
  out.precision(10);
  out << "snr_db,utterances,ssnr_noisy_db,ssnr_enhanced_db,ssnr_oracle_db,mask_accuracy,mask_auc,"
         "lsd_noisy,lsd_enhanced\n";
  for (const auto& [snr, us] : by_snr) {
    double v[7] = {0, 0, 0, 0, 0, 0, 0};
    for (const auto* u : us) {
      v[0] += u->ssnr_noisy;
      v[1] += u->ssnr_enhanced;
      v[2] += u->ssnr_oracle;
      v[3] += u->mask_accuracy;
      v[4] += u->mask_auc;
      v[5] += u->lsd_noisy;
      v[6] += u->lsd_enhanced;
    }
    out << snr << ',' << us.size();
    for (double x : v) out << ',' << x / static_cast<double>(us.size());
    out << '\n';
  }
  return out.str();
}

}  // namespace dmoe::eval
