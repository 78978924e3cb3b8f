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

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dmoe/enhance.hpp"
#include "dmoe/error.hpp"
#include "dmoe/eval.hpp"
#include "dmoe/rng.hpp"

using namespace dmoe;

namespace {

signal::Waveform random_wave(std::size_t n, std::uint64_t seed, double scale = 0.2) {
  Rng rng(seed);
  signal::Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(scale * rng.normal());
  return w;
}

data::FeatureConfig small_features() {
  data::FeatureConfig f;
  f.context = 1;
  return f;
}

DmoeParams saturated_model(const data::FeatureConfig& f, double bias) {
  DmoeParams p = init_dmoe(dims_for(f), ModelShape{2, 8, 1, false}, 3);
  for (auto& e : p.experts) {
    e.layers.back().weights.setZero();
    e.layers.back().bias.setConstant(bias);
  }
  p.features = f;
  return p;
}

// Per-frame SNR written out directly for the oracle comparison.
double direct_ssnr(const std::vector<double>& r, const std::vector<double>& x) {
  const std::size_t frames = (r.size() - 512) / 256 + 1;
  std::vector<double> e(frames), d(frames);
  double mean = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < 512; ++j) {
      e[t] += r[t * 256 + j] * r[t * 256 + j];
      d[t] += (r[t * 256 + j] - x[t * 256 + j]) * (r[t * 256 + j] - x[t * 256 + j]);
    }
    mean += e[t] / static_cast<double>(frames);
  }
  double acc = 0.0;
  int used = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    if (e[t] < 1e-8 * mean) continue;
    acc += std::min(35.0, std::max(-10.0, 10.0 * std::log10(e[t] / d[t])));
    ++used;
  }
  return acc / used;
}

}  // namespace

TEST_CASE("rho of one leaves the input unchanged") {
  const auto f = small_features();
  const DmoeParams p = saturated_model(f, 800.0);
  const auto noisy = random_wave(5000, 1);
  enhance::EnhanceOptions opts;
  opts.peak_normalize = false;
  const auto r = enhance::enhance_utterance(p, noisy, f, opts);
  REQUIRE(r.enhanced.samples.size() == noisy.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < noisy.samples.size(); ++i)
    worst = std::max(worst, std::abs(r.enhanced.samples[i] - noisy.samples[i]));
  CHECK(worst < 1e-6);
  CHECK(r.spp.rows() == static_cast<Eigen::Index>(signal::frame_count(5000, 512, 256)));
  CHECK(r.spp_track().size() == static_cast<std::size_t>(r.spp.rows()));
}

TEST_CASE("rho of zero attenuates every bin by beta") {
  const auto f = small_features();
  const DmoeParams p = saturated_model(f, -800.0);
  const auto noisy = random_wave(4864, 2);  // whole number of hops
  enhance::EnhanceOptions opts;
  opts.peak_normalize = false;
  const auto r = enhance::enhance_utterance(p, noisy, f, opts);
  CHECK((r.spp.array() == 0.0).all());
  const double g = std::exp(-mask::kDefaultBeta);
  double worst = 0.0;
  for (std::size_t i = 0; i < noisy.samples.size(); ++i)
    worst = std::max(worst, std::abs(r.enhanced.samples[i] - g * noisy.samples[i]));
  CHECK(worst < 1e-6);
  const auto ls_in = signal::log_spectrum(signal::stft(noisy, 512, 256));
  const auto ls_out = signal::log_spectrum(signal::stft(r.enhanced, 512, 256));
  CHECK(((ls_in.frames - ls_out.frames).array() - mask::kDefaultBeta).abs().maxCoeff() < 1e-6);
}

TEST_CASE("enhancement checks the model feature configuration") {
  const auto f = small_features();
  DmoeParams p = saturated_model(f, 0.0);
  auto other = f;
  other.num_filters = 24;
  CHECK_THROWS_WITH_AS(enhance::enhance_utterance(p, random_wave(3000, 3), other), doctest::Contains("num_filters"), ConfigError);
  p.features.reset();
  CHECK_THROWS_AS(enhance::enhance_utterance(p, random_wave(3000, 3), f), ConfigError);
}

TEST_CASE("peak normalisation only when needed") {
  const auto f = small_features();
  const DmoeParams p = saturated_model(f, 800.0);
  const auto loud = random_wave(4000, 4, 0.9);
  const auto r = enhance::enhance_utterance(p, loud, f);
  double peak = 0.0;
  for (double v : r.enhanced.samples) {
    CHECK(std::isfinite(v));
    peak = std::max(peak, std::abs(v));
  }
  CHECK(peak <= 1.0);
  const auto quiet = random_wave(4000, 5, 0.05);
  const auto q = enhance::enhance_utterance(p, quiet, f);
  CHECK(std::abs(q.enhanced.samples[1000] - quiet.samples[1000]) < 1e-6);
}

TEST_CASE("oracle enhancement") {
  const auto clean = random_wave(8000, 6);
  const auto noise = data::synth_noise(12000, "white", 7);
  data::MixSpec spec{0.0, "white", 8};
  const auto mix = data::mix_at_snr(clean, noise, 0.0, 8);
  const auto bypass = enhance::oracle_enhance(clean, noise, spec, mask::EnhanceConfig{0.0}, {}, false);
  double worst = 0.0;
  for (std::size_t i = 0; i < bypass.samples.size(); ++i)
    worst = std::max(worst, std::abs(bypass.samples[i] - mix.noisy.samples[i]));
  CHECK(worst < 1e-6);

  const auto enhanced = enhance::oracle_enhance(clean, noise, spec, {}, {}, false);
  CHECK(eval::segmental_snr(clean, enhanced) > eval::segmental_snr(clean, mix.noisy));

  spec.snr_db = 200.0;
  const auto high = enhance::oracle_enhance(clean, noise, spec, {}, {}, false);
  CHECK(eval::segmental_snr(clean, high) > 30.0);
}

TEST_CASE("segmental snr") {
  const auto r = random_wave(6000, 9);
  CHECK(eval::segmental_snr(r, r) == 35.0);
  auto neg = r;
  for (auto& v : neg.samples) v = -v;
  CHECK(eval::segmental_snr(r, neg) == doctest::Approx(10.0 * std::log10(0.25)).epsilon(1e-12));
  for (std::uint64_t s = 10; s < 15; ++s) {
    const auto x = random_wave(7000, s);
    auto y = x;
    Rng rng(s);
    for (auto& v : y.samples) v += 0.1 * rng.normal() * (1.0 + std::sin(v));
    CHECK(std::abs(eval::segmental_snr(x, y) - direct_ssnr(x.samples, y.samples)) < 1e-9);
  }
  CHECK_THROWS_AS(eval::segmental_snr(r, random_wave(10, 1)), ShapeError);
}

TEST_CASE("mask metrics") {
  Grid truth(3, 4);
  truth << 1, 0, 1, 1,
           0, 1, 1, 0,
           1, 1, 0, 1;
  auto perfect = eval::mask_metrics(truth, truth);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.auc == 1.0);

  const Grid half = Grid::Constant(3, 4, 0.5);
  const auto h = eval::mask_metrics(half, truth);
  CHECK(h.accuracy == doctest::Approx(8.0 / 12.0));  // positives are the majority here
  CHECK(h.auc == 0.5);

  Rng rng(20);
  Grid pred(3, 4);
  for (Eigen::Index i = 0; i < pred.size(); ++i) pred.data()[i] = std::round(rng.uniform() * 4.0) / 4.0;
  double wins = 0.0;
  int pairs = 0;
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index j = 0; j < 12; ++j)
      if (truth.data()[i] == 1.0 && truth.data()[j] == 0.0) {
        ++pairs;
        wins += pred.data()[i] > pred.data()[j] ? 1.0 : (pred.data()[i] == pred.data()[j] ? 0.5 : 0.0);
      }
  const auto m = eval::mask_metrics(pred, truth);
  CHECK(m.auc == wins / pairs);

  Grid cubed = pred.array().cube() * 0.5 + 0.1;
  CHECK(eval::mask_metrics(cubed, truth).auc == m.auc);
  CHECK_THROWS_AS(eval::mask_metrics(Grid::Zero(2, 4), truth), ShapeError);

  std::vector<mask::SppVector> pv{{{0.9, 0.1}}, {{0.2, 0.7}}};
  std::vector<mask::BinaryMask> tv{{{1, 0}}, {{0, 0}}};
  const auto v = eval::mask_metrics(pv, tv);
  CHECK(v.accuracy == 0.75);
  tv.pop_back();
  CHECK_THROWS_AS(eval::mask_metrics(pv, tv), ShapeError);
}

TEST_CASE("log spectral distortion") {
  Rng rng(30);
  signal::LogSpectrum a, b;
  a.frames.resize(7, 9);
  b.frames.resize(7, 9);
  for (Eigen::Index i = 0; i < a.frames.size(); ++i) {
    a.frames.data()[i] = rng.normal();
    b.frames.data()[i] = rng.normal();
  }
  CHECK(eval::log_spectral_distortion(a, a) == 0.0);
  signal::LogSpectrum shifted{a.frames.array() + 1.1513};
  CHECK(eval::log_spectral_distortion(a, shifted) == doctest::Approx(1.1513).epsilon(1e-12));
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.frames.size(); ++i) s += std::pow(a.frames.data()[i] - b.frames.data()[i], 2);
  CHECK(std::abs(eval::log_spectral_distortion(a, b) - std::sqrt(s / 63.0)) < 1e-12);
  CHECK(eval::log_spectral_distortion(a, b) == eval::log_spectral_distortion(b, a));
  signal::LogSpectrum c{Grid::Zero(7, 8)};
  CHECK_THROWS_AS(eval::log_spectral_distortion(a, c), ShapeError);
}

TEST_CASE("report aggregation") {
  eval::UtteranceEval a, b;
  a.snr_db = 0;
  a.ssnr_enhanced = 4;
  a.mask_auc = 0.8;
  b.snr_db = 5;
  b.ssnr_enhanced = 6;
  b.mask_auc = 0.6;
  const auto r = eval::EvalReport::aggregate({a, b});
  CHECK(r.ssnr_db == 5.0);
  CHECK(r.mask_auc == doctest::Approx(0.7));
  const auto csv = eval::per_snr_csv(r.utterances);
  CHECK(csv.find('\n') != std::string::npos);
  CHECK(r.to_json().at("utterances").size() == 2);
}
