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

#include "dmoe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dmoe/binary_io.hpp"
#include "dmoe/error.hpp"
#include "dmoe/rng.hpp"

namespace dmoe::data {

using nlohmann::json;

signal::MelConfig FeatureConfig::mel() const {
  signal::MelConfig m;
  m.num_filters = num_filters;
  m.num_ceps = num_ceps;
  m.f_min = f_min;
  m.f_max = f_max;
  m.log_floor = log_floor;
  return m;
}

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (frame_len == 0 || frame_len % 2 != 0) throw ConfigError("frame_len must be even");
  if (hop == 0 || hop > frame_len) throw ConfigError("hop must be in [1, frame_len]");
  if (num_filters < 2) throw ConfigError("num_filters must be >= 2");
  if (num_ceps == 0 || num_ceps > num_filters) throw ConfigError("num_ceps must be in [1, num_filters]");
  if (!(f_min >= 0.0 && f_max > f_min && f_max <= sample_rate / 2.0))
    throw ConfigError("mel band must satisfy 0 <= f_min < f_max <= sample_rate / 2");
}

json to_json(const FeatureConfig& c) {
  return json{{"sample_rate", c.sample_rate},
              {"frame_len", c.frame_len},
              {"hop", c.hop},
              {"window", signal::window_name(c.window)},
              {"num_filters", c.num_filters},
              {"num_ceps", c.num_ceps},
              {"f_min", c.f_min},
              {"f_max", c.f_max},
              {"log_floor", c.log_floor},
              {"context", c.context}};
}

FeatureConfig feature_config_from_json(const json& j) {
  FeatureConfig c;
  try {
    c.sample_rate = j.at("sample_rate").get<int>();
    c.frame_len = j.at("frame_len").get<std::size_t>();
    c.hop = j.at("hop").get<std::size_t>();
    c.window = signal::window_from_name(j.at("window").get<std::string>());
    c.num_filters = j.at("num_filters").get<std::size_t>();
    c.num_ceps = j.at("num_ceps").get<std::size_t>();
    c.f_min = j.at("f_min").get<double>();
    c.f_max = j.at("f_max").get<double>();
    c.log_floor = j.at("log_floor").get<double>();
    c.context = j.at("context").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad feature configuration: ") + e.what());
  }
  c.validate();
  return c;
}

std::optional<std::string> first_mismatch(const FeatureConfig& a, const FeatureConfig& b) {
  const json ja = to_json(a), jb = to_json(b);
  for (auto it = ja.begin(); it != ja.end(); ++it)
    if (jb.at(it.key()) != it.value()) return it.key();
  return std::nullopt;
}

namespace {

double mean_power(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

}  // namespace

MixResult mix_at_snr(const signal::Waveform& clean, const signal::Waveform& noise, double snr_db,
                     std::uint64_t seed) {
  clean.validate();
  noise.validate();
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  if (clean.sample_rate != noise.sample_rate)
    throw ConfigError("clean and noise sample rates differ (" + std::to_string(clean.sample_rate) +
                      " vs " + std::to_string(noise.sample_rate) + ")");
  if (noise.samples.size() < clean.samples.size())
    throw ShapeError("noise (" + std::to_string(noise.samples.size()) +
                     " samples) is shorter than the clean utterance (" +
                     std::to_string(clean.samples.size()) + ")");

  Rng rng(seed);
  const std::size_t n = clean.samples.size();
  const std::size_t offset = rng.below(noise.samples.size() - n + 1);
  const std::span<const double> segment(noise.samples.data() + offset, n);

  const double p_clean = mean_power(clean.samples);
  const double p_noise = mean_power(segment);
  if (p_clean <= 0.0) throw NumericError("clean signal has zero power");
  if (p_noise <= 0.0) throw NumericError("noise segment has zero power");

  MixResult r;
  r.noise_offset = offset;
  r.gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  r.scaled_noise.sample_rate = clean.sample_rate;
  r.noisy.sample_rate = clean.sample_rate;
  r.scaled_noise.samples.resize(n);
  r.noisy.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.scaled_noise.samples[i] = r.gain * segment[i];
    r.noisy.samples[i] = clean.samples[i] + r.scaled_noise.samples[i];
  }
  return r;
}

Grid stack_context(const Grid& frames, std::size_t context) {
  const Eigen::Index rows = frames.rows(), cols = frames.cols();
  const auto span = static_cast<Eigen::Index>(2 * context + 1);
  const auto c = static_cast<Eigen::Index>(context);
  Grid out(rows, cols * span);
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index j = 0; j < span; ++j) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + j - c, 0, rows - 1);
      out.block(t, j * cols, 1, cols) = frames.row(src);
    }
  return out;
}

NoisyFeatures featurize(const signal::Waveform& noisy, const FeatureConfig& cfg) {
  cfg.validate();
  if (noisy.sample_rate != cfg.sample_rate)
    throw ConfigError("waveform sample rate " + std::to_string(noisy.sample_rate) +
                      " does not match configured " + std::to_string(cfg.sample_rate));
  NoisyFeatures f;
  f.stft = signal::stft(noisy, cfg.frame_len, cfg.hop, cfg.window);
  if (f.stft.num_frames() < 2)
    throw TooShortError("utterance yields fewer than 2 frames; cannot normalise");
  f.log_spec = signal::log_spectrum(f.stft, cfg.log_floor);
  const auto mf = signal::mfcc(f.stft, cfg.mel());
  f.expert_inputs = stack_context(signal::cmvn(f.log_spec.frames), cfg.context);
  f.gate_inputs = stack_context(signal::cmvn(mf.frames), cfg.context);
  return f;
}

LabeledUtterance build_utterance(const signal::Waveform& clean, const signal::Waveform& noise,
                                 const MixSpec& spec, const FeatureConfig& cfg) {
  LabeledUtterance u;
  u.mix = mix_at_snr(clean, noise, spec.snr_db, spec.seed);
  u.features = featurize(u.mix.noisy, cfg);
  u.clean_log = signal::log_spectrum(signal::stft(clean, cfg.frame_len, cfg.hop, cfg.window),
                                     cfg.log_floor);
  u.noise_log = signal::log_spectrum(
      signal::stft(u.mix.scaled_noise, cfg.frame_len, cfg.hop, cfg.window), cfg.log_floor);
  u.labels = (u.clean_log.frames.array() > u.noise_log.frames.array()).cast<double>();
  return u;
}

std::vector<FeaturePair> build_pairs(const signal::Waveform& clean, const signal::Waveform& noise,
                                     const MixSpec& spec, const FeatureConfig& cfg) {
  const LabeledUtterance u = build_utterance(clean, noise, spec, cfg);
  const auto frames = static_cast<std::size_t>(u.labels.rows());
  std::vector<FeaturePair> pairs(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    auto& p = pairs[t];
    p.expert_input.assign(u.features.expert_inputs.row(r).begin(),
                          u.features.expert_inputs.row(r).end());
    p.gate_input.assign(u.features.gate_inputs.row(r).begin(), u.features.gate_inputs.row(r).end());
    p.label = mask::max_mask(
        std::span<const double>(u.clean_log.frames.row(r).data(), cfg.num_bins()),
        std::span<const double>(u.noise_log.frames.row(r).data(), cfg.num_bins()));
  }
  return pairs;
}

std::vector<FeaturePair> build_pairs(const signal::Waveform& clean, const signal::Waveform& noise,
                                     const MixSpec& spec, std::size_t context) {
  FeatureConfig cfg;
  cfg.sample_rate = clean.sample_rate;
  cfg.f_max = clean.sample_rate / 2.0;
  cfg.context = context;
  return build_pairs(clean, noise, spec, cfg);
}

namespace {

void apply_fades(std::span<double> seg, std::size_t fade) {
  fade = std::min(fade, seg.size() / 2);
  for (std::size_t i = 0; i < fade; ++i) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / fade);
    seg[i] *= g;
    seg[seg.size() - 1 - i] *= g;
  }
}

void normalise_rms(std::span<double> seg, double rms) {
  const double p = mean_power(seg);
  if (p <= 0.0) return;
  const double g = rms / std::sqrt(p);
  for (double& v : seg) v *= g;
}

// Harmonic stack with 1/h amplitudes below 4 kHz.
void voiced_segment(std::span<double> seg, int sample_rate, Rng& rng) {
  const double f0 = rng.uniform(100.0, 250.0);
  const double nyquist_cap = std::min(4000.0, sample_rate / 2.0);
  std::fill(seg.begin(), seg.end(), 0.0);
  for (int h = 1; h * f0 < nyquist_cap; ++h) {
    const double amp = 1.0 / h;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi * h * f0 / sample_rate;
    for (std::size_t i = 0; i < seg.size(); ++i)
      seg[i] += amp * std::sin(w * static_cast<double>(i) + phase);
  }
}

// Gaussian noise through three first-difference stages, i.e. a
// (2 sin(pi f / fs))^6 power response.
void unvoiced_segment(std::span<double> seg, Rng& rng) {
  std::vector<double> x(seg.size() + 3);
  for (double& v : x) v = rng.normal();
  for (int stage = 0; stage < 3; ++stage)
    for (std::size_t i = x.size() - 1; i > 0; --i) x[i] -= x[i - 1];
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = x[i + 3];
}

}  // namespace

std::vector<SynthUtterance> synth_corpus(std::size_t num_utterances, std::uint64_t seed,
                                         const FeatureConfig& cfg) {
  if (num_utterances == 0) throw ConfigError("synth_corpus needs at least one utterance");
  cfg.validate();
  std::vector<SynthUtterance> out(num_utterances);
  const int sr = cfg.sample_rate;
  const auto fade = static_cast<std::size_t>(0.005 * sr);

  for (std::size_t u = 0; u < num_utterances; ++u) {
    Rng rng(child_seed(seed, "synth-utterance", u));
    const std::size_t segments = 3 + rng.below(3);
    int regime = static_cast<int>(rng.below(2));
    std::vector<double> samples;
    std::vector<int> sample_regime;
    for (std::size_t s = 0; s < segments; ++s) {
      const auto len = static_cast<std::size_t>(rng.uniform(0.10, 0.22) * sr);
      std::vector<double> seg(len);
      if (regime == kVoicedRegime)
        voiced_segment(seg, sr, rng);
      else
        unvoiced_segment(seg, rng);
      normalise_rms(seg, rng.uniform(0.05, 0.15));
      apply_fades(seg, fade);
      samples.insert(samples.end(), seg.begin(), seg.end());
      sample_regime.insert(sample_regime.end(), len, regime);
      regime = 1 - regime;
    }

    auto& utt = out[u];
    utt.clean.sample_rate = sr;
    utt.clean.samples = std::move(samples);
    const std::size_t frames = signal::frame_count(utt.clean.samples.size(), cfg.frame_len, cfg.hop);
    utt.regime_tags.resize(frames);
    for (std::size_t t = 0; t < frames; ++t)
      utt.regime_tags[t] = sample_regime[t * cfg.hop + cfg.frame_len / 2];
  }
  return out;
}

signal::Waveform synth_noise(std::size_t length, const std::string& kind, std::uint64_t seed,
                             int sample_rate) {
  signal::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(length);
  Rng rng(seed);
  if (kind == "white") {
    for (double& v : w.samples) v = rng.normal();
  } else if (kind == "pink") {
    // Paul Kellet's refined 1/f filter.
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (double& v : w.samples) {
      const double white = rng.normal();
      b0 = 0.99886 * b0 + white * 0.0555179;
      b1 = 0.99332 * b1 + white * 0.0750759;
      b2 = 0.96900 * b2 + white * 0.1538520;
      b3 = 0.86650 * b3 + white * 0.3104856;
      b4 = 0.55000 * b4 + white * 0.5329522;
      b5 = -0.7616 * b5 - white * 0.0168980;
      v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
      b6 = white * 0.115926;
    }
  } else {
    throw ConfigError("unknown noise kind '" + kind + "' (expected white or pink)");
  }
  normalise_rms(w.samples, 0.1);
  return w;
}

bool Corpus::has_regime_tags() const {
  return !regime_tags.empty() &&
         std::all_of(regime_tags.begin(), regime_tags.end(), [](int t) { return t >= 0; });
}

FeaturePair Corpus::pair(std::size_t t) const {
  const auto r = static_cast<Eigen::Index>(t);
  FeaturePair p;
  p.expert_input.assign(expert_inputs.row(r).begin(), expert_inputs.row(r).end());
  p.gate_input.assign(gate_inputs.row(r).begin(), gate_inputs.row(r).end());
  p.label.bits.resize(static_cast<std::size_t>(labels.cols()));
  for (Eigen::Index k = 0; k < labels.cols(); ++k)
    p.label.bits[static_cast<std::size_t>(k)] = labels(r, k) > 0.5 ? 1 : 0;
  if (regime_tags[t] >= 0) p.regime_tag = regime_tags[t];
  return p;
}

namespace {

void append_rows(Grid& dst, const Grid& src) {
  const Eigen::Index old = dst.rows();
  if (old == 0) {
    dst = src;
    return;
  }
  dst.conservativeResize(old + src.rows(), Eigen::NoChange);
  dst.bottomRows(src.rows()) = src;
}

Corpus concat(const FeatureConfig& cfg, const std::vector<LabeledUtterance>& utts,
              const std::vector<std::vector<int>>* tags) {
  Corpus c;
  c.features = cfg;
  Eigen::Index total = 0;
  for (const auto& u : utts) total += u.labels.rows();
  c.expert_inputs.resize(total, static_cast<Eigen::Index>(cfg.expert_dim()));
  c.gate_inputs.resize(total, static_cast<Eigen::Index>(cfg.gate_dim()));
  c.labels.resize(total, static_cast<Eigen::Index>(cfg.num_bins()));
  c.regime_tags.assign(static_cast<std::size_t>(total), -1);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto& u = utts[i];
    const Eigen::Index n = u.labels.rows();
    c.expert_inputs.middleRows(row, n) = u.features.expert_inputs;
    c.gate_inputs.middleRows(row, n) = u.features.gate_inputs;
    c.labels.middleRows(row, n) = u.labels;
    if (tags != nullptr) {
      const auto& tv = (*tags)[i];
      if (tv.size() != static_cast<std::size_t>(n))
        throw ShapeError("regime tags do not match the utterance frame count");
      std::copy(tv.begin(), tv.end(), c.regime_tags.begin() + row);
    }
    c.utterance_frames.push_back(static_cast<std::size_t>(n));
    row += n;
  }
  return c;
}

}  // namespace

void Corpus::append(const LabeledUtterance& u, const std::vector<int>* tags) {
  const auto n = static_cast<std::size_t>(u.labels.rows());
  if (tags != nullptr && tags->size() != n)
    throw ShapeError("regime tags do not match the utterance frame count");
  append_rows(expert_inputs, u.features.expert_inputs);
  append_rows(gate_inputs, u.features.gate_inputs);
  append_rows(labels, u.labels);
  if (tags != nullptr)
    regime_tags.insert(regime_tags.end(), tags->begin(), tags->end());
  else
    regime_tags.insert(regime_tags.end(), n, -1);
  utterance_frames.push_back(n);
}

Corpus Corpus::utterances(std::size_t first, std::size_t count) const {
  if (first + count > utterance_frames.size()) throw ShapeError("utterance range out of bounds");
  std::size_t start = 0;
  for (std::size_t i = 0; i < first; ++i) start += utterance_frames[i];
  std::size_t n = 0;
  for (std::size_t i = first; i < first + count; ++i) n += utterance_frames[i];
  Corpus c;
  c.features = features;
  const auto s = static_cast<Eigen::Index>(start), len = static_cast<Eigen::Index>(n);
  c.expert_inputs = expert_inputs.middleRows(s, len);
  c.gate_inputs = gate_inputs.middleRows(s, len);
  c.labels = labels.middleRows(s, len);
  c.regime_tags.assign(regime_tags.begin() + static_cast<std::ptrdiff_t>(start),
                       regime_tags.begin() + static_cast<std::ptrdiff_t>(start + n));
  c.utterance_frames.assign(utterance_frames.begin() + static_cast<std::ptrdiff_t>(first),
                            utterance_frames.begin() + static_cast<std::ptrdiff_t>(first + count));
  c.provenance = provenance;
  return c;
}

Corpus build_corpus(const std::vector<signal::Waveform>& cleans, const signal::Waveform& noise,
                    const MixSpec& spec, const FeatureConfig& cfg,
                    const std::vector<std::vector<int>>* tags) {
  cfg.validate();
  if (tags != nullptr && tags->size() != cleans.size())
    throw ShapeError("need one tag sequence per utterance");
  std::vector<LabeledUtterance> utts(cleans.size());
  std::vector<std::string> errors(cleans.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cleans.size()); ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      MixSpec s = spec;
      s.seed = child_seed(spec.seed, "mix", u);
      utts[u] = build_utterance(cleans[u], noise, s, cfg);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  }
  for (std::size_t u = 0; u < errors.size(); ++u)
    if (!errors[u].empty())
      throw Error("utterance " + std::to_string(u) + ": " + errors[u]);

  Corpus c = concat(cfg, utts, tags);
  c.provenance = json{{"snr_db", spec.snr_db}, {"noise_kind", spec.noise_kind}, {"seed", spec.seed},
                      {"num_utterances", cleans.size()}};
  return c;
}

Corpus synthetic_corpus(std::size_t num_utterances, const MixSpec& spec, const FeatureConfig& cfg) {
  const auto synth = synth_corpus(num_utterances, child_seed(spec.seed, "speech"), cfg);
  std::size_t longest = 0;
  std::vector<signal::Waveform> cleans;
  std::vector<std::vector<int>> tags;
  for (const auto& s : synth) {
    longest = std::max(longest, s.clean.samples.size());
    cleans.push_back(s.clean);
    tags.push_back(s.regime_tags);
  }
  const auto noise = synth_noise(longest + static_cast<std::size_t>(cfg.sample_rate),
                                 spec.noise_kind, child_seed(spec.seed, "noise"), cfg.sample_rate);
  Corpus c = build_corpus(cleans, noise, spec, cfg, &tags);
  c.provenance["synthetic"] = true;
  return c;
}

void write_corpus(const std::string& path, const Corpus& c) {
  std::ostringstream bin(std::ios::binary);
  const std::size_t n = c.size();
  for (std::size_t t = 0; t < n; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    for (Eigen::Index j = 0; j < c.expert_inputs.cols(); ++j)
      io::write_le(bin, static_cast<float>(c.expert_inputs(r, j)));
    for (Eigen::Index j = 0; j < c.gate_inputs.cols(); ++j)
      io::write_le(bin, static_cast<float>(c.gate_inputs(r, j)));
    for (Eigen::Index j = 0; j < c.labels.cols(); ++j)
      io::write_le(bin, static_cast<float>(c.labels(r, j)));
    io::write_le(bin, static_cast<float>(c.regime_tags[t]));
  }
  const std::string bytes = bin.str();
  const std::size_t record_floats =
      c.features.expert_dim() + c.features.gate_dim() + c.features.num_bins() + 1;

  json side{{"schema", kCorpusSchema},
            {"num_frames", n},
            {"expert_dim", c.features.expert_dim()},
            {"gate_dim", c.features.gate_dim()},
            {"num_bins", c.features.num_bins()},
            {"record_floats", record_floats},
            {"layout", {"expert_input", "gate_input", "label", "regime_tag"}},
            {"features", to_json(c.features)},
            {"utterance_frames", c.utterance_frames},
            {"has_regime_tags", c.has_regime_tags()},
            {"data_hash", io::hex64(fnv1a64(bytes))},
            {"provenance", c.provenance}};
  io::write_file(path, bytes);
  io::write_file(path + ".json", side.dump(2) + "\n");
}

Corpus read_corpus(const std::string& path) {
  json side;
  try {
    side = json::parse(io::read_file(path + ".json"));
  } catch (const json::exception& e) {
    throw FormatError("corpus sidecar '" + path + ".json' is not valid JSON: " + e.what());
  }
  if (side.value("schema", "") != kCorpusSchema)
    throw FormatError("corpus '" + path + "' has schema '" + side.value("schema", "") +
                      "', expected " + kCorpusSchema);
  Corpus c;
  c.features = feature_config_from_json(side.at("features"));
  const auto n = side.at("num_frames").get<std::size_t>();
  const std::size_t de = c.features.expert_dim(), dg = c.features.gate_dim(),
                    nb = c.features.num_bins();
  if (side.at("expert_dim").get<std::size_t>() != de || side.at("gate_dim").get<std::size_t>() != dg ||
      side.at("num_bins").get<std::size_t>() != nb)
    throw FormatError("corpus dimensions disagree with its feature configuration");
  c.utterance_frames = side.at("utterance_frames").get<std::vector<std::size_t>>();
  c.provenance = side.value("provenance", json::object());

  const std::string bytes = io::read_file(path);
  const std::size_t record = (de + dg + nb + 1) * sizeof(float);
  if (bytes.size() != n * record)
    throw FormatError("corpus '" + path + "' is truncated or corrupt: " +
                      std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(n * record));
  if (side.contains("data_hash") && side["data_hash"].get<std::string>() != io::hex64(fnv1a64(bytes)))
    throw FormatError("corpus '" + path + "' fails its checksum");
  std::size_t total = 0;
  for (auto f : c.utterance_frames) total += f;
  if (total != n) throw FormatError("corpus utterance frame counts do not sum to num_frames");

  std::istringstream in(bytes, std::ios::binary);
  const auto rows = static_cast<Eigen::Index>(n);
  c.expert_inputs.resize(rows, static_cast<Eigen::Index>(de));
  c.gate_inputs.resize(rows, static_cast<Eigen::Index>(dg));
  c.labels.resize(rows, static_cast<Eigen::Index>(nb));
  c.regime_tags.resize(n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < de; ++j) c.expert_inputs(r, static_cast<Eigen::Index>(j)) = io::read_le<float>(in);
    for (std::size_t j = 0; j < dg; ++j) c.gate_inputs(r, static_cast<Eigen::Index>(j)) = io::read_le<float>(in);
    for (std::size_t j = 0; j < nb; ++j) c.labels(r, static_cast<Eigen::Index>(j)) = io::read_le<float>(in);
    c.regime_tags[static_cast<std::size_t>(r)] = static_cast<int>(io::read_le<float>(in));
  }
  return c;
}

}  // namespace dmoe::data
