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

#include "dmoe/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "dmoe/error.hpp"

namespace dmoe::signal {
namespace {

// FFTW planning is not thread-safe; execution on new arrays is. Plans are
// created once per length with FFTW_ESTIMATE so the chosen algorithm, and
// therefore every output bit, does not depend on timing measurements.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }

  fftw_plan forward(std::size_t n) { return get(n, true); }
  fftw_plan inverse(std::size_t n) { return get(n, false); }

 private:
  fftw_plan get(std::size_t n, bool forward) {
    std::lock_guard<std::mutex> lock(mu_);
    auto& cache = forward ? forward_ : inverse_;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> real(n);
    std::vector<std::complex<double>> cplx(n / 2 + 1);
    auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = forward
                      ? fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data(), c, flags)
                      : fftw_plan_dft_c2r_1d(static_cast<int>(n), c, real.data(), flags);
    cache.emplace(n, p);
    return p;
  }

  std::mutex mu_;
  std::map<std::size_t, fftw_plan> forward_;
  std::map<std::size_t, fftw_plan> inverse_;
};

void check_framing(std::size_t frame_len, std::size_t hop) {
  if (frame_len == 0 || frame_len % 2 != 0)
    throw ConfigError("frame length must be even and positive, got " +
                      std::to_string(frame_len));
  if (hop == 0 || hop > frame_len)
    throw ConfigError("hop must be in [1, frame_len], got " + std::to_string(hop));
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!std::isfinite(samples[i]))
      throw NumericError("non-finite sample at index " + std::to_string(i));
}

const char* window_name(Window w) {
  switch (w) {
    case Window::kRectangular: return "rectangular";
    case Window::kHamming: return "hamming";
    case Window::kHann: return "hann";
  }
  return "unknown";
}

Window window_from_name(const std::string& name) {
  if (name == "rectangular") return Window::kRectangular;
  if (name == "hamming") return Window::kHamming;
  if (name == "hann") return Window::kHann;
  throw ConfigError("unknown window '" + name + "'");
}

std::vector<double> make_window(Window w, std::size_t len) {
  std::vector<double> out(len, 1.0);
  const double n = static_cast<double>(len);
  for (std::size_t i = 0; i < len; ++i) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / n;
    switch (w) {
      case Window::kRectangular: break;
      case Window::kHamming: out[i] = 0.54 - 0.46 * std::cos(phase); break;
      case Window::kHann: out[i] = 0.5 - 0.5 * std::cos(phase); break;
    }
  }
  return out;
}

bool is_cola(Window w, std::size_t frame_len, std::size_t hop) {
  if (hop == 0 || hop > frame_len) return false;
  const auto win = make_window(w, frame_len);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t n = 0; n < hop; ++n) {
    double sum = 0.0;
    for (std::size_t j = n; j < frame_len; j += hop) sum += win[j];
    lo = std::min(lo, sum);
    hi = std::max(hi, sum);
  }
  return lo > 0.0 && (hi - lo) <= 1e-9 * hi;
}

std::size_t frame_count(std::size_t len, std::size_t frame_len, std::size_t hop) {
  if (len < frame_len) return 0;
  return (len - frame_len) / hop + 1;
}

Stft stft(const Waveform& w, std::size_t frame_len, std::size_t hop, Window window) {
  check_framing(frame_len, hop);
  w.validate();
  if (w.samples.size() < frame_len)
    throw TooShortError("signal too short: " + std::to_string(w.samples.size()) +
                        " samples < frame length " + std::to_string(frame_len));

  const std::size_t frames = frame_count(w.samples.size(), frame_len, hop);
  const std::size_t bins = frame_len / 2 + 1;
  const auto win = make_window(window, frame_len);
  fftw_plan plan = FftPlans::instance().forward(frame_len);

  Stft out;
  out.frames.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
  out.frame_len = frame_len;
  out.hop = hop;
  out.window = window;
  out.signal_len = w.samples.size();
  out.sample_rate = w.sample_rate;

#pragma omp parallel
  {
    std::vector<double> buf(frame_len);
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(frames); ++t) {
      const double* src = w.samples.data() + static_cast<std::size_t>(t) * hop;
      for (std::size_t j = 0; j < frame_len; ++j) buf[j] = src[j] * win[j];
      auto* dst = reinterpret_cast<fftw_complex*>(out.frames.row(t).data());
      fftw_execute_dft_r2c(plan, buf.data(), dst);
    }
  }
  return out;
}

Waveform istft(const Stft& magnitude, const Stft& phase_source) {
  if (magnitude.frames.rows() != phase_source.frames.rows() ||
      magnitude.frames.cols() != phase_source.frames.cols() ||
      magnitude.frame_len != phase_source.frame_len || magnitude.hop != phase_source.hop ||
      magnitude.window != phase_source.window)
    throw ShapeError("istft: magnitude and phase grids differ in shape or framing");
  const std::size_t frame_len = magnitude.frame_len;
  const std::size_t hop = magnitude.hop;
  check_framing(frame_len, hop);
  if (magnitude.num_bins() != frame_len / 2 + 1)
    throw ShapeError("istft: bin count does not match frame length");
  if (!is_cola(magnitude.window, frame_len, hop))
    throw ConfigError(std::string("istft: ") + window_name(magnitude.window) +
                      " window with hop " + std::to_string(hop) +
                      " does not satisfy constant overlap-add");

  const std::size_t frames = magnitude.num_frames();
  const std::size_t bins = magnitude.num_bins();
  std::size_t out_len = magnitude.signal_len;
  if (frames > 0) out_len = std::max(out_len, (frames - 1) * hop + frame_len);

  const auto win = make_window(magnitude.window, frame_len);
  fftw_plan plan = FftPlans::instance().inverse(frame_len);

  // Each inverse frame is independent; overlap-add happens afterwards in frame
  // order so the result does not depend on the thread count.
  Grid segments(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(frame_len));
#pragma omp parallel
  {
    std::vector<std::complex<double>> spec(bins);
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(frames); ++t) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double mag = std::abs(magnitude.frames(t, static_cast<Eigen::Index>(k)));
        const double ph = std::arg(phase_source.frames(t, static_cast<Eigen::Index>(k)));
        spec[k] = std::polar(mag, ph);
      }
      fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(spec.data()),
                           segments.row(t).data());
    }
  }

  std::vector<double> acc(out_len, 0.0), norm(out_len, 0.0);
  const double scale = 1.0 / static_cast<double>(frame_len);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t base = t * hop;
    for (std::size_t j = 0; j < frame_len; ++j) {
      acc[base + j] += segments(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) * scale;
      norm[base + j] += win[j];
    }
  }

  Waveform out;
  out.sample_rate = magnitude.sample_rate;
  out.samples.assign(magnitude.signal_len > 0 ? magnitude.signal_len : out_len, 0.0);
  const std::size_t n = std::min(out.samples.size(), out_len);
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = norm[i] > 1e-12 ? acc[i] / norm[i] : 0.0;
  return out;
}

LogSpectrum log_spectrum(const Stft& s, double log_floor) {
  LogSpectrum out;
  out.frames = s.frames.cwiseAbs().unaryExpr(
      [log_floor](double m) { return m > 0.0 ? std::max(std::log(m), log_floor) : log_floor; });
  return out;
}

Stft from_log_magnitude(const LogSpectrum& log_mag, const Stft& like) {
  if (log_mag.frames.rows() != like.frames.rows() || log_mag.frames.cols() != like.frames.cols())
    throw ShapeError("log-magnitude grid does not match the reference STFT");
  Stft out = like;
  out.frames = log_mag.frames.unaryExpr([](double v) { return std::exp(v); })
                   .cast<std::complex<double>>();
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Grid mel_filterbank(std::size_t num_bins, std::size_t frame_len, int sample_rate,
                    std::size_t num_filters, double f_min, double f_max) {
  if (num_filters < 2) throw ConfigError("need at least 2 mel filters");
  if (!(f_min >= 0.0 && f_max > f_min))
    throw ConfigError("mel band edges must satisfy 0 <= f_min < f_max");

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(num_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(num_filters + 1));

  Grid fb = Grid::Zero(static_cast<Eigen::Index>(num_filters), static_cast<Eigen::Index>(num_bins));
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(frame_len);
  for (std::size_t j = 0; j < num_filters; ++j) {
    const double left = edges[j], centre = edges[j + 1], right = edges[j + 2];
    for (std::size_t k = 0; k < num_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double v = 0.0;
      if (f > left && f <= centre)
        v = (f - left) / (centre - left);
      else if (f > centre && f < right)
        v = (right - f) / (right - centre);
      fb(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return fb;
}

Grid dct_matrix(std::size_t num_ceps, std::size_t num_filters) {
  Grid d(static_cast<Eigen::Index>(num_ceps), static_cast<Eigen::Index>(num_filters));
  const double n = static_cast<double>(num_filters);
  for (std::size_t q = 0; q < num_ceps; ++q) {
    const double norm = q == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t j = 0; j < num_filters; ++j)
      d(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(j)) =
          norm * std::cos(std::numbers::pi * static_cast<double>(q) *
                          (static_cast<double>(j) + 0.5) / n);
  }
  return d;
}

namespace {

void check_mel(const MelConfig& cfg) {
  if (cfg.num_filters < 2) throw ConfigError("need at least 2 mel filters");
  if (cfg.num_ceps == 0 || cfg.num_ceps > cfg.num_filters)
    throw ConfigError("num_ceps must be in [1, num_filters]");
}

}  // namespace

Grid mel_energies(const Stft& s, const MelConfig& cfg) {
  check_mel(cfg);
  const Grid fb = mel_filterbank(s.num_bins(), s.frame_len, s.sample_rate, cfg.num_filters,
                                 cfg.f_min, cfg.f_max);
  const Grid power = s.frames.cwiseAbs2();
  return power * fb.transpose();
}

MfccFrames mfcc(const Stft& s, const MelConfig& cfg) {
  const Grid energies = mel_energies(s, cfg);
  const double energy_floor = std::exp(cfg.log_floor);
  const Grid logs = energies.unaryExpr(
      [&](double e) { return e > energy_floor ? std::log(e) : cfg.log_floor; });
  MfccFrames out;
  out.frames = logs * dct_matrix(cfg.num_ceps, cfg.num_filters).transpose();
  return out;
}

MfccFrames mfcc(const Stft& s, std::size_t num_filters, std::size_t num_ceps) {
  MelConfig cfg;
  cfg.num_filters = num_filters;
  cfg.num_ceps = num_ceps;
  cfg.f_max = s.sample_rate / 2.0;
  return mfcc(s, cfg);
}

ColumnStats column_stats(const Grid& frames) {
  if (frames.rows() < 2) throw ShapeError("cmvn needs at least 2 frames");
  const double n = static_cast<double>(frames.rows());
  ColumnStats st;
  st.mean = frames.colwise().sum().transpose() / n;
  st.stddev.resize(frames.cols());
  for (Eigen::Index c = 0; c < frames.cols(); ++c) {
    const double var = (frames.col(c).array() - st.mean(c)).square().sum() / n;
    const double sd = std::sqrt(var);
    st.stddev(c) = sd < kCmvnConstantTol ? 0.0 : sd;
  }
  return st;
}

Grid cmvn(const Grid& frames) {
  const ColumnStats st = column_stats(frames);
  Grid out(frames.rows(), frames.cols());
  for (Eigen::Index c = 0; c < frames.cols(); ++c) {
    if (st.stddev(c) == 0.0)
      out.col(c).setZero();
    else
      out.col(c) = (frames.col(c).array() - st.mean(c)) / st.stddev(c);
  }
  return out;
}

}  // namespace dmoe::signal
