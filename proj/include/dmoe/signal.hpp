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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace dmoe {

using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexGrid =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace dmoe

namespace dmoe::signal {

// Magnitudes are floored at exp(kDefaultLogFloor) before taking the log
// (about -400 dB).
inline constexpr double kDefaultLogFloor = -46.05;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  // Throws ConfigError for a non-positive rate, NumericError for NaN/Inf.
  void validate() const;
};

enum class Window { kRectangular, kHamming, kHann };

const char* window_name(Window w);
Window window_from_name(const std::string& name);

// Periodic (DFT-even) window of length `len`.
std::vector<double> make_window(Window w, std::size_t len);

// True when shifted copies of the window spaced by `hop` sum to a constant.
bool is_cola(Window w, std::size_t frame_len, std::size_t hop);

struct Stft {
  ComplexGrid frames;  // num_frames x (frame_len / 2 + 1)
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  Window window = Window::kHamming;
  std::size_t signal_len = 0;  // length of the analysed waveform
  int sample_rate = 16000;

  std::size_t num_frames() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t num_bins() const { return static_cast<std::size_t>(frames.cols()); }
};

struct LogSpectrum {
  Grid frames;  // num_frames x num_bins, natural-log magnitude
};

struct MfccFrames {
  Grid frames;  // num_frames x num_ceps
};

// Number of full frames that fit in `len` samples.
std::size_t frame_count(std::size_t len, std::size_t frame_len, std::size_t hop);

Stft stft(const Waveform& w, std::size_t frame_len, std::size_t hop,
          Window window = Window::kHamming);

// Overlap-add resynthesis with the magnitudes of `magnitude` and the phases of
// `phase_source`. Samples past the last full frame are zero.
Waveform istft(const Stft& magnitude, const Stft& phase_source);

LogSpectrum log_spectrum(const Stft& s, double log_floor = kDefaultLogFloor);

// Replaces the magnitudes of `like` by exp(log_mag), keeping its framing and
// zero phase. Intended as the magnitude argument of istft().
Stft from_log_magnitude(const LogSpectrum& log_mag, const Stft& like);

struct MelConfig {
  std::size_t num_filters = 26;
  std::size_t num_ceps = 13;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = kDefaultLogFloor;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filterbank, num_filters x num_bins. Filter edges are
// equally spaced on the mel scale between f_min and f_max; weights are
// evaluated at the exact bin centre frequencies.
Grid mel_filterbank(std::size_t num_bins, std::size_t frame_len, int sample_rate,
                    std::size_t num_filters, double f_min, double f_max);

// Orthonormal DCT-II, num_ceps x num_filters.
Grid dct_matrix(std::size_t num_ceps, std::size_t num_filters);

// Filterbank energies of the power spectrum, num_frames x num_filters.
Grid mel_energies(const Stft& s, const MelConfig& cfg);

MfccFrames mfcc(const Stft& s, const MelConfig& cfg);
MfccFrames mfcc(const Stft& s, std::size_t num_filters, std::size_t num_ceps);

// Per-column normalisation to zero mean and unit population variance.
// Columns whose standard deviation is below kCmvnConstantTol map to zero.
inline constexpr double kCmvnConstantTol = 1e-10;
Grid cmvn(const Grid& frames);

// Per-column statistics used by cmvn(); exposed so a caller can undo the
// normalisation.
struct ColumnStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // zero for constant columns
};
ColumnStats column_stats(const Grid& frames);

}  // namespace dmoe::signal
