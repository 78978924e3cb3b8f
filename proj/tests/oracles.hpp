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

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the library's numerical kernels.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dmoe/mixture.hpp"
#include "dmoe/rng.hpp"
#include "dmoe/signal.hpp"

namespace oracle {

inline std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  return w;
}

// X[t][k] = sum_n w[n] x[t*hop + n] exp(-2 pi i k n / N), k = 0..N/2.
inline std::vector<std::vector<std::complex<double>>> naive_stft(const std::vector<double>& x,
                                                                  std::size_t n, std::size_t hop) {
  const auto w = hamming(n);
  std::vector<std::vector<std::complex<double>>> out;
  for (std::size_t start = 0; start + n <= x.size(); start += hop) {
    std::vector<std::complex<double>> row(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * j % n) /
                           static_cast<double>(n);
        acc += w[j] * x[start + j] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      row[k] = acc;
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double inv_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters with mel-spaced edges evaluated at bin centre frequencies.
inline dmoe::Grid filterbank(std::size_t bins, std::size_t n, double sr, std::size_t nf,
                             double fmin, double fmax) {
  dmoe::Grid fb = dmoe::Grid::Zero(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(bins));
  for (std::size_t j = 0; j < nf; ++j) {
    const double span = mel(fmax) - mel(fmin);
    const double a = inv_mel(mel(fmin) + span * static_cast<double>(j) / static_cast<double>(nf + 1));
    const double b = inv_mel(mel(fmin) + span * static_cast<double>(j + 1) / static_cast<double>(nf + 1));
    const double c = inv_mel(mel(fmin) + span * static_cast<double>(j + 2) / static_cast<double>(nf + 1));
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = sr * static_cast<double>(k) / static_cast<double>(n);
      const double up = (f - a) / (b - a), down = (c - f) / (c - b);
      fb(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

// c_q = sum_j log(e_j) * s_q cos(pi q (j + 1/2) / J), s_0 = sqrt(1/J), s_q = sqrt(2/J).
inline std::vector<double> mfcc_row(const std::vector<double>& power, const dmoe::Grid& fb,
                                    std::size_t nc, double log_floor) {
  const std::size_t nf = static_cast<std::size_t>(fb.rows());
  std::vector<double> logs(nf);
  for (std::size_t j = 0; j < nf; ++j) {
    double e = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) e += fb(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * power[k];
    logs[j] = e > std::exp(log_floor) ? std::log(e) : log_floor;
  }
  std::vector<double> c(nc, 0.0);
  for (std::size_t q = 0; q < nc; ++q) {
    const double s = std::sqrt((q == 0 ? 1.0 : 2.0) / static_cast<double>(nf));
    for (std::size_t j = 0; j < nf; ++j)
      c[q] += s * logs[j] * std::cos(std::numbers::pi * static_cast<double>(q) *
                                     (static_cast<double>(j) + 0.5) / static_cast<double>(nf));
  }
  return c;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Plain MLP evaluation on a vector, written out layer by layer.
inline std::vector<double> mlp(const dmoe::nn::MlpParams& p, std::vector<double> h) {
  for (const auto& layer : p.layers) {
    std::vector<double> z(layer.out_dim());
    for (std::size_t o = 0; o < z.size(); ++o) {
      double acc = layer.bias(static_cast<Eigen::Index>(o));
      for (std::size_t i = 0; i < h.size(); ++i)
        acc += layer.weights(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * h[i];
      z[o] = acc;
    }
    switch (layer.activation) {
      case dmoe::nn::Activation::kRelu:
        for (auto& v : z) v = std::max(0.0, v);
        break;
      case dmoe::nn::Activation::kSigmoid:
        for (auto& v : z) v = sigmoid(v);
        break;
      case dmoe::nn::Activation::kSoftmax: {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double s = 0.0;
        for (auto& v : z) s += (v = std::exp(v - mx));
        for (auto& v : z) v /= s;
        break;
      }
      case dmoe::nn::Activation::kIdentity:
        break;
    }
    h = std::move(z);
  }
  return h;
}

// log sum_i g_i prod_k rho_ik^b_k (1 - rho_ik)^(1 - b_k), evaluated directly
// in probability space.
inline double direct_loglik(const dmoe::DmoeParams& p, const dmoe::data::FeaturePair& f) {
  const auto g = mlp(p.gate, p.shared_input ? f.expert_input : f.gate_input);
  double total = 0.0;
  for (std::size_t i = 0; i < p.experts.size(); ++i) {
    const auto rho = mlp(p.experts[i], f.expert_input);
    double prod = g[i];
    for (std::size_t k = 0; k < rho.size(); ++k) prod *= f.label.bits[k] ? rho[k] : 1.0 - rho[k];
    total += prod;
  }
  return std::log(total);
}

inline dmoe::data::FeaturePair random_pair(std::size_t ex, std::size_t gx, std::size_t bins,
                                           dmoe::Rng& rng) {
  dmoe::data::FeaturePair f;
  for (std::size_t i = 0; i < ex; ++i) f.expert_input.push_back(rng.normal());
  for (std::size_t i = 0; i < gx; ++i) f.gate_input.push_back(rng.normal());
  for (std::size_t k = 0; k < bins; ++k) f.label.bits.push_back(rng.uniform() < 0.5 ? 1 : 0);
  return f;
}

// |a - b| / max(|a|, |b|), zero when both are zero.
inline double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace oracle
