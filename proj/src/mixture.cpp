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

#include "dmoe/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmoe/binary_io.hpp"
#include "dmoe/error.hpp"
#include "dmoe/rng.hpp"

namespace dmoe {

using nlohmann::json;
using nn::Matrix;
using nn::Vector;

namespace {

// Rows per work item of the batched kernels. Fixed so that the reduction
// order, and therefore every output bit, is independent of the thread count.
constexpr std::size_t kChunkRows = 64;

const double kLogClampLo = std::log(kProbClamp);

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// Gate probabilities only enter as log p, so only the lower clamp applies;
// a degenerate single-expert gate then contributes exactly log 1 = 0.
double gate_log(double p) { return std::max(std::log(p), kLogClampLo); }

nn::MlpParams make_mlp(std::size_t in, std::size_t hidden, std::size_t hidden_layers,
                       std::size_t out, nn::Activation head, std::uint64_t seed) {
  std::vector<std::size_t> dims{in};
  std::vector<nn::Activation> acts;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    dims.push_back(hidden);
    acts.push_back(nn::Activation::kRelu);
  }
  dims.push_back(out);
  acts.push_back(head);
  return nn::init_params(dims, acts, seed);
}

}  // namespace

void DmoeParams::validate() const {
  if (experts.empty()) throw ConfigError("model needs at least one expert");
  gate.validate();
  if (gate.layers.back().activation != nn::Activation::kSoftmax)
    throw ConfigError("gate output must be softmax");
  if (gate.output_dim() != experts.size())
    throw ShapeError("gate output dimension " + std::to_string(gate.output_dim()) +
                     " != number of experts " + std::to_string(experts.size()));
  for (std::size_t i = 0; i < experts.size(); ++i) {
    experts[i].validate();
    if (experts[i].layers.back().activation != nn::Activation::kSigmoid)
      throw ConfigError("expert " + std::to_string(i) + " output must be sigmoid");
    if (experts[i].input_dim() != experts[0].input_dim() ||
        experts[i].output_dim() != experts[0].output_dim())
      throw ShapeError("expert " + std::to_string(i) + " dimensions differ from expert 0");
  }
  if (shared_input && gate.input_dim() != experts[0].input_dim())
    throw ShapeError("shared-input gate must take the expert input dimension");
}

ModelDims dims_for(const data::FeatureConfig& cfg, bool shared_input) {
  return {cfg.expert_dim(), shared_input ? cfg.expert_dim() : cfg.gate_dim(), cfg.num_bins()};
}

DmoeParams init_dmoe(const ModelDims& dims, const ModelShape& shape, std::uint64_t seed) {
  if (shape.num_experts == 0) throw ConfigError("number of experts must be >= 1");
  if (shape.hidden == 0) throw ConfigError("hidden size must be positive");
  DmoeParams p;
  p.shared_input = shape.shared_input;
  const std::size_t gate_in = shape.shared_input ? dims.expert_input : dims.gate_input;
  p.gate = make_mlp(gate_in, shape.hidden, shape.hidden_layers, shape.num_experts,
                    nn::Activation::kSoftmax, child_seed(seed, "gate"));
  for (std::size_t i = 0; i < shape.num_experts; ++i)
    p.experts.push_back(make_mlp(dims.expert_input, shape.hidden, shape.hidden_layers,
                                 dims.num_bins, nn::Activation::kSigmoid,
                                 child_seed(seed, "expert", i)));
  p.validate();
  return p;
}

DmoeGrads DmoeGrads::zeros_like(const DmoeParams& p) {
  DmoeGrads g;
  g.gate = nn::MlpGrads::zeros_like(p.gate);
  for (const auto& e : p.experts) g.experts.push_back(nn::MlpGrads::zeros_like(e));
  return g;
}

DmoeGrads& DmoeGrads::operator+=(const DmoeGrads& other) {
  gate += other.gate;
  for (std::size_t i = 0; i < experts.size(); ++i) experts[i] += other.experts[i];
  return *this;
}

DmoeGrads& DmoeGrads::operator*=(double s) {
  gate *= s;
  for (auto& e : experts) e *= s;
  return *this;
}

bool DmoeGrads::all_finite() const {
  if (!gate.all_finite()) return false;
  return std::all_of(experts.begin(), experts.end(), [](const auto& e) { return e.all_finite(); });
}

std::uint64_t network_seed(std::uint64_t frame_seed, std::size_t network) {
  return child_seed(frame_seed, "network", network);
}

std::uint64_t frame_seed(std::uint64_t step_seed, std::size_t row) {
  return child_seed(step_seed, "frame", row);
}

mask::SppVector expert_spp(const DmoeParams& p, std::size_t i, std::span<const double> expert_input) {
  if (i >= p.num_experts())
    throw ConfigError("expert index " + std::to_string(i) + " out of range (m = " +
                      std::to_string(p.num_experts()) + ")");
  const auto r = nn::forward(p.experts[i], expert_input, 0.0, nn::Mode::kInfer, 0);
  return {std::vector<double>(r.output.begin(), r.output.end())};
}

std::vector<double> gate_dist(const DmoeParams& p, std::span<const double> gate_input) {
  const auto r = nn::forward(p.gate, gate_input, 0.0, nn::Mode::kInfer, 0);
  return {r.output.begin(), r.output.end()};
}

mask::SppVector final_spp(const DmoeParams& p, std::span<const double> expert_input,
                          std::span<const double> gate_input) {
  const auto gate = gate_dist(p, p.shared_input ? expert_input : gate_input);
  mask::SppVector out{std::vector<double>(p.num_bins(), 0.0)};
  for (std::size_t i = 0; i < p.num_experts(); ++i) {
    const auto rho = expert_spp(p, i, expert_input);
    for (std::size_t k = 0; k < out.probs.size(); ++k) out.probs[k] += gate[i] * rho.probs[k];
  }
  return out;
}

double bernoulli_loglik(std::span<const double> probs, std::span<const std::uint8_t> bits) {
  if (probs.size() != bits.size()) throw ShapeError("bernoulli_loglik: length mismatch");
  double ll = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k)
    ll += bits[k] ? std::log(clamp_prob(probs[k])) : std::log(clamp_prob(1.0 - probs[k]));
  return ll;
}

FrameLikelihood frame_log_likelihood(const DmoeParams& p, const data::FeaturePair& pair,
                                     const PassOptions& opts, std::uint64_t frame_seed) {
  const std::size_t m = p.num_experts();
  if (pair.label.size() != p.num_bins())
    throw ShapeError("label length " + std::to_string(pair.label.size()) + " != num_bins " +
                     std::to_string(p.num_bins()));
  FrameLikelihood f;
  auto g = nn::forward(p.gate, p.shared_input ? pair.expert_input : pair.gate_input, opts.dropout,
                       opts.mode, network_seed(frame_seed, 0));
  f.gate_cache = std::move(g.cache);
  f.gate_log_prob.resize(m);
  f.expert_loglik.resize(m);
  std::vector<double> a(m);
  for (std::size_t i = 0; i < m; ++i) {
    f.gate_log_prob[i] = gate_log(g.output(static_cast<Eigen::Index>(i)));
    auto e = nn::forward(p.experts[i], pair.expert_input, opts.dropout, opts.mode,
                         network_seed(frame_seed, i + 1));
    f.expert_loglik[i] = bernoulli_loglik({e.output.data(), static_cast<std::size_t>(e.output.size())},
                                          pair.label.bits);
    f.expert_caches.push_back(std::move(e.cache));
    a[i] = f.gate_log_prob[i] + f.expert_loglik[i];
  }
  const double mx = *std::max_element(a.begin(), a.end());
  double s = 0.0;
  for (double v : a) s += std::exp(v - mx);
  f.loglik = mx + std::log(s);
  f.posterior.resize(m);
  for (std::size_t i = 0; i < m; ++i) f.posterior[i] = std::exp(a[i] - f.loglik);
  return f;
}

data::Corpus corpus_from_pairs(std::span<const data::FeaturePair> pairs) {
  if (pairs.empty()) throw ConfigError("empty batch");
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const auto de = static_cast<Eigen::Index>(pairs[0].expert_input.size());
  const auto dg = static_cast<Eigen::Index>(pairs[0].gate_input.size());
  const auto nb = static_cast<Eigen::Index>(pairs[0].label.size());
  data::Corpus c;
  c.expert_inputs.resize(n, de);
  c.gate_inputs.resize(n, dg);
  c.labels.resize(n, nb);
  c.regime_tags.resize(pairs.size());
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto& pr = pairs[static_cast<std::size_t>(t)];
    if (static_cast<Eigen::Index>(pr.expert_input.size()) != de ||
        static_cast<Eigen::Index>(pr.gate_input.size()) != dg ||
        static_cast<Eigen::Index>(pr.label.size()) != nb)
      throw ShapeError("frame " + std::to_string(t) + " dimensions differ from frame 0");
    c.expert_inputs.row(t) = Eigen::Map<const Eigen::RowVectorXd>(pr.expert_input.data(), de);
    c.gate_inputs.row(t) = Eigen::Map<const Eigen::RowVectorXd>(pr.gate_input.data(), dg);
    for (Eigen::Index k = 0; k < nb; ++k) c.labels(t, k) = pr.label.bits[static_cast<std::size_t>(k)];
    c.regime_tags[static_cast<std::size_t>(t)] = pr.regime_tag.value_or(-1);
  }
  c.utterance_frames = {pairs.size()};
  return c;
}

namespace {

struct ChunkOutput {
  DmoeGrads grads;
  Eigen::VectorXd loglik;
  Matrix posteriors;
  Matrix gate_probs;
  std::string error;
};

enum class GradMode { kNone, kJoint, kFixedPosterior };

void check_dims(const DmoeParams& p, const data::Corpus& c) {
  if (static_cast<std::size_t>(c.expert_inputs.cols()) != p.expert_input_dim())
    throw ShapeError("corpus expert input width " + std::to_string(c.expert_inputs.cols()) +
                     " != model " + std::to_string(p.expert_input_dim()));
  if (!p.shared_input && static_cast<std::size_t>(c.gate_inputs.cols()) != p.gate_input_dim())
    throw ShapeError("corpus gate input width " + std::to_string(c.gate_inputs.cols()) +
                     " != model " + std::to_string(p.gate_input_dim()));
  if (static_cast<std::size_t>(c.labels.cols()) != p.num_bins())
    throw ShapeError("corpus label width " + std::to_string(c.labels.cols()) + " != model bins " +
                     std::to_string(p.num_bins()));
}

// One chunk of the batched forward/backward pass. `first` is the position of
// rows[0] within the whole batch (used for dropout seeds and diagnostics).
void run_chunk(const DmoeParams& p, const data::Corpus& c, std::span<const std::size_t> rows,
               std::size_t first, const GradientOptions& opts, GradMode mode,
               const Grid* fixed_posteriors, ChunkOutput& out) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const std::size_t m = p.num_experts();
  const auto mi = static_cast<Eigen::Index>(m);

  Matrix xe(n, c.expert_inputs.cols());
  Matrix labels(n, c.labels.cols());
  Matrix xg;
  if (!p.shared_input) xg.resize(n, c.gate_inputs.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(t)]);
    xe.row(t) = c.expert_inputs.row(r);
    labels.row(t) = c.labels.row(r);
    if (!p.shared_input) xg.row(t) = c.gate_inputs.row(r);
  }

  const bool stochastic = opts.pass.mode == nn::Mode::kTrain && opts.pass.dropout > 0.0;
  auto seeds_for = [&](std::size_t network) {
    std::vector<std::uint64_t> s;
    if (!stochastic) return s;
    s.resize(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t)
      s[t] = network_seed(frame_seed(opts.step_seed, first + t), network);
    return s;
  };

  const auto gate_cache = nn::forward_batch(p.gate, p.shared_input ? xe : xg, opts.pass.dropout,
                                            opts.pass.mode, seeds_for(0));
  const Matrix& gate_probs = gate_cache.output();

  std::vector<nn::BatchCache> expert_caches;
  expert_caches.reserve(m);
  Matrix a(n, mi);  // log p(z=i|v) + log p(b|x,z=i)
  for (std::size_t i = 0; i < m; ++i) {
    expert_caches.push_back(nn::forward_batch(p.experts[i], xe, opts.pass.dropout, opts.pass.mode,
                                              seeds_for(i + 1)));
    const Matrix& rho = expert_caches.back().output();
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index t = 0; t < n; ++t) {
      double ll = 0.0;
      for (Eigen::Index k = 0; k < rho.cols(); ++k)
        ll += labels(t, k) > 0.5 ? std::log(clamp_prob(rho(t, k)))
                                 : std::log(clamp_prob(1.0 - rho(t, k)));
      a(t, ii) = gate_log(gate_probs(t, ii)) + ll;
    }
  }

  out.loglik.resize(n);
  out.posteriors.resize(n, mi);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double mx = a.row(t).maxCoeff();
    const double lse = mx + std::log((a.row(t).array() - mx).exp().sum());
    out.loglik(t) = lse;
    out.posteriors.row(t) = (a.row(t).array() - lse).exp();
    if (!std::isfinite(lse)) {
      out.error = "non-finite log-likelihood at batch frame " +
                  std::to_string(first + static_cast<std::size_t>(t));
      return;
    }
  }
  out.gate_probs = gate_probs;
  if (mode == GradMode::kNone) return;

  const Matrix& w = mode == GradMode::kJoint ? out.posteriors : Matrix(fixed_posteriors->middleRows(
                                                                    static_cast<Eigen::Index>(first), n));
  out.grads = DmoeGrads::zeros_like(p);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Matrix g = labels - expert_caches[i].output();
    g.array().colwise() *= w.col(ii).array();
    nn::accumulate_backward_batch(p.experts[i], expert_caches[i], g, out.grads.experts[i]);
  }
  Matrix gg = w;
  gg -= (gate_probs.array().colwise() * w.rowwise().sum().array()).matrix();
  nn::accumulate_backward_batch(p.gate, gate_cache, gg, out.grads.gate);
}

struct KernelResult {
  DmoeGrads grads;
  Eigen::VectorXd loglik;
  Grid posteriors;
  Grid gate_probs;
};

KernelResult run_kernel(const DmoeParams& p, const data::Corpus& c,
                        std::span<const std::size_t> rows, const GradientOptions& opts,
                        GradMode mode, const Grid* fixed_posteriors) {
  check_dims(p, c);
  if (rows.empty()) throw ConfigError("empty batch");
  for (std::size_t r : rows)
    if (r >= c.size()) throw ShapeError("batch row " + std::to_string(r) + " out of range");
  if (fixed_posteriors != nullptr &&
      (fixed_posteriors->rows() != static_cast<Eigen::Index>(rows.size()) ||
       fixed_posteriors->cols() != static_cast<Eigen::Index>(p.num_experts())))
    throw ShapeError("posterior grid must be batch x num_experts");

  const std::size_t chunks = (rows.size() + kChunkRows - 1) / kChunkRows;
  std::vector<ChunkOutput> outs(chunks);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(chunks); ++ci) {
    const auto k = static_cast<std::size_t>(ci);
    const std::size_t first = k * kChunkRows;
    const std::size_t len = std::min(kChunkRows, rows.size() - first);
    try {
      run_chunk(p, c, rows.subspan(first, len), first, opts, mode, fixed_posteriors, outs[k]);
    } catch (const std::exception& e) {
      outs[k].error = e.what();
    }
  }

  KernelResult r;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(p.num_experts());
  r.loglik.resize(n);
  r.posteriors.resize(n, m);
  r.gate_probs.resize(n, m);
  if (mode != GradMode::kNone) r.grads = DmoeGrads::zeros_like(p);
  for (std::size_t k = 0; k < chunks; ++k) {
    if (!outs[k].error.empty()) throw NumericError(outs[k].error);
    const auto first = static_cast<Eigen::Index>(k * kChunkRows);
    const Eigen::Index len = outs[k].loglik.size();
    r.loglik.segment(first, len) = outs[k].loglik;
    r.posteriors.middleRows(first, len) = outs[k].posteriors;
    r.gate_probs.middleRows(first, len) = outs[k].gate_probs;
    if (mode != GradMode::kNone) r.grads += outs[k].grads;
  }
  if (mode != GradMode::kNone && !r.grads.all_finite())
    throw NumericError("non-finite gradient in batch");
  return r;
}

}  // namespace

BatchGradients joint_gradients(const DmoeParams& p, const data::Corpus& corpus,
                               std::span<const std::size_t> rows, const GradientOptions& opts) {
  auto r = run_kernel(p, corpus, rows, opts, GradMode::kJoint, nullptr);
  return {std::move(r.grads), r.loglik.sum()};
}

DmoeGrads joint_gradients(const DmoeParams& p, std::span<const data::FeaturePair> batch) {
  const data::Corpus c = corpus_from_pairs(batch);
  std::vector<std::size_t> rows(batch.size());
  for (std::size_t t = 0; t < rows.size(); ++t) rows[t] = t;
  return joint_gradients(p, c, rows).grads;
}

BatchGradients m_step_gradients(const DmoeParams& p, const data::Corpus& corpus,
                                std::span<const std::size_t> rows, const Grid& posteriors,
                                const GradientOptions& opts) {
  auto r = run_kernel(p, corpus, rows, opts, GradMode::kFixedPosterior, &posteriors);
  return {std::move(r.grads), r.loglik.sum()};
}

Evaluation evaluate(const DmoeParams& p, const data::Corpus& corpus) {
  std::vector<std::size_t> rows(corpus.size());
  for (std::size_t t = 0; t < rows.size(); ++t) rows[t] = t;
  auto r = run_kernel(p, corpus, rows, {}, GradMode::kNone, nullptr);
  return {std::move(r.loglik), std::move(r.posteriors), std::move(r.gate_probs)};
}

Grid predict_spp(const DmoeParams& p, const Grid& expert_inputs, const Grid& gate_inputs) {
  if (static_cast<std::size_t>(expert_inputs.cols()) != p.expert_input_dim())
    throw ShapeError("expert input width does not match the model");
  if (!p.shared_input && static_cast<std::size_t>(gate_inputs.cols()) != p.gate_input_dim())
    throw ShapeError("gate input width does not match the model");
  const Eigen::Index n = expert_inputs.rows();
  Grid out = Grid::Zero(n, static_cast<Eigen::Index>(p.num_bins()));
  const auto chunks = static_cast<std::ptrdiff_t>((static_cast<std::size_t>(n) + kChunkRows - 1) / kChunkRows);
  std::vector<std::string> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ci = 0; ci < chunks; ++ci) {
    try {
      const auto first = static_cast<Eigen::Index>(static_cast<std::size_t>(ci) * kChunkRows);
      const Eigen::Index len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kChunkRows), n - first);
      const Matrix xe = expert_inputs.middleRows(first, len);
      const Matrix xg = p.shared_input ? xe : Matrix(gate_inputs.middleRows(first, len));
      const auto g = nn::forward_batch(p.gate, xg, 0.0, nn::Mode::kInfer, {});
      for (std::size_t i = 0; i < p.num_experts(); ++i) {
        const auto e = nn::forward_batch(p.experts[i], xe, 0.0, nn::Mode::kInfer, {});
        out.middleRows(first, len).array() +=
            e.output().array().colwise() * g.output().col(static_cast<Eigen::Index>(i)).array();
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(ci)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw NumericError(e);
  return out;
}

namespace reference {

BatchGradients joint_gradients(const DmoeParams& p, std::span<const data::FeaturePair> batch,
                               const GradientOptions& opts) {
  if (batch.empty()) throw ConfigError("empty batch");
  BatchGradients out{DmoeGrads::zeros_like(p), 0.0};
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto f = frame_log_likelihood(p, batch[t], opts.pass, frame_seed(opts.step_seed, t));
    if (!std::isfinite(f.loglik))
      throw NumericError("non-finite log-likelihood at batch frame " + std::to_string(t));
    out.loglik += f.loglik;
    Vector b(static_cast<Eigen::Index>(batch[t].label.size()));
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = batch[t].label.bits[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < p.num_experts(); ++i) {
      const Vector g = f.posterior[i] * (b - f.expert_caches[i].output());
      out.grads.experts[i] += nn::backward_from_logits(p.experts[i], f.expert_caches[i], g);
    }
    Vector gg(static_cast<Eigen::Index>(p.num_experts()));
    for (std::size_t i = 0; i < p.num_experts(); ++i)
      gg(static_cast<Eigen::Index>(i)) = f.posterior[i] - f.gate_cache.output()(static_cast<Eigen::Index>(i));
    out.grads.gate += nn::backward_from_logits(p.gate, f.gate_cache, gg);
  }
  return out;
}

BatchGradients m_step_gradients(const DmoeParams& p, std::span<const data::FeaturePair> batch,
                                const Grid& posteriors) {
  if (batch.empty()) throw ConfigError("empty batch");
  if (posteriors.rows() != static_cast<Eigen::Index>(batch.size()) ||
      posteriors.cols() != static_cast<Eigen::Index>(p.num_experts()))
    throw ShapeError("posterior grid must be batch x num_experts");
  BatchGradients out{DmoeGrads::zeros_like(p), 0.0};
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& pair = batch[t];
    const auto r = static_cast<Eigen::Index>(t);
    const auto g = nn::forward(p.gate, p.shared_input ? pair.expert_input : pair.gate_input, 0.0,
                               nn::Mode::kInfer, 0);
    // d/dp_i of sum_i w_i log p_i.
    std::vector<double> dgate(p.num_experts());
    for (std::size_t i = 0; i < p.num_experts(); ++i)
      dgate[i] = posteriors(r, static_cast<Eigen::Index>(i)) / g.output(static_cast<Eigen::Index>(i));
    out.grads.gate += nn::backward(p.gate, g.cache, dgate);

    for (std::size_t i = 0; i < p.num_experts(); ++i) {
      const double w = posteriors(r, static_cast<Eigen::Index>(i));
      const auto e = nn::forward(p.experts[i], pair.expert_input, 0.0, nn::Mode::kInfer, 0);
      std::vector<double> drho(p.num_bins());
      for (std::size_t k = 0; k < drho.size(); ++k) {
        const double rho = e.output(static_cast<Eigen::Index>(k));
        drho[k] = pair.label.bits[k] ? w / rho : -w / (1.0 - rho);
      }
      out.grads.experts[i] += nn::backward(p.experts[i], e.cache, drho);
      out.loglik += w * bernoulli_loglik({e.output.data(), p.num_bins()}, pair.label.bits);
    }
  }
  return out;
}

}  // namespace reference

void TrainConfig::validate() const {
  if (shape.num_experts == 0) throw ConfigError("number of experts must be >= 1");
  if (shape.hidden == 0) throw ConfigError("hidden size must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

json to_json(const TrainConfig& c) {
  return json{{"experts", c.shape.num_experts},
              {"hidden", c.shape.hidden},
              {"hidden_layers", c.shape.hidden_layers},
              {"shared_input", c.shape.shared_input},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"dropout", c.dropout},
              {"seed", c.seed},
              {"inner_epochs", c.inner_epochs},
              {"lr", c.adam.lr},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"eps", c.adam.eps}};
}

double TrainReport::non_decreasing_fraction() const {
  if (records.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].mean_loglik >= records[i - 1].mean_loglik) ++ok;
  return static_cast<double>(ok) / static_cast<double>(records.size() - 1);
}

json TrainReport::to_json() const {
  json rows = json::array();
  for (const auto& r : records)
    rows.push_back({{"label", r.label},
                    {"index", r.index},
                    {"mean_loglik", r.mean_loglik},
                    {"total_loglik", r.total_loglik}});
  return json{{"trainer", trainer},
              {"frames", frames},
              {"records", rows},
              {"non_decreasing_fraction", non_decreasing_fraction()}};
}

namespace {

class Optimizer {
 public:
  Optimizer(const DmoeParams& p, const nn::AdamConfig& cfg) {
    states_.push_back(nn::AdamState::init(p.gate, cfg));
    for (const auto& e : p.experts) states_.push_back(nn::AdamState::init(e, cfg));
  }

  // Ascent on the log-likelihood: Adam descends on -grads / batch.
  void step(DmoeParams& p, DmoeGrads ascent, std::size_t batch) {
    ascent *= -1.0 / static_cast<double>(batch);
    nn::adam_step(p.gate, ascent.gate, states_[0]);
    for (std::size_t i = 0; i < p.experts.size(); ++i)
      nn::adam_step(p.experts[i], ascent.experts[i], states_[i + 1]);
  }

 private:
  std::vector<nn::AdamState> states_;
};

std::vector<std::size_t> shuffled_rows(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
  return rows;
}

EpochRecord record(const std::string& label, std::size_t index, const Evaluation& ev) {
  return {label, index, ev.mean_loglik(), ev.total_loglik()};
}

void check_training_inputs(const data::Corpus& corpus, const TrainConfig& cfg, const DmoeParams& p) {
  cfg.validate();
  if (corpus.size() == 0) throw ConfigError("training corpus is empty");
  p.validate();
  check_dims(p, corpus);
}

DmoeParams initial_params(const data::Corpus& corpus, const TrainConfig& cfg) {
  ModelDims dims{static_cast<std::size_t>(corpus.expert_inputs.cols()),
                 static_cast<std::size_t>(corpus.gate_inputs.cols()),
                 static_cast<std::size_t>(corpus.labels.cols())};
  DmoeParams p = init_dmoe(dims, cfg.shape, child_seed(cfg.seed, "init"));
  if (corpus.features.expert_dim() == dims.expert_input) p.features = corpus.features;
  return p;
}

// Runs one pass over the shuffled corpus; `posteriors` selects the M-step
// objective (fixed w) instead of the joint one.
void run_epoch(DmoeParams& p, Optimizer& opt, const data::Corpus& corpus, const TrainConfig& cfg,
               std::uint64_t shuffle_seed, std::uint64_t& step, const Grid* posteriors) {
  const auto order = shuffled_rows(corpus.size(), shuffle_seed);
  GradientOptions go;
  go.pass = {cfg.dropout, nn::Mode::kTrain};
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t len = std::min(cfg.batch_size, order.size() - start);
    const std::span<const std::size_t> rows(order.data() + start, len);
    go.step_seed = child_seed(cfg.seed, "step", step++);
    if (posteriors == nullptr) {
      opt.step(p, joint_gradients(p, corpus, rows, go).grads, len);
    } else {
      Grid w(static_cast<Eigen::Index>(len), posteriors->cols());
      for (std::size_t t = 0; t < len; ++t)
        w.row(static_cast<Eigen::Index>(t)) = posteriors->row(static_cast<Eigen::Index>(rows[t]));
      opt.step(p, m_step_gradients(p, corpus, rows, w, go).grads, len);
    }
  }
}

}  // namespace

TrainResult train_joint(const data::Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.size() == 0) throw ConfigError("training corpus is empty");
  return train_joint(corpus, cfg, initial_params(corpus, cfg));
}

TrainResult train_joint(const data::Corpus& corpus, const TrainConfig& cfg, DmoeParams p) {
  check_training_inputs(corpus, cfg, p);
  TrainReport report;
  report.trainer = "joint";
  report.frames = corpus.size();
  report.records.push_back(record("init", 0, evaluate(p, corpus)));

  Optimizer opt(p, cfg.adam);
  DmoeParams last_good = p;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      run_epoch(p, opt, corpus, cfg, child_seed(cfg.seed, "shuffle", epoch), step, nullptr);
      const Evaluation ev = evaluate(p, corpus);
      if (!std::isfinite(ev.mean_loglik())) throw NumericError("non-finite log-likelihood");
      report.records.push_back(record("epoch", epoch, ev));
    } catch (const NumericError& e) {
      throw DivergenceError("joint training diverged in epoch " + std::to_string(epoch) + ": " +
                                e.what(),
                            std::move(last_good), std::move(report));
    }
    last_good = p;
  }
  return {std::move(p), std::move(report)};
}

TrainResult train_em(const data::Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.size() == 0) throw ConfigError("training corpus is empty");
  return train_em(corpus, cfg, initial_params(corpus, cfg));
}

TrainResult train_em(const data::Corpus& corpus, const TrainConfig& cfg, DmoeParams p) {
  check_training_inputs(corpus, cfg, p);
  TrainReport report;
  report.trainer = "em";
  report.frames = corpus.size();
  Evaluation ev = evaluate(p, corpus);
  report.records.push_back(record("init", 0, ev));

  DmoeParams last_good = p;
  std::uint64_t step = 0;
  for (std::size_t iter = 1; iter <= cfg.epochs; ++iter) {
    try {
      // E-step: posteriors with the current parameters frozen.
      const Grid posteriors = ev.posteriors;
      // M-step: a fresh optimiser trains gate and experts on their weighted
      // objectives for the configured number of inner epochs.
      Optimizer opt(p, cfg.adam);
      for (std::size_t inner = 0; inner < cfg.inner_epochs; ++inner)
        run_epoch(p, opt, corpus, cfg, child_seed(child_seed(cfg.seed, "em-shuffle", iter), "inner", inner),
                  step, &posteriors);
      ev = evaluate(p, corpus);
      if (!std::isfinite(ev.mean_loglik())) throw NumericError("non-finite log-likelihood");
      report.records.push_back(record("em-iteration", iter, ev));
    } catch (const NumericError& e) {
      throw DivergenceError("EM training diverged in iteration " + std::to_string(iter) + ": " +
                                e.what(),
                            std::move(last_good), std::move(report));
    }
    last_good = p;
  }
  return {std::move(p), std::move(report)};
}

namespace {

constexpr char kMagic[] = "DMOE1";
constexpr std::size_t kMagicLen = 5;

json describe(const nn::MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"in", l.in_dim()}, {"out", l.out_dim()}, {"activation", nn::activation_name(l.activation)}});
  return layers;
}

nn::MlpParams shape_from(const json& layers) {
  nn::MlpParams p;
  for (const auto& d : layers) {
    nn::DenseLayer l;
    const auto in = d.at("in").get<Eigen::Index>();
    const auto out = d.at("out").get<Eigen::Index>();
    if (in <= 0 || out <= 0) throw FormatError("model metadata has a non-positive layer size");
    l.weights = Matrix::Zero(out, in);
    l.bias = Vector::Zero(out);
    l.activation = nn::activation_from_name(d.at("activation").get<std::string>());
    p.layers.push_back(std::move(l));
  }
  if (p.layers.empty()) throw FormatError("model metadata has a network without layers");
  return p;
}

}  // namespace

void save_model(const DmoeParams& p, const std::string& path, const json& extra) {
  p.validate();
  std::ostringstream blocks(std::ios::binary);
  for_each_param(p, [&](double v) { io::write_le(blocks, v); });
  const std::string param_bytes = blocks.str();

  json experts = json::array();
  for (const auto& e : p.experts) experts.push_back(describe(e));
  json meta{{"format", "DMOE1"},
            {"format_version", kModelFormatVersion},
            {"num_experts", p.num_experts()},
            {"expert_input_dim", p.expert_input_dim()},
            {"gate_input_dim", p.gate_input_dim()},
            {"num_bins", p.num_bins()},
            {"shared_input", p.shared_input},
            {"features", p.features ? data::to_json(*p.features) : json(nullptr)},
            {"gate", describe(p.gate)},
            {"experts", experts},
            {"param_count", param_bytes.size() / sizeof(double)},
            {"param_hash", io::hex64(fnv1a64(param_bytes))},
            {"extra", extra}};
  const std::string meta_bytes = meta.dump();

  std::ostringstream out(std::ios::binary);
  out.write(kMagic, kMagicLen);
  io::write_le<std::uint64_t>(out, meta_bytes.size());
  out.write(meta_bytes.data(), static_cast<std::streamsize>(meta_bytes.size()));
  out.write(param_bytes.data(), static_cast<std::streamsize>(param_bytes.size()));
  io::write_file(path, out.str());
}

namespace {

struct ModelFile {
  json meta;
  std::string params;
};

ModelFile split_model_file(const std::string& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0)
    throw FormatError("'" + path + "' is not a DMoE model file (bad magic)");
  if (bytes.size() < kMagicLen + 8) throw FormatError("'" + path + "' is truncated (no header)");
  std::istringstream in(bytes.substr(kMagicLen, 8), std::ios::binary);
  const auto meta_len = io::read_le<std::uint64_t>(in);
  if (meta_len > bytes.size() - kMagicLen - 8)
    throw FormatError("'" + path + "' is truncated (metadata)");
  ModelFile f;
  try {
    f.meta = json::parse(bytes.substr(kMagicLen + 8, meta_len));
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' has corrupt metadata: " + e.what());
  }
  const int version = f.meta.value("format_version", -1);
  if (version != kModelFormatVersion)
    throw FormatError("'" + path + "' has model format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kModelFormatVersion));
  f.params = bytes.substr(kMagicLen + 8 + meta_len);
  return f;
}

}  // namespace

json read_model_metadata(const std::string& path) { return split_model_file(path).meta; }

DmoeParams load_model(const std::string& path) {
  const ModelFile f = split_model_file(path);
  DmoeParams p;
  try {
    p.gate = shape_from(f.meta.at("gate"));
    for (const auto& e : f.meta.at("experts")) p.experts.push_back(shape_from(e));
    p.shared_input = f.meta.at("shared_input").get<bool>();
    if (!f.meta.at("features").is_null()) p.features = data::feature_config_from_json(f.meta.at("features"));
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' has incomplete metadata: " + e.what());
  }
  std::size_t count = p.gate.parameter_count();
  for (const auto& e : p.experts) count += e.parameter_count();
  if (f.params.size() != count * sizeof(double))
    throw FormatError("'" + path + "' is truncated or corrupt: " + std::to_string(f.params.size()) +
                      " parameter bytes, expected " + std::to_string(count * sizeof(double)));
  if (f.meta.value("param_hash", "") != io::hex64(fnv1a64(f.params)))
    throw FormatError("'" + path + "' fails its parameter checksum");
  std::istringstream in(f.params, std::ios::binary);
  for_each_param(p, [&](double& v) { v = io::read_le<double>(in); });
  p.validate();
  return p;
}

}  // namespace dmoe
