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
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmoe/dataset.hpp"
#include "dmoe/error.hpp"
#include "dmoe/mask.hpp"
#include "dmoe/network.hpp"
#include "dmoe/rng.hpp"

namespace dmoe {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-12;

struct ModelDims {
  std::size_t expert_input = 0;
  std::size_t gate_input = 0;
  std::size_t num_bins = 0;
};

struct ModelShape {
  std::size_t num_experts = 2;
  std::size_t hidden = 500;
  std::size_t hidden_layers = 3;
  // Feed the gate the expert input instead of the MFCC stack (ablation).
  bool shared_input = false;
};

// Gate (softmax over m) plus m experts (sigmoid over num_bins).
struct DmoeParams {
  nn::MlpParams gate;
  std::vector<nn::MlpParams> experts;
  bool shared_input = false;
  std::optional<data::FeatureConfig> features;

  std::size_t num_experts() const { return experts.size(); }
  std::size_t num_bins() const { return experts.front().output_dim(); }
  std::size_t expert_input_dim() const { return experts.front().input_dim(); }
  std::size_t gate_input_dim() const { return gate.input_dim(); }
  void validate() const;
};

DmoeParams init_dmoe(const ModelDims& dims, const ModelShape& shape, std::uint64_t seed);

// ModelDims implied by a feature configuration (and shared_input).
ModelDims dims_for(const data::FeatureConfig& cfg, bool shared_input = false);

struct DmoeGrads {
  nn::MlpGrads gate;
  std::vector<nn::MlpGrads> experts;

  static DmoeGrads zeros_like(const DmoeParams& p);
  DmoeGrads& operator+=(const DmoeGrads& other);
  DmoeGrads& operator*=(double s);
  bool all_finite() const;
};

// Visits gate parameters, then each expert's, in checkpoint order.
template <typename P, typename F>
  requires requires(P& q) { q.experts; }
void for_each_param(P& p, F&& f) {
  nn::for_each_param(p.gate, f);
  for (auto& e : p.experts) nn::for_each_param(e, f);
}

// SPP decisions of expert i: sigmoid of the affine map of its last hidden
// layer, one per frequency bin.
mask::SppVector expert_spp(const DmoeParams& p, std::size_t i, std::span<const double> expert_input);

std::vector<double> gate_dist(const DmoeParams& p, std::span<const double> gate_input);

// Gate-weighted average of the expert SPPs.
mask::SppVector final_spp(const DmoeParams& p, std::span<const double> expert_input,
                          std::span<const double> gate_input);

// Options for stochastic forward passes. Network n of frame seed s uses the
// dropout seed network_seed(s, n); the gate is network 0, expert i is i + 1.
struct PassOptions {
  double dropout = 0.0;
  nn::Mode mode = nn::Mode::kInfer;
};

std::uint64_t network_seed(std::uint64_t frame_seed, std::size_t network);

struct FrameLikelihood {
  double loglik = 0.0;
  std::vector<double> posterior;       // w_i, sums to 1
  std::vector<double> gate_log_prob;   // log p(z = i | v)
  std::vector<double> expert_loglik;   // sum_k log p(b_k | x, z = i)
  nn::ForwardCache gate_cache;
  std::vector<nn::ForwardCache> expert_caches;
};

// log sum_i p(z=i|v) prod_k p(b_k|x,z=i), evaluated with log-sum-exp.
FrameLikelihood frame_log_likelihood(const DmoeParams& p, const data::FeaturePair& pair,
                                     const PassOptions& opts = {}, std::uint64_t frame_seed = 0);

// Bernoulli log-likelihood of `bits` under `probs` (clamped).
double bernoulli_loglik(std::span<const double> probs, std::span<const std::uint8_t> bits);

// Frame-level views for the batched kernels.
data::Corpus corpus_from_pairs(std::span<const data::FeaturePair> pairs);

struct GradientOptions {
  PassOptions pass;
  std::uint64_t step_seed = 0;  // frame seed of row r is child_seed(step_seed, "frame", r)
};

std::uint64_t frame_seed(std::uint64_t step_seed, std::size_t row);

struct BatchGradients {
  DmoeGrads grads;
  double loglik = 0.0;  // sum over the batch
};

// Gradient of sum_t log p(b_t | x_t, v_t) (ascent direction). Frames are
// processed in fixed-size chunks in parallel and reduced in chunk order, so
// the result does not depend on the thread count.
BatchGradients joint_gradients(const DmoeParams& p, const data::Corpus& corpus,
                               std::span<const std::size_t> rows, const GradientOptions& opts = {});
DmoeGrads joint_gradients(const DmoeParams& p, std::span<const data::FeaturePair> batch);

// Gradient of the M-step objectives with the gating posterior held fixed:
// sum_t sum_i w_ti log p(z_t=i|v_t) for the gate and
// sum_t w_ti sum_k log p(b_tk|x_t,z_t=i) for expert i. `posteriors` has one
// row per batch entry.
BatchGradients m_step_gradients(const DmoeParams& p, const data::Corpus& corpus,
                                std::span<const std::size_t> rows, const Grid& posteriors,
                                const GradientOptions& opts = {});

// Per-frame log-likelihoods and posteriors in infer mode.
struct Evaluation {
  Eigen::VectorXd loglik;  // one per frame
  Grid posteriors;         // frames x m
  Grid gate_probs;         // frames x m
  double mean_loglik() const { return loglik.size() ? loglik.mean() : 0.0; }
  double total_loglik() const { return loglik.sum(); }
};

Evaluation evaluate(const DmoeParams& p, const data::Corpus& corpus);

// Final SPP for every frame of the corpus (frames x num_bins).
Grid predict_spp(const DmoeParams& p, const Grid& expert_inputs, const Grid& gate_inputs);

struct TrainConfig {
  ModelShape shape;
  std::size_t epochs = 50;  // EM iterations for the EM trainer
  std::size_t batch_size = 128;
  double dropout = 0.2;
  std::uint64_t seed = 0;
  std::size_t inner_epochs = 3;  // EM only
  nn::AdamConfig adam;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct EpochRecord {
  std::string label;  // "init", "epoch" or "em-iteration"
  std::size_t index = 0;
  double mean_loglik = 0.0;
  double total_loglik = 0.0;
};

struct TrainReport {
  std::string trainer;
  std::size_t frames = 0;
  std::vector<EpochRecord> records;  // records[0] is the initial model

  // Fraction of consecutive record pairs whose mean log-likelihood did not
  // decrease.
  double non_decreasing_fraction() const;
  nlohmann::json to_json() const;
};

struct TrainResult {
  DmoeParams params;
  TrainReport report;
};

// Raised when the objective turns non-finite. Carries the last parameters
// whose log-likelihood was finite.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, DmoeParams last_good, TrainReport report)
      : NumericError(what), last_good_(std::move(last_good)), report_(std::move(report)) {}
  const DmoeParams& last_good() const { return last_good_; }
  const TrainReport& report() const { return report_; }

 private:
  DmoeParams last_good_;
  TrainReport report_;
};

// Minibatch Adam ascent on the mixture log-likelihood.
TrainResult train_joint(const data::Corpus& corpus, const TrainConfig& cfg);
TrainResult train_joint(const data::Corpus& corpus, const TrainConfig& cfg, DmoeParams init);

// Alternating E-step / M-step training.
TrainResult train_em(const data::Corpus& corpus, const TrainConfig& cfg);
TrainResult train_em(const data::Corpus& corpus, const TrainConfig& cfg, DmoeParams init);

// Model file: "DMOE1", u64 metadata length, JSON metadata, then float64
// parameter blocks (gate, then experts; per layer weights row-major, bias).
inline constexpr int kModelFormatVersion = 1;
void save_model(const DmoeParams& p, const std::string& path,
                const nlohmann::json& extra = nlohmann::json::object());
DmoeParams load_model(const std::string& path);
nlohmann::json read_model_metadata(const std::string& path);

namespace reference {

// Serial frame-by-frame implementations built directly on nn::forward and
// nn::backward. Kept as test oracles and benchmark baselines.
BatchGradients joint_gradients(const DmoeParams& p, std::span<const data::FeaturePair> batch,
                               const GradientOptions& opts = {});

// M-step gradients through the output-space derivatives
// w/rho - (1-w)/(1-rho) and w/p and the full activation Jacobians.
BatchGradients m_step_gradients(const DmoeParams& p, std::span<const data::FeaturePair> batch,
                                const Grid& posteriors);

}  // namespace reference

}  // namespace dmoe
