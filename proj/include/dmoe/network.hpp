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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dmoe::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kSigmoid, kSoftmax, kIdentity };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const;

  // Throws ShapeError when adjacent layers do not chain, NumericError on
  // non-finite parameters.
  void validate() const;
};

// Gradient set with the same shapes as an MlpParams.
struct LayerGrad {
  Matrix weights;
  Vector bias;
};

struct MlpGrads {
  std::vector<LayerGrad> layers;

  static MlpGrads zeros_like(const MlpParams& p);
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
  bool all_finite() const;
};

enum class Mode { kTrain, kInfer };

struct ForwardCache {
  Vector input;
  std::vector<Vector> pre;            // per layer, before activation
  std::vector<Vector> post;           // per layer, after activation and dropout
  std::vector<Vector> dropout_scale;  // per hidden layer; empty when no dropout

  const Vector& output() const { return post.back(); }
  // Value of the last hidden layer (the network input for a single layer).
  const Vector& final_hidden() const { return post.size() > 1 ? post[post.size() - 2] : input; }
};

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};

// Inverted-dropout multipliers (0 or 1/(1-rate)) for hidden layer `layer`.
// Deterministic in (seed, layer).
Vector dropout_scale(std::uint64_t seed, std::size_t layer, std::size_t size, double rate);

// Affine + activation chain. In train mode with rate > 0 the hidden
// activations are multiplied by dropout_scale(rng_seed, l, ...); infer mode
// never drops or rescales.
ForwardResult forward(const MlpParams& p, std::span<const double> input, double dropout_rate,
                      Mode mode, std::uint64_t rng_seed);

// Gradients of a scalar objective J given dJ/d(output).
MlpGrads backward(const MlpParams& p, const ForwardCache& cache,
                  std::span<const double> output_grad);

// Same, but starting from dJ/d(pre-activation of the last layer). Sigmoid and
// softmax heads paired with log-likelihood objectives have simple logit
// gradients, which avoids dividing by saturated probabilities.
MlpGrads backward_from_logits(const MlpParams& p, const ForwardCache& cache,
                              const Vector& logit_grad);

// Batched forward pass over the rows of `inputs`. Row t uses dropout seed
// seeds[t] and produces the same values as forward() on that row.
struct BatchCache {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  std::vector<Matrix> dropout_scale;  // per hidden layer; empty when no dropout

  const Matrix& output() const { return post.back(); }
};

BatchCache forward_batch(const MlpParams& p, const Matrix& inputs, double dropout_rate,
                         Mode mode, std::span<const std::uint64_t> seeds);

// Adds the gradients implied by per-row logit gradients to `into`.
void accumulate_backward_batch(const MlpParams& p, const BatchCache& cache,
                               const Matrix& logit_grads, MlpGrads& into);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  MlpGrads first_moment;
  MlpGrads second_moment;
  std::uint64_t step = 0;

  static AdamState init(const MlpParams& p, const AdamConfig& cfg = {});
};

// One bias-corrected Adam update that decreases the objective whose gradient
// is `grads`. Throws NumericError (parameters untouched) on non-finite
// gradients.
void adam_step(MlpParams& p, const MlpGrads& grads, AdamState& st);

// Glorot-uniform weights, zero biases.
MlpParams init_params(std::span<const std::size_t> layer_dims,
                      std::span<const Activation> activations, std::uint64_t seed);

// Visits every parameter (all weights, then the bias, layer by layer).
template <typename Params, typename F>
void for_each_param(Params& p, F&& f) {
  for (auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) f(layer.weights.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) f(layer.bias.data()[i]);
  }
}

}  // namespace dmoe::nn
