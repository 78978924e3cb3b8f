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

#include "dmoe/network.hpp"

#include <cmath>
#include <string>

#include "dmoe/error.hpp"
#include "dmoe/rng.hpp"

namespace dmoe::nn {
namespace {

void apply_activation(Activation a, const Vector& pre, Vector& out) {
  switch (a) {
    case Activation::kRelu: out = pre.cwiseMax(0.0); break;
    case Activation::kSigmoid:
      out = pre.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
      break;
    case Activation::kSoftmax: {
      const double mx = pre.maxCoeff();
      out = (pre.array() - mx).exp();
      out /= out.sum();
      break;
    }
    case Activation::kIdentity: out = pre; break;
  }
}

void apply_activation_rows(Activation a, const Matrix& pre, Matrix& out) {
  switch (a) {
    case Activation::kRelu: out = pre.cwiseMax(0.0); break;
    case Activation::kSigmoid:
      out = pre.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
      break;
    case Activation::kSoftmax:
      out.resize(pre.rows(), pre.cols());
      for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        const double mx = pre.row(r).maxCoeff();
        out.row(r) = (pre.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
      }
      break;
    case Activation::kIdentity: out = pre; break;
  }
}

// Multiplies a gradient w.r.t. a hidden activation by the activation
// derivative, turning it into a gradient w.r.t. the pre-activation.
template <typename G, typename P>
void hidden_derivative(Activation a, const P& pre, const P& post, G& grad) {
  switch (a) {
    case Activation::kRelu:
      grad = (pre.array() > 0.0).select(grad.array(), 0.0).matrix();
      break;
    case Activation::kSigmoid: {
      const P s = pre.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
      grad.array() *= s.array() * (1.0 - s.array());
      break;
    }
    case Activation::kIdentity: break;
    case Activation::kSoftmax:
      throw ConfigError("softmax is only supported as the output layer");
  }
  (void)post;
}

void check_input(const MlpParams& p, std::span<const double> input) {
  if (p.layers.empty()) throw ConfigError("network has no layers");
  if (input.size() != p.input_dim())
    throw ShapeError("network input has length " + std::to_string(input.size()) +
                     ", expected " + std::to_string(p.input_dim()));
  for (std::size_t i = 0; i < input.size(); ++i)
    if (!std::isfinite(input[i]))
      throw NumericError("non-finite network input at index " + std::to_string(i));
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "softmax") return Activation::kSoftmax;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows() == 0 || layer.weights.cols() == 0)
      throw ShapeError("layer " + std::to_string(l) + " has a zero dimension");
    if (layer.bias.size() != layer.weights.rows())
      throw ShapeError("layer " + std::to_string(l) + " bias length mismatch");
    if (l > 0 && layer.in_dim() != layers[l - 1].out_dim())
      throw ShapeError("layer " + std::to_string(l) + " input does not chain");
    if (layer.activation == Activation::kSoftmax && l + 1 != layers.size())
      throw ConfigError("softmax is only supported as the output layer");
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw NumericError("layer " + std::to_string(l) + " has non-finite parameters");
  }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  g.layers.reserve(p.layers.size());
  for (const auto& l : p.layers)
    g.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()),
                        Vector::Zero(l.bias.size())});
  return g;
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("gradient sets differ in depth");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights += other.layers[l].weights;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& l : layers) {
    l.weights *= s;
    l.bias *= s;
  }
  return *this;
}

bool MlpGrads::all_finite() const {
  for (const auto& l : layers)
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

Vector dropout_scale(std::uint64_t seed, std::size_t layer, std::size_t size, double rate) {
  check_rate(rate);
  Rng rng(child_seed(seed, "dropout", layer));
  const double keep = 1.0 / (1.0 - rate);
  Vector s(static_cast<Eigen::Index>(size));
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform() < rate ? 0.0 : keep;
  return s;
}

ForwardResult forward(const MlpParams& p, std::span<const double> input, double dropout_rate,
                      Mode mode, std::uint64_t rng_seed) {
  check_input(p, input);
  check_rate(dropout_rate);
  const bool drop = mode == Mode::kTrain && dropout_rate > 0.0;
  const std::size_t depth = p.layers.size();

  ForwardResult r;
  auto& c = r.cache;
  c.input = Eigen::Map<const Vector>(input.data(), static_cast<Eigen::Index>(input.size()));
  c.pre.resize(depth);
  c.post.resize(depth);
  if (drop) c.dropout_scale.resize(depth - 1);

  const Vector* x = &c.input;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = p.layers[l];
    c.pre[l].noalias() = layer.weights * *x;
    c.pre[l] += layer.bias;
    apply_activation(layer.activation, c.pre[l], c.post[l]);
    if (drop && l + 1 < depth) {
      c.dropout_scale[l] = dropout_scale(rng_seed, l, layer.out_dim(), dropout_rate);
      c.post[l].array() *= c.dropout_scale[l].array();
    }
    x = &c.post[l];
  }
  r.output = c.post.back();
  return r;
}

MlpGrads backward_from_logits(const MlpParams& p, const ForwardCache& cache,
                              const Vector& logit_grad) {
  const std::size_t depth = p.layers.size();
  if (cache.pre.size() != depth || cache.post.size() != depth)
    throw ShapeError("forward cache depth does not match the network");
  if (logit_grad.size() != static_cast<Eigen::Index>(p.output_dim()))
    throw ShapeError("output gradient length does not match the network output");

  MlpGrads g = MlpGrads::zeros_like(p);
  Vector delta = logit_grad;
  for (std::size_t l = depth; l-- > 0;) {
    const Vector& below = l == 0 ? cache.input : cache.post[l - 1];
    g.layers[l].weights.noalias() = delta * below.transpose();
    g.layers[l].bias = delta;
    if (l == 0) break;
    Vector up = p.layers[l].weights.transpose() * delta;
    if (!cache.dropout_scale.empty()) up.array() *= cache.dropout_scale[l - 1].array();
    hidden_derivative(p.layers[l - 1].activation, cache.pre[l - 1], cache.post[l - 1], up);
    delta = std::move(up);
  }
  return g;
}

MlpGrads backward(const MlpParams& p, const ForwardCache& cache,
                  std::span<const double> output_grad) {
  if (output_grad.size() != p.output_dim())
    throw ShapeError("output gradient length does not match the network output");
  const Eigen::Map<const Vector> g(output_grad.data(), static_cast<Eigen::Index>(output_grad.size()));
  const Vector& y = cache.post.back();
  Vector logit;
  switch (p.layers.back().activation) {
    case Activation::kSoftmax: logit = y.cwiseProduct((g.array() - y.dot(g)).matrix()); break;
    case Activation::kSigmoid: logit = g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())); break;
    case Activation::kRelu:
      logit = (cache.pre.back().array() > 0.0).select(g.array(), 0.0).matrix();
      break;
    case Activation::kIdentity: logit = g; break;
  }
  return backward_from_logits(p, cache, logit);
}

BatchCache forward_batch(const MlpParams& p, const Matrix& inputs, double dropout_rate,
                         Mode mode, std::span<const std::uint64_t> seeds) {
  if (p.layers.empty()) throw ConfigError("network has no layers");
  if (inputs.cols() != static_cast<Eigen::Index>(p.input_dim()))
    throw ShapeError("batch input width does not match the network");
  if (!inputs.allFinite()) throw NumericError("non-finite network input in batch");
  check_rate(dropout_rate);
  const bool drop = mode == Mode::kTrain && dropout_rate > 0.0;
  if (drop && seeds.size() != static_cast<std::size_t>(inputs.rows()))
    throw ShapeError("need one dropout seed per batch row");
  const std::size_t depth = p.layers.size();
  const Eigen::Index n = inputs.rows();

  BatchCache c;
  c.input = inputs;
  c.pre.resize(depth);
  c.post.resize(depth);
  if (drop) c.dropout_scale.resize(depth - 1);
  const Matrix* x = &c.input;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = p.layers[l];
    c.pre[l].noalias() = *x * layer.weights.transpose();
    c.pre[l].rowwise() += layer.bias.transpose();
    apply_activation_rows(layer.activation, c.pre[l], c.post[l]);
    if (drop && l + 1 < depth) {
      auto& s = c.dropout_scale[l];
      s.resize(n, static_cast<Eigen::Index>(layer.out_dim()));
      for (Eigen::Index t = 0; t < n; ++t)
        s.row(t) = dropout_scale(seeds[static_cast<std::size_t>(t)], l, layer.out_dim(),
                                 dropout_rate).transpose();
      c.post[l].array() *= s.array();
    }
    x = &c.post[l];
  }
  return c;
}

void accumulate_backward_batch(const MlpParams& p, const BatchCache& cache,
                               const Matrix& logit_grads, MlpGrads& into) {
  const std::size_t depth = p.layers.size();
  if (logit_grads.rows() != cache.input.rows() ||
      logit_grads.cols() != static_cast<Eigen::Index>(p.output_dim()))
    throw ShapeError("batch logit gradient shape mismatch");
  Matrix delta = logit_grads;
  for (std::size_t l = depth; l-- > 0;) {
    const Matrix& below = l == 0 ? cache.input : cache.post[l - 1];
    into.layers[l].weights.noalias() += delta.transpose() * below;
    into.layers[l].bias += delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix up = delta * p.layers[l].weights;
    if (!cache.dropout_scale.empty()) up.array() *= cache.dropout_scale[l - 1].array();
    hidden_derivative(p.layers[l - 1].activation, cache.pre[l - 1], cache.post[l - 1], up);
    delta = std::move(up);
  }
}

AdamState AdamState::init(const MlpParams& p, const AdamConfig& cfg) {
  AdamState st;
  st.config = cfg;
  st.first_moment = MlpGrads::zeros_like(p);
  st.second_moment = MlpGrads::zeros_like(p);
  return st;
}

void adam_step(MlpParams& p, const MlpGrads& grads, AdamState& st) {
  if (grads.layers.size() != p.layers.size() || st.first_moment.layers.size() != p.layers.size())
    throw ShapeError("adam_step: gradient / state depth does not match the network");
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    if (grads.layers[l].weights.rows() != p.layers[l].weights.rows() ||
        grads.layers[l].weights.cols() != p.layers[l].weights.cols() ||
        grads.layers[l].bias.size() != p.layers[l].bias.size())
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");

  const auto& hp = st.config;
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m.array() = hp.beta1 * m.array() + (1.0 - hp.beta1) * g.array();
    v.array() = hp.beta2 * v.array() + (1.0 - hp.beta2) * g.array().square();
    param.array() -= hp.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hp.eps);
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    update(p.layers[l].weights, grads.layers[l].weights, st.first_moment.layers[l].weights,
           st.second_moment.layers[l].weights);
    update(p.layers[l].bias, grads.layers[l].bias, st.first_moment.layers[l].bias,
           st.second_moment.layers[l].bias);
  }
}

MlpParams init_params(std::span<const std::size_t> layer_dims,
                      std::span<const Activation> activations, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw ConfigError("need at least one layer (two dimensions)");
  if (activations.size() + 1 != layer_dims.size())
    throw ConfigError("need one activation per layer");
  for (std::size_t d : layer_dims)
    if (d == 0) throw ConfigError("layer dimensions must be positive");

  MlpParams p;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
      layer.weights.data()[i] = rng.uniform(-limit, limit);
    layer.bias = Vector::Zero(out);
    layer.activation = activations[l];
    p.layers.push_back(std::move(layer));
  }
  p.validate();
  return p;
}

}  // namespace dmoe::nn
