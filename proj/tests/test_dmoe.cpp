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

#include <cmath>
#include <filesystem>
#include <numeric>

#include <omp.h>

#include "dmoe/binary_io.hpp"
#include "dmoe/error.hpp"
#include "dmoe/mixture.hpp"
#include "dmoe/rng.hpp"
#include "oracles.hpp"

using namespace dmoe;

namespace {

DmoeParams small_model(std::size_t m, std::uint64_t seed, std::size_t layers = 1) {
  DmoeParams p = init_dmoe(ModelDims{10, 6, 5}, ModelShape{m, 8, layers, false}, seed);
  Rng rng(seed + 7);
  for_each_param(p, [&](double& v) { v += 0.2 * rng.normal(); });
  return p;
}

std::vector<data::FeaturePair> small_batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<data::FeaturePair> b;
  for (std::size_t t = 0; t < n; ++t) b.push_back(oracle::random_pair(10, 6, 5, rng));
  return b;
}

std::vector<double> flatten(const DmoeGrads& g) {
  std::vector<double> v;
  for_each_param(g, [&](double x) { v.push_back(x); });
  return v;
}

double batch_loglik(const DmoeParams& p, const std::vector<data::FeaturePair>& b) {
  double s = 0.0;
  for (const auto& f : b) s += frame_log_likelihood(p, f).loglik;
  return s;
}

bool flatten_params_equal(const DmoeParams& a, const DmoeParams& b) {
  std::vector<double> x, y;
  for_each_param(a, [&](double v) { x.push_back(v); });
  for_each_param(b, [&](double v) { y.push_back(v); });
  return x == y;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dmoe_test_" + name)).string();
}

}  // namespace

TEST_CASE("expert_spp end points") {
  DmoeParams p = small_model(2, 1);
  auto& head = p.experts[1].layers.back();
  head.weights.setZero();
  head.bias.setZero();
  const auto b = small_batch(1, 2);
  for (double r : expert_spp(p, 1, b[0].expert_input).probs) CHECK(r == 0.5);
  head.bias(3) = 30.0;
  CHECK(expert_spp(p, 1, b[0].expert_input).probs[3] > 1.0 - 1e-9);
  const auto fr = nn::forward(p.experts[0], b[0].expert_input, 0.0, nn::Mode::kInfer, 0);
  const auto s = expert_spp(p, 0, b[0].expert_input);
  for (std::size_t k = 0; k < 5; ++k) CHECK(s.probs[k] == fr.output(static_cast<Eigen::Index>(k)));
  CHECK_THROWS_AS(expert_spp(p, 2, b[0].expert_input), ConfigError);
}

TEST_CASE("gate distribution") {
  const auto b = small_batch(3, 3);
  DmoeParams one = small_model(1, 3);
  for (const auto& f : b) CHECK(gate_dist(one, f.gate_input) == std::vector<double>{1.0});
  DmoeParams p = small_model(2, 4);
  auto& head = p.gate.layers.back();
  head.weights.setZero();
  head.bias << std::log(3.0), 0.0;
  const auto g = gate_dist(p, b[0].gate_input);
  CHECK(std::abs(g[0] - 0.75) < 1e-12);
  CHECK(std::abs(g[1] - 0.25) < 1e-12);
  head.bias << 1.0, 1.0;
  CHECK(gate_dist(p, b[0].gate_input) == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(gate_dist(p, std::vector<double>(4, 0.0)), ShapeError);
}

TEST_CASE("final_spp is the gate-weighted average") {
  DmoeParams p = small_model(2, 5);
  const auto b = small_batch(20, 6);
  for (const auto& f : b) {
    const auto g = gate_dist(p, f.gate_input);
    const auto r0 = expert_spp(p, 0, f.expert_input), r1 = expert_spp(p, 1, f.expert_input);
    const auto r = final_spp(p, f.expert_input, f.gate_input);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(std::abs(r.probs[k] - (g[0] * r0.probs[k] + g[1] * r1.probs[k])) < 1e-15);
      CHECK(r.probs[k] >= std::min(r0.probs[k], r1.probs[k]) - 1e-15);
      CHECK(r.probs[k] <= std::max(r0.probs[k], r1.probs[k]) + 1e-15);
    }
  }
  auto& gh = p.gate.layers.back();
  gh.weights.setZero();
  gh.bias << 0.0, 0.0;
  for (int e = 0; e < 2; ++e) {
    auto& h = p.experts[static_cast<std::size_t>(e)].layers.back();
    h.weights.setZero();
    h.bias.setConstant(std::log(e == 0 ? 0.25 : 4.0));  // sigmoid -> 0.2, 0.8
  }
  for (double r : final_spp(p, b[0].expert_input, b[0].gate_input).probs) CHECK(std::abs(r - 0.5) < 1e-15);
  gh.bias << 800.0, 0.0;
  const auto only = final_spp(p, b[0].expert_input, b[0].gate_input);
  for (double r : only.probs) CHECK(r == expert_spp(p, 0, b[0].expert_input).probs[0]);
}

TEST_CASE("log-sum-exp likelihood matches direct summation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DmoeParams p = small_model(seed % 3 + 1, 100 + seed);
    for (const auto& f : small_batch(4, 200 + seed)) {
      const auto fl = frame_log_likelihood(p, f);
      CHECK(std::abs(fl.loglik - oracle::direct_loglik(p, f)) < 1e-10);
      CHECK(std::abs(std::accumulate(fl.posterior.begin(), fl.posterior.end(), 0.0) - 1.0) < 1e-12);
      for (double w : fl.posterior) CHECK(w >= 0.0);
    }
  }
}

TEST_CASE("equal expert likelihoods give the gate as posterior") {
  DmoeParams p = small_model(3, 8);
  p.experts[1] = p.experts[0];
  p.experts[2] = p.experts[0];
  for (const auto& f : small_batch(5, 9)) {
    const auto fl = frame_log_likelihood(p, f);
    const auto g = gate_dist(p, f.gate_input);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(fl.posterior[i] - g[i]) < 1e-14);
  }
}

TEST_CASE("joint gradients match finite differences") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    DmoeParams p = small_model(2, seed);
    const auto b = small_batch(4, seed + 50);
    const auto analytic = flatten(joint_gradients(p, b));
    std::vector<double*> params;
    for_each_param(p, [&](double& v) { params.push_back(&v); });
    REQUIRE(params.size() == analytic.size());
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = *params[i];
      *params[i] = keep + h;
      const double up = batch_loglik(p, b);
      *params[i] = keep - h;
      const double down = batch_loglik(p, b);
      *params[i] = keep;
      worst = std::max(worst, oracle::rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("batched kernel matches the serial reference") {
  for (std::size_t m : {1u, 2u, 3u}) {
    const DmoeParams p = small_model(m, 20 + m, 2);
    const auto b = small_batch(150, 30 + m);
    GradientOptions go;
    go.pass = {0.3, nn::Mode::kTrain};
    go.step_seed = 77;
    const auto ref = reference::joint_gradients(p, b, go);
    const data::Corpus c = corpus_from_pairs(b);
    std::vector<std::size_t> rows(b.size());
    std::iota(rows.begin(), rows.end(), 0);
    const auto fast = joint_gradients(p, c, rows, go);
    CHECK(std::abs(fast.loglik - ref.loglik) < 1e-9);
    const auto a = flatten(ref.grads), f = flatten(fast.grads);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - f[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("M-step gradients at the E-step posterior equal the joint gradients") {
  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    const DmoeParams p = small_model(seed % 2 + 2, seed, 2);
    const auto b = small_batch(8, seed + 1);
    Grid w(8, static_cast<Eigen::Index>(p.num_experts()));
    for (std::size_t t = 0; t < 8; ++t) {
      const auto fl = frame_log_likelihood(p, b[t]);
      for (std::size_t i = 0; i < p.num_experts(); ++i)
        w(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = fl.posterior[i];
    }
    const auto em = flatten(reference::m_step_gradients(p, b, w).grads);
    const auto joint = flatten(reference::joint_gradients(p, b).grads);
    double worst = 0.0;
    for (std::size_t i = 0; i < em.size(); ++i) worst = std::max(worst, std::abs(em[i] - joint[i]));
    CHECK(worst < 1e-10);

    const data::Corpus c = corpus_from_pairs(b);
    std::vector<std::size_t> rows(8);
    std::iota(rows.begin(), rows.end(), 0);
    const auto fast = flatten(m_step_gradients(p, c, rows, w).grads);
    worst = 0.0;
    for (std::size_t i = 0; i < em.size(); ++i) worst = std::max(worst, std::abs(em[i] - fast[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("gradients are additive over the batch") {
  const DmoeParams p = small_model(2, 50);
  const auto one = small_batch(1, 51);
  const std::vector<data::FeaturePair> two{one[0], one[0]};
  const auto r1 = flatten(reference::joint_gradients(p, one).grads);
  const auto r2 = flatten(reference::joint_gradients(p, two).grads);
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r2[i] == 2.0 * r1[i]);
  // The batched kernel sums rows inside fused GEMMs.
  const auto g1 = flatten(joint_gradients(p, one)), g2 = flatten(joint_gradients(p, two));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g2[i] - 2.0 * g1[i]) <= 1e-14 * std::abs(g1[i]));
}

TEST_CASE("single expert reduces to the plain network") {
  const DmoeParams p = small_model(1, 60, 2);
  const auto b = small_batch(6, 61);
  const auto g = joint_gradients(p, b);
  for (const auto& f : b) {
    const auto fr = nn::forward(p.experts[0], f.expert_input, 0.0, nn::Mode::kInfer, 0);
    double ll = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      const double r = fr.output(static_cast<Eigen::Index>(k));
      ll += f.label.bits[k] ? std::log(r) : std::log(1.0 - r);
    }
    const auto fl = frame_log_likelihood(p, f);
    CHECK(std::abs(fl.loglik - ll) < 1e-12);
    CHECK(fl.posterior == std::vector<double>{1.0});
    const auto s = final_spp(p, f.expert_input, f.gate_input);
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(s.probs[k] - fr.output(static_cast<Eigen::Index>(k))) < 1e-12);
  }
  nn::MlpGrads plain = nn::MlpGrads::zeros_like(p.experts[0]);
  for (const auto& f : b) {
    const auto fr = nn::forward(p.experts[0], f.expert_input, 0.0, nn::Mode::kInfer, 0);
    std::vector<double> og(5);
    for (std::size_t k = 0; k < 5; ++k) {
      const double r = fr.output(static_cast<Eigen::Index>(k));
      og[k] = f.label.bits[k] ? 1.0 / r : -1.0 / (1.0 - r);
    }
    plain += nn::backward(p.experts[0], fr.cache, og);
  }
  for (std::size_t l = 0; l < plain.layers.size(); ++l) {
    CHECK((plain.layers[l].weights - g.experts[0].layers[l].weights).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((plain.layers[l].bias - g.experts[0].layers[l].bias).cwiseAbs().maxCoeff() < 1e-12);
  }
  nn::for_each_param(g.gate, [](double v) { CHECK(v == 0.0); });
}

TEST_CASE("evaluation agrees with per-frame likelihoods") {
  const DmoeParams p = small_model(2, 70);
  const auto b = small_batch(10, 71);
  const auto ev = evaluate(p, corpus_from_pairs(b));
  for (std::size_t t = 0; t < b.size(); ++t) {
    const auto fl = frame_log_likelihood(p, b[t]);
    CHECK(std::abs(ev.loglik(static_cast<Eigen::Index>(t)) - fl.loglik) < 1e-12);
    CHECK(std::abs(ev.posteriors.row(static_cast<Eigen::Index>(t)).sum() - 1.0) < 1e-9);
  }
  const data::Corpus c = corpus_from_pairs(b);
  const Grid spp = predict_spp(p, c.expert_inputs, c.gate_inputs);
  const auto s = final_spp(p, b[3].expert_input, b[3].gate_input);
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(spp(3, static_cast<Eigen::Index>(k)) - s.probs[k]) < 1e-14);
}

TEST_CASE("gradient results do not depend on the thread count") {
  const DmoeParams p = small_model(2, 80, 2);
  const auto b = small_batch(300, 81);
  const data::Corpus c = corpus_from_pairs(b);
  std::vector<std::size_t> rows(b.size());
  std::iota(rows.begin(), rows.end(), 0);
  GradientOptions go;
  go.pass = {0.2, nn::Mode::kTrain};
  go.step_seed = 5;
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = flatten(joint_gradients(p, c, rows, go).grads);
  omp_set_num_threads(4);
  const auto four = flatten(joint_gradients(p, c, rows, go).grads);
  omp_set_num_threads(before);
  CHECK(one == four);
}

namespace {

data::Corpus separable_corpus(std::size_t n, std::uint64_t seed) {
  // Two clusters with opposite label patterns.
  Rng rng(seed);
  std::vector<data::FeaturePair> pairs;
  for (std::size_t t = 0; t < n; ++t) {
    data::FeaturePair f;
    const int cls = static_cast<int>(t % 2);
    for (int i = 0; i < 10; ++i) f.expert_input.push_back((cls ? 1.0 : -1.0) + 0.3 * rng.normal());
    for (int i = 0; i < 6; ++i) f.gate_input.push_back((cls ? 1.0 : -1.0) + 0.3 * rng.normal());
    for (int k = 0; k < 5; ++k) f.label.bits.push_back((k % 2 == cls) ? 1 : 0);
    f.regime_tag = cls;
    pairs.push_back(f);
  }
  return corpus_from_pairs(pairs);
}

}  // namespace

TEST_CASE("joint training improves the likelihood") {
  const data::Corpus c = separable_corpus(200, 90);
  TrainConfig cfg;
  cfg.shape = {2, 8, 1, false};
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.seed = 3;
  const auto r = train_joint(c, cfg);
  CHECK(r.report.records.size() == 21);
  CHECK(r.report.records.back().mean_loglik > r.report.records.front().mean_loglik);
  CHECK(r.report.non_decreasing_fraction() >= 0.8);
  const auto again = train_joint(c, cfg);
  CHECK(again.report.to_json().dump() == r.report.to_json().dump());
  CHECK(flatten_params_equal(again.params, r.params));
}

TEST_CASE("EM training") {
  const data::Corpus c = separable_corpus(200, 91);
  TrainConfig cfg;
  cfg.shape = {2, 8, 1, false};
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.seed = 4;
  const auto r = train_em(c, cfg);
  CHECK(r.report.trainer == "em");
  CHECK(r.report.records.size() == 9);
  CHECK(r.report.records[1].label == "em-iteration");
  CHECK(r.report.records.back().mean_loglik > r.report.records.front().mean_loglik);

  cfg.inner_epochs = 0;
  const DmoeParams init = init_dmoe(ModelDims{10, 6, 5}, cfg.shape, 9);
  const auto frozen = train_em(c, cfg, init);
  CHECK(flatten_params_equal(frozen.params, init));
  for (const auto& rec : frozen.report.records) CHECK(rec.mean_loglik == frozen.report.records[0].mean_loglik);
}

TEST_CASE("training rejects bad configuration") {
  const data::Corpus c = separable_corpus(20, 92);
  TrainConfig cfg;
  cfg.shape = {2, 8, 1, false};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train_joint(c, cfg), ConfigError);
  cfg.batch_size = 4;
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(train_joint(c, cfg), ConfigError);
  cfg.dropout = 0.0;
  cfg.adam.lr = 1e12;
  cfg.epochs = 3;
  // A huge step sends the gate into saturation; training must still either
  // finish or report divergence with a usable checkpoint.
  try {
    train_joint(c, cfg);
  } catch (const DivergenceError& e) {
    CHECK_NOTHROW(e.last_good().validate());
  }
}

TEST_CASE("model files round trip") {
  DmoeParams p = small_model(2, 100, 2);
  p.features = data::FeatureConfig{};
  p.features->context = 0;
  const std::string path = temp_path("model.dmoe");
  save_model(p, path, {{"note", "unit"}});
  const DmoeParams q = load_model(path);
  CHECK(flatten_params_equal(p, q));
  CHECK(q.features.has_value());
  CHECK(!data::first_mismatch(*q.features, *p.features));
  const auto meta = read_model_metadata(path);
  CHECK(meta.at("num_experts") == 2);
  CHECK(meta.at("extra").at("note") == "unit");

  std::string bytes = io::read_file(path);
  io::write_file(path, bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(load_model(path), FormatError);
  io::write_file(path, "XMOE1" + bytes.substr(5));
  CHECK_THROWS_AS(load_model(path), FormatError);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  io::write_file(path, flipped);
  CHECK_THROWS_AS(load_model(path), FormatError);

  auto meta_v2 = meta;
  meta_v2["format_version"] = 2;
  const std::string text = meta_v2.dump();
  std::string v2 = "DMOE1";
  for (int i = 0; i < 8; ++i) v2.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xff));
  const std::size_t old_len = meta.dump().size();
  (void)old_len;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[5 + i])) << (8 * i);
  v2 += text + bytes.substr(13 + stored);
  io::write_file(path, v2);
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("version"), FormatError);
}
