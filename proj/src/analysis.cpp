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

#include "dmoe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dmoe/enhance.hpp"
#include "dmoe/error.hpp"
#include "dmoe/eval.hpp"

namespace dmoe::analysis {

using nlohmann::json;

std::size_t GatingTable::majority_expert(std::size_t r) const {
  Eigen::Index best = 0;
  hard_fraction.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

double GatingTable::majority_fraction(std::size_t r) const {
  return hard_fraction.row(static_cast<Eigen::Index>(r)).maxCoeff();
}

json GatingTable::to_json() const {
  json rows = json::array();
  for (std::size_t r = 0; r < regimes.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    rows.push_back({{"regime", regimes[r]},
                    {"frames", frames[r]},
                    {"mean_prob", std::vector<double>(mean_prob.row(ri).begin(), mean_prob.row(ri).end())},
                    {"hard_fraction",
                     std::vector<double>(hard_fraction.row(ri).begin(), hard_fraction.row(ri).end())},
                    {"majority_expert", majority_expert(r)},
                    {"majority_fraction", majority_fraction(r)}});
  }
  return {{"regimes", rows},
          {"routing_entropy", routing_entropy},
          {"mean_frame_entropy", mean_frame_entropy}};
}

std::string GatingTable::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "regime,frames,expert,mean_prob,hard_fraction\n";
  for (std::size_t r = 0; r < regimes.size(); ++r)
    for (Eigen::Index i = 0; i < mean_prob.cols(); ++i)
      out << regimes[r] << ',' << frames[r] << ',' << i << ','
          << mean_prob(static_cast<Eigen::Index>(r), i) << ','
          << hard_fraction(static_cast<Eigen::Index>(r), i) << '\n';
  return out.str();
}

GatingTable gating_stats(const DmoeParams& p, const data::Corpus& corpus) {
  if (corpus.size() == 0) throw ConfigError("gating_stats: empty corpus");
  if (!corpus.has_regime_tags())
    throw ConfigError("gating_stats: corpus frames carry no regime tags");
  const Grid probs = evaluate(p, corpus).gate_probs;
  const auto m = probs.cols();

  std::map<int, std::size_t> index;
  for (int t : corpus.regime_tags) index.emplace(t, 0);
  GatingTable g;
  for (auto& [tag, idx] : index) {
    idx = g.regimes.size();
    g.regimes.push_back(tag);
  }
  const auto nr = static_cast<Eigen::Index>(g.regimes.size());
  g.frames.assign(g.regimes.size(), 0);
  g.mean_prob = Grid::Zero(nr, m);
  g.hard_fraction = Grid::Zero(nr, m);

  double frame_entropy = 0.0;
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    const std::size_t r = index.at(corpus.regime_tags[static_cast<std::size_t>(t)]);
    const auto ri = static_cast<Eigen::Index>(r);
    Eigen::Index best = 0;
    probs.row(t).maxCoeff(&best);
    g.mean_prob.row(ri) += probs.row(t);
    g.hard_fraction(ri, best) += 1.0;
    ++g.frames[r];
    for (Eigen::Index i = 0; i < m; ++i)
      if (probs(t, i) > 0.0) frame_entropy -= probs(t, i) * std::log(probs(t, i));
  }
  for (Eigen::Index r = 0; r < nr; ++r) {
    const double n = static_cast<double>(g.frames[static_cast<std::size_t>(r)]);
    g.mean_prob.row(r) /= n;
    g.hard_fraction.row(r) /= n;
  }
  g.mean_frame_entropy = frame_entropy / static_cast<double>(probs.rows());
  const Eigen::RowVectorXd usage = probs.colwise().mean();
  for (Eigen::Index i = 0; i < m; ++i)
    if (usage(i) > 0.0) g.routing_entropy -= usage(i) * std::log(usage(i));
  return g;
}

Grid expert_probe(const DmoeParams& p, const data::Corpus& corpus) {
  if (corpus.size() == 0) throw ConfigError("expert_probe: empty corpus");
  const std::vector<double> ones(p.expert_input_dim(), 1.0);
  std::vector<mask::SppVector> templates;
  for (std::size_t i = 0; i < p.num_experts(); ++i) templates.push_back(expert_spp(p, i, ones));

  const Grid probs = evaluate(p, corpus).gate_probs;
  Grid out = Grid::Zero(probs.rows(), static_cast<Eigen::Index>(p.num_bins()));
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const Eigen::Map<const Eigen::RowVectorXd> tpl(templates[i].probs.data(),
                                                   static_cast<Eigen::Index>(p.num_bins()));
    out += probs.col(static_cast<Eigen::Index>(i)) * tpl;
  }
  return out;
}

Eigen::VectorXd low_band_share(const Grid& rows, const data::FeatureConfig& cfg, double split_hz) {
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.frame_len);
  const auto split = static_cast<Eigen::Index>(std::ceil(split_hz / bin_hz));
  Eigen::VectorXd share(rows.rows());
  for (Eigen::Index t = 0; t < rows.rows(); ++t) {
    const double total = rows.row(t).squaredNorm();
    const double low = rows.row(t).head(std::min(split, rows.cols())).squaredNorm();
    share(t) = total > 0.0 ? low / total : 0.0;
  }
  return share;
}

std::vector<SweepRow> expert_sweep(const data::Corpus& train, const data::Corpus& eval,
                                   std::span<const std::size_t> m_list, const TrainConfig& cfg,
                                   const HeldOut* heldout, bool parallel) {
  if (m_list.empty()) throw ConfigError("expert_sweep: empty expert-count list");
  std::vector<SweepRow> rows(m_list.size());
  std::vector<std::string> errors(m_list.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(m_list.size()); ++k) {
    const auto idx = static_cast<std::size_t>(k);
    try {
      TrainConfig c = cfg;
      c.shape.num_experts = m_list[idx];
      TrainResult tr = train_joint(train, c);
      SweepRow& row = rows[idx];
      row.num_experts = m_list[idx];
      row.train_mean_loglik = tr.report.records.back().mean_loglik;
      const Grid spp = predict_spp(tr.params, eval.expert_inputs, eval.gate_inputs);
      const auto ms = eval::mask_metrics(spp, eval.labels);
      row.mask_accuracy = ms.accuracy;
      row.mask_auc = ms.auc;
      if (heldout != nullptr && tr.params.features) {
        double acc = 0.0;
        for (std::size_t u = 0; u < heldout->cleans.size(); ++u) {
          data::MixSpec s = heldout->spec;
          s.seed = child_seed(heldout->spec.seed, "mix", u);
          acc += eval::evaluate_mixture(tr.params, heldout->cleans[u], heldout->noise, s,
                                        *tr.params.features)
                     .ssnr_enhanced;
        }
        row.ssnr_db = acc / static_cast<double>(heldout->cleans.size());
        row.has_ssnr = !heldout->cleans.empty();
      }
      row.report = std::move(tr.report);
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty())
      throw Error("sweep m=" + std::to_string(m_list[k]) + ": " + errors[k]);
  return rows;
}

json sweep_to_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"num_experts", r.num_experts},
                   {"mask_accuracy", r.mask_accuracy},
                   {"mask_auc", r.mask_auc},
                   {"train_mean_loglik", r.train_mean_loglik},
                   {"ssnr_db", r.has_ssnr ? json(r.ssnr_db) : json(nullptr)},
                   {"train_report", r.report.to_json()}});
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "num_experts,mask_accuracy,mask_auc,train_mean_loglik,ssnr_db\n";
  for (const auto& r : rows) {
    out << r.num_experts << ',' << r.mask_accuracy << ',' << r.mask_auc << ',' << r.train_mean_loglik
        << ',';
    if (r.has_ssnr) out << r.ssnr_db;
    out << '\n';
  }
  return out.str();
}

}  // namespace dmoe::analysis
