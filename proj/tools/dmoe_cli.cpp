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

// Command-line front end: make-data, train, enhance, eval, analyze.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmoe/analysis.hpp"
#include "dmoe/binary_io.hpp"
#include "dmoe/dataset.hpp"
#include "dmoe/enhance.hpp"
#include "dmoe/error.hpp"
#include "dmoe/eval.hpp"
#include "dmoe/mixture.hpp"
#include "dmoe/parallel.hpp"
#include "dmoe/version.hpp"
#include "dmoe/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dmoe;

namespace {

std::vector<fs::path> wav_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && ext == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no .wav files in '" + dir + "'");
  return out;
}

void write_json(const std::string& path, const json& j) {
  io::write_file(path, j.dump(2) + "\n");
}

// Run manifest next to the primary output. Deterministic: no clocks, no hosts.
struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();

  void input(const std::string& path) { inputs[path] = io::file_hash(path); }
  void output(const std::string& path) { outputs[path] = io::file_hash(path); }
  void write(const std::string& primary) const {
    write_json(primary + ".manifest.json", {{"tool", "dmoe"},
                                            {"version", kVersion},
                                            {"command", command},
                                            {"seed", seed},
                                            {"config", config},
                                            {"inputs", inputs},
                                            {"outputs", outputs}});
  }
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

// ---------------------------------------------------------------- make-data

struct MakeDataArgs {
  std::string clean_dir, noise_file, out, noise_kind = "white";
  double snr = 5.0;
  std::size_t context = 4, synthetic = 0;
  std::uint64_t seed = 0;
};

void run_make_data(const MakeDataArgs& a) {
  data::FeatureConfig cfg;
  cfg.context = a.context;
  cfg.validate();
  data::MixSpec spec{a.snr, a.noise_kind, a.seed};
  Manifest m;
  m.command = "make-data";
  m.seed = a.seed;
  data::Corpus c;
  if (a.synthetic > 0) {
    if (!a.clean_dir.empty() || !a.noise_file.empty())
      throw ConfigError("--synthetic cannot be combined with --clean-dir/--noise-file");
    c = data::synthetic_corpus(a.synthetic, spec, cfg);
  } else {
    if (a.clean_dir.empty() || a.noise_file.empty())
      throw ConfigError("make-data needs --synthetic N or both --clean-dir and --noise-file");
    std::vector<signal::Waveform> cleans;
    for (const auto& f : wav_files(a.clean_dir)) {
      cleans.push_back(signal::read_wav(f.string(), cfg.sample_rate));
      m.input(f.string());
    }
    spec.noise_kind = fs::path(a.noise_file).stem().string();
    const auto noise = signal::read_wav(a.noise_file, cfg.sample_rate);
    m.input(a.noise_file);
    c = data::build_corpus(cleans, noise, spec, cfg);
  }
  data::write_corpus(a.out, c);
  m.config = {{"features", data::to_json(cfg)},
              {"snr_db", spec.snr_db},
              {"noise_kind", spec.noise_kind},
              {"synthetic", a.synthetic}};
  m.output(a.out);
  m.output(a.out + ".json");
  m.write(a.out);
  std::printf("wrote %zu frames from %zu utterances to %s\n", c.size(), c.utterance_frames.size(),
              a.out.c_str());
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus, out, config, trainer = "joint";
  std::size_t experts = 2, epochs = 50, batch = 128, hidden = 500, layers = 3, inner_epochs = 3;
  std::uint64_t seed = 0;
  double dropout = 0.2, lr = 1e-3;
  bool shared_input = false;
  CLI::App* app = nullptr;
};

// Precedence: explicit flags, then the --config file, then defaults.
TrainConfig resolve_train_config(TrainArgs& a) {
  TrainConfig c;
  json file = json::object();
  if (!a.config.empty()) {
    try {
      file = json::parse(io::read_file(a.config));
    } catch (const json::exception& e) {
      throw ConfigError("cannot parse '" + a.config + "': " + e.what());
    }
    static const std::vector<std::string> known{"trainer", "experts", "epochs", "batch_size", "hidden",
                                                "hidden_layers", "inner_epochs", "seed", "dropout",
                                                "lr", "shared_input"};
    for (const auto& [k, v] : file.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw ConfigError("unknown key '" + k + "' in " + a.config);
  }
  auto pick = [&](const char* flag, const char* key, auto& field, auto cli_value) {
    if (a.app->count(flag) > 0)
      field = cli_value;
    else if (file.contains(key))
      field = file.at(key).get<std::decay_t<decltype(field)>>();
  };
  pick("--trainer", "trainer", a.trainer, a.trainer);
  pick("--experts", "experts", c.shape.num_experts, a.experts);
  pick("--epochs", "epochs", c.epochs, a.epochs);
  pick("--batch", "batch_size", c.batch_size, a.batch);
  pick("--hidden", "hidden", c.shape.hidden, a.hidden);
  pick("--layers", "hidden_layers", c.shape.hidden_layers, a.layers);
  pick("--inner-epochs", "inner_epochs", c.inner_epochs, a.inner_epochs);
  pick("--seed", "seed", c.seed, a.seed);
  pick("--dropout", "dropout", c.dropout, a.dropout);
  pick("--lr", "lr", c.adam.lr, a.lr);
  pick("--shared-input", "shared_input", c.shape.shared_input, a.shared_input);
  if (a.trainer != "joint" && a.trainer != "em")
    throw ConfigError("--trainer must be joint or em, got '" + a.trainer + "'");
  c.validate();
  return c;
}

void run_train(TrainArgs& a) {
  const TrainConfig cfg = resolve_train_config(a);
  const data::Corpus corpus = data::read_corpus(a.corpus);
  TrainResult r;
  try {
    r = a.trainer == "em" ? train_em(corpus, cfg) : train_joint(corpus, cfg);
  } catch (const DivergenceError& e) {
    save_model(e.last_good(), a.out + ".last-good", {{"diverged", true}});
    write_json(a.out + ".report.json", e.report().to_json());
    throw;
  }
  json extra{{"trainer", a.trainer}, {"train_config", to_json(cfg)}, {"corpus_hash", io::file_hash(a.corpus)}};
  save_model(r.params, a.out, extra);
  const std::string report = a.out + ".report.json";
  write_json(report, r.report.to_json());

  Manifest m;
  m.command = "train";
  m.seed = cfg.seed;
  m.config = to_json(cfg);
  m.config["trainer"] = a.trainer;
  m.input(a.corpus);
  m.output(a.out);
  m.output(report);
  m.write(a.out);
  const auto& first = r.report.records.front();
  const auto& last = r.report.records.back();
  std::printf("%s training: mean log-likelihood %.4f -> %.4f over %zu %s\n", a.trainer.c_str(),
              first.mean_loglik, last.mean_loglik, r.report.records.size() - 1,
              a.trainer == "em" ? "EM iterations" : "epochs");
}

// ------------------------------------------------------------------ enhance

struct EnhanceArgs {
  std::string model, in, out, dump_spp;
  double beta = mask::kDefaultBeta;
  bool no_peak = false, resample = false;
};

void run_enhance(const EnhanceArgs& a) {
  const DmoeParams p = load_model(a.model);
  if (!p.features) throw ConfigError("model '" + a.model + "' carries no feature configuration");
  const auto noisy = signal::read_wav(a.in, p.features->sample_rate, a.resample);
  enhance::EnhanceOptions opts;
  opts.attenuation.beta = a.beta;
  opts.attenuation.validate();
  opts.peak_normalize = !a.no_peak;
  const auto r = enhance::enhance_utterance(p, noisy, *p.features, opts);
  signal::write_wav(a.out, r.enhanced);

  Manifest m;
  m.command = "enhance";
  m.config = {{"beta", a.beta}, {"peak_normalize", opts.peak_normalize}, {"resample", a.resample}};
  m.input(a.model);
  m.input(a.in);
  m.output(a.out);
  if (!a.dump_spp.empty()) {
    std::ostringstream bin(std::ios::binary);
    for (Eigen::Index i = 0; i < r.spp.size(); ++i) io::write_le(bin, static_cast<float>(r.spp.data()[i]));
    io::write_file(a.dump_spp, bin.str());
    write_json(a.dump_spp + ".json", {{"dtype", "float32-le"},
                                      {"layout", "row-major frames x bins"},
                                      {"frames", r.spp.rows()},
                                      {"bins", r.spp.cols()},
                                      {"hop", p.features->hop},
                                      {"sample_rate", p.features->sample_rate}});
    m.output(a.dump_spp);
  }
  m.write(a.out);
  std::printf("enhanced %zu samples (%ld frames) -> %s\n", r.enhanced.samples.size(),
              static_cast<long>(r.spp.rows()), a.out.c_str());
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string model, clean_dir, noise_file, out, snr_list = "-5,0,5,10,15", noise_kind = "white";
  std::size_t synthetic = 0;
  std::uint64_t seed = 0;
  double beta = mask::kDefaultBeta;
};

void run_eval(const EvalArgs& a) {
  const DmoeParams p = load_model(a.model);
  if (!p.features) throw ConfigError("model '" + a.model + "' carries no feature configuration");
  const auto& cfg = *p.features;
  const auto snrs = parse_list(a.snr_list);
  Manifest m;
  m.command = "eval";
  m.seed = a.seed;
  m.input(a.model);

  std::vector<std::string> names;
  std::vector<signal::Waveform> cleans;
  signal::Waveform noise;
  if (a.synthetic > 0) {
    if (!a.clean_dir.empty() || !a.noise_file.empty())
      throw ConfigError("--synthetic cannot be combined with --clean-dir/--noise-file");
    const auto synth = data::synth_corpus(a.synthetic, child_seed(a.seed, "speech"), cfg);
    std::size_t longest = 0;
    for (std::size_t u = 0; u < synth.size(); ++u) {
      names.push_back("synthetic-" + std::to_string(u));
      cleans.push_back(synth[u].clean);
      longest = std::max(longest, synth[u].clean.samples.size());
    }
    noise = data::synth_noise(longest + static_cast<std::size_t>(cfg.sample_rate), a.noise_kind,
                              child_seed(a.seed, "noise"), cfg.sample_rate);
  } else {
    if (a.clean_dir.empty() || a.noise_file.empty())
      throw ConfigError("eval needs --synthetic N or both --clean-dir and --noise-file");
    for (const auto& f : wav_files(a.clean_dir)) {
      names.push_back(f.filename().string());
      cleans.push_back(signal::read_wav(f.string(), cfg.sample_rate));
      m.input(f.string());
    }
    noise = signal::read_wav(a.noise_file, cfg.sample_rate);
    m.input(a.noise_file);
  }

  enhance::EnhanceOptions opts;
  opts.attenuation.beta = a.beta;
  opts.attenuation.validate();
  std::vector<eval::UtteranceEval> rows;
  for (double snr : snrs)
    for (std::size_t u = 0; u < cleans.size(); ++u) {
      data::MixSpec spec{snr, a.noise_kind, child_seed(a.seed, "mix", u)};
      auto e = eval::evaluate_mixture(p, cleans[u], noise, spec, cfg, opts);
      e.name = names[u];
      rows.push_back(std::move(e));
    }
  const auto report = eval::EvalReport::aggregate(rows);
  write_json(a.out, report.to_json());
  const std::string csv = fs::path(a.out).replace_extension(".csv").string();
  io::write_file(csv, eval::per_snr_csv(report.utterances));
  m.config = {{"snr_list", snrs}, {"beta", a.beta}, {"synthetic", a.synthetic}};
  m.output(a.out);
  m.output(csv);
  m.write(a.out);
  std::printf("segmental SNR: noisy %.3f dB, enhanced %.3f dB, oracle %.3f dB; mask accuracy %.4f\n",
              report.ssnr_noisy_db, report.ssnr_db, report.ssnr_oracle_db, report.mask_accuracy);
}

// ------------------------------------------------------------------ analyze

struct AnalyzeArgs {
  std::string model, corpus, eval_corpus, out, experts_list = "1,2,4";
  TrainArgs train;
};

void run_gating(const AnalyzeArgs& a) {
  const DmoeParams p = load_model(a.model);
  const data::Corpus c = data::read_corpus(a.corpus);
  const auto g = analysis::gating_stats(p, c);
  write_json(a.out, g.to_json());
  const std::string csv = fs::path(a.out).replace_extension(".csv").string();
  io::write_file(csv, g.to_csv());
  Manifest m;
  m.command = "analyze gating";
  m.input(a.model);
  m.input(a.corpus);
  m.output(a.out);
  m.output(csv);
  m.write(a.out);
  for (std::size_t r = 0; r < g.regimes.size(); ++r)
    std::printf("regime %d: majority expert %zu (%.3f of %zu frames)\n", g.regimes[r],
                g.majority_expert(r), g.majority_fraction(r), g.frames[r]);
  std::printf("routing entropy %.4f nats\n", g.routing_entropy);
}

void run_probe(const AnalyzeArgs& a) {
  const DmoeParams p = load_model(a.model);
  const data::Corpus c = data::read_corpus(a.corpus);
  const Grid probe = analysis::expert_probe(p, c);
  const auto share = analysis::low_band_share(probe, c.features);
  json per_regime = json::object();
  std::map<int, std::pair<double, std::size_t>> acc;
  for (Eigen::Index t = 0; t < probe.rows(); ++t) {
    auto& [sum, n] = acc[c.regime_tags[static_cast<std::size_t>(t)]];
    sum += share(t);
    ++n;
  }
  for (const auto& [tag, v] : acc)
    per_regime[std::to_string(tag)] = {{"frames", v.second}, {"mean_low_band_share", v.first / static_cast<double>(v.second)}};
  write_json(a.out, {{"frames", probe.rows()}, {"bins", probe.cols()}, {"regimes", per_regime}});
  const std::string csv = fs::path(a.out).replace_extension(".csv").string();
  std::ostringstream out;
  out.precision(8);
  out << "frame,regime";
  for (Eigen::Index k = 0; k < probe.cols(); ++k) out << ",bin" << k;
  out << '\n';
  for (Eigen::Index t = 0; t < probe.rows(); ++t) {
    out << t << ',' << c.regime_tags[static_cast<std::size_t>(t)];
    for (Eigen::Index k = 0; k < probe.cols(); ++k) out << ',' << probe(t, k);
    out << '\n';
  }
  io::write_file(csv, out.str());
  Manifest m;
  m.command = "analyze probe";
  m.input(a.model);
  m.input(a.corpus);
  m.output(a.out);
  m.output(csv);
  m.write(a.out);
  std::printf("probe: %ld frames x %ld bins -> %s\n", static_cast<long>(probe.rows()),
              static_cast<long>(probe.cols()), csv.c_str());
}

void run_sweep(AnalyzeArgs& a) {
  const TrainConfig cfg = resolve_train_config(a.train);
  const data::Corpus train = data::read_corpus(a.corpus);
  const data::Corpus held = a.eval_corpus.empty() ? train : data::read_corpus(a.eval_corpus);
  std::vector<std::size_t> ms;
  for (double v : parse_list(a.experts_list)) {
    if (v < 1 || v != std::floor(v)) throw ConfigError("expert counts must be positive integers");
    ms.push_back(static_cast<std::size_t>(v));
  }
  const auto rows = analysis::expert_sweep(train, held, ms, cfg);
  write_json(a.out, analysis::sweep_to_json(rows));
  const std::string csv = fs::path(a.out).replace_extension(".csv").string();
  io::write_file(csv, analysis::sweep_csv(rows));
  Manifest m;
  m.command = "analyze sweep";
  m.seed = cfg.seed;
  m.config = to_json(cfg);
  m.config["experts_list"] = ms;
  m.input(a.corpus);
  if (!a.eval_corpus.empty()) m.input(a.eval_corpus);
  m.output(a.out);
  m.output(csv);
  m.write(a.out);
  for (const auto& r : rows)
    std::printf("m=%zu mask accuracy %.4f auc %.4f\n", r.num_experts, r.mask_accuracy, r.mask_auc);
}

void add_train_flags(CLI::App* cmd, TrainArgs& t) {
  t.app = cmd;
  cmd->add_option("--trainer", t.trainer, "joint or em")->check(CLI::IsMember({"joint", "em"}));
  cmd->add_option("--experts", t.experts, "number of experts");
  cmd->add_option("--epochs", t.epochs, "epochs (EM iterations for --trainer em)");
  cmd->add_option("--batch", t.batch, "minibatch size");
  cmd->add_option("--hidden", t.hidden, "hidden units per layer");
  cmd->add_option("--layers", t.layers, "hidden layers");
  cmd->add_option("--dropout", t.dropout, "dropout rate on hidden layers");
  cmd->add_option("--lr", t.lr, "Adam learning rate");
  cmd->add_option("--inner-epochs", t.inner_epochs, "EM inner epochs per M-step");
  cmd->add_option("--seed", t.seed, "random seed");
  cmd->add_flag("--shared-input", t.shared_input, "feed the gate the expert input");
  cmd->add_option("--config", t.config, "JSON training configuration")->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep mixture-of-experts speech enhancement", "dmoe"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  MakeDataArgs md;
  auto* make = app.add_subcommand("make-data", "build a training corpus");
  make->add_option("--clean-dir", md.clean_dir, "directory of clean 16 kHz WAV files");
  make->add_option("--noise-file", md.noise_file, "noise WAV file")->check(CLI::ExistingFile);
  make->add_option("--snr", md.snr, "mixing SNR in dB");
  make->add_option("--out", md.out, "output corpus path")->required();
  make->add_option("--context", md.context, "context frames on each side");
  make->add_option("--synthetic", md.synthetic, "generate N synthetic two-regime utterances");
  make->add_option("--noise-kind", md.noise_kind, "synthetic noise: white or pink")
      ->check(CLI::IsMember({"white", "pink"}));
  make->add_option("--seed", md.seed, "random seed");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--corpus", tr.corpus, "corpus from make-data")->required()->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "output model path")->required();
  add_train_flags(train, tr);

  EnhanceArgs en;
  auto* enh = app.add_subcommand("enhance", "enhance a noisy WAV file");
  enh->add_option("--model", en.model, "model file")->required()->check(CLI::ExistingFile);
  enh->add_option("--in", en.in, "noisy WAV")->required()->check(CLI::ExistingFile);
  enh->add_option("--out", en.out, "enhanced WAV")->required();
  enh->add_option("--beta", en.beta, "attenuation in natural-log units");
  enh->add_option("--dump-spp", en.dump_spp, "write the SPP matrix (float32) here");
  enh->add_flag("--no-peak-normalize", en.no_peak, "never rescale the output");
  enh->add_flag("--resample", en.resample, "resample input with a different rate");

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "score a model on mixtures");
  evc->add_option("--model", ev.model, "model file")->required()->check(CLI::ExistingFile);
  evc->add_option("--clean-dir", ev.clean_dir, "directory of clean WAV files");
  evc->add_option("--noise-file", ev.noise_file, "noise WAV file")->check(CLI::ExistingFile);
  evc->add_option("--synthetic", ev.synthetic, "use N synthetic utterances instead");
  evc->add_option("--noise-kind", ev.noise_kind, "noise tag (synthetic noise: white or pink)");
  evc->add_option("--snr-list", ev.snr_list, "comma-separated SNRs in dB");
  evc->add_option("--beta", ev.beta, "attenuation in natural-log units");
  evc->add_option("--seed", ev.seed, "random seed");
  evc->add_option("--out", ev.out, "report JSON (a .csv is written alongside)")->required();

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "introspection experiments");
  analyze->require_subcommand(1);
  auto* gating = analyze->add_subcommand("gating", "per-regime gate usage");
  auto* probe = analyze->add_subcommand("probe", "all-ones expert probe");
  for (auto* c : {gating, probe}) {
    c->add_option("--model", an.model, "model file")->required()->check(CLI::ExistingFile);
    c->add_option("--corpus", an.corpus, "tagged corpus")->required()->check(CLI::ExistingFile);
    c->add_option("--out", an.out, "report JSON (a .csv is written alongside)")->required();
  }
  auto* sweep = analyze->add_subcommand("sweep", "train and score several expert counts");
  sweep->add_option("--corpus", an.corpus, "training corpus")->required()->check(CLI::ExistingFile);
  sweep->add_option("--eval-corpus", an.eval_corpus, "held-out corpus (default: training corpus)")
      ->check(CLI::ExistingFile);
  sweep->add_option("--experts-list", an.experts_list, "comma-separated expert counts");
  sweep->add_option("--out", an.out, "report JSON (a .csv is written alongside)")->required();
  add_train_flags(sweep, an.train);

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    configure_threads();
    if (make->parsed()) run_make_data(md);
    else if (train->parsed()) run_train(tr);
    else if (enh->parsed()) run_enhance(en);
    else if (evc->parsed()) run_eval(ev);
    else if (gating->parsed()) run_gating(an);
    else if (probe->parsed()) run_probe(an);
    else if (sweep->parsed()) run_sweep(an);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
