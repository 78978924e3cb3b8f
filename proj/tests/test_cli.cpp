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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dmoe/binary_io.hpp"
#include "dmoe/dataset.hpp"
#include "dmoe/mixture.hpp"
#include "dmoe/wav.hpp"

namespace fs = std::filesystem;
using namespace dmoe;

namespace {

struct Run {
  int code;
  std::string err;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "dmoe_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const fs::path err = workdir() / "stderr.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && '" DMOE_CLI_PATH "' " + args +
                          " > /dev/null 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), io::read_file(err.string())};
}

std::string slurp(const std::string& name) { return io::read_file((workdir() / name).string()); }

nlohmann::json load_json(const std::string& name) { return nlohmann::json::parse(slurp(name)); }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("--no-such-flag").code == 2);
  CHECK(run("train --corpus missing.bin --out m").code == 2);
  CHECK(run("analyze").code == 2);
}

TEST_CASE("runtime errors exit with 1 and a single line") {
  const auto r = run("make-data --out x.bin");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(r.err.find('\n') == r.err.size() - 1);
}

TEST_CASE("synthetic pipeline end to end") {
  REQUIRE(run("make-data --synthetic 6 --context 1 --seed 4 --out a.bin").code == 0);
  REQUIRE(run("make-data --synthetic 6 --context 1 --seed 4 --out b.bin").code == 0);
  CHECK(slurp("a.bin") == slurp("b.bin"));
  CHECK(load_json("a.bin.json").at("schema") == data::kCorpusSchema);

  const std::string flags = "--hidden 12 --layers 1 --epochs 2 --batch 64 --seed 5";
  REQUIRE(run("train --corpus a.bin --out m1.dmoe " + flags).code == 0);
  REQUIRE(run("train --corpus a.bin --out m2.dmoe " + flags).code == 0);
  CHECK(slurp("m1.dmoe") == slurp("m2.dmoe"));
  CHECK(slurp("m1.dmoe.report.json") == slurp("m2.dmoe.report.json"));
  const auto manifest = load_json("m1.dmoe.manifest.json");
  CHECK(manifest.at("command") == "train");
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("inputs").contains("a.bin"));
  CHECK(manifest.dump().find("time") == std::string::npos);
  CHECK(read_model_metadata((workdir() / "m1.dmoe").string()).at("num_experts") == 2);

  REQUIRE(run("train --corpus a.bin --out em.dmoe --trainer em --inner-epochs 1 " + flags).code == 0);
  const auto em = load_json("em.dmoe.report.json");
  CHECK(em.at("trainer") == "em");
  CHECK(em.at("records").at(1).at("label") == "em-iteration");

  const auto synth = data::synth_corpus(1, 99);
  signal::write_wav((workdir() / "noisy.wav").string(), synth[0].clean);
  REQUIRE(run("enhance --model m1.dmoe --in noisy.wav --out out.wav --dump-spp spp.f32").code == 0);
  const auto side = load_json("spp.f32.json");
  CHECK(slurp("spp.f32").size() == 4u * side.at("frames").get<std::size_t>() * 257u);
  CHECK(signal::read_wav((workdir() / "out.wav").string()).samples.size() == synth[0].clean.samples.size());

  REQUIRE(run("eval --model m1.dmoe --synthetic 2 --snr-list 0,5 --out r.json").code == 0);
  const auto report = load_json("r.json");
  CHECK(report.at("utterances").size() == 4);
  CHECK(slurp("r.csv").rfind("snr_db", 0) == 0);

  REQUIRE(run("analyze gating --model m1.dmoe --corpus a.bin --out g.json").code == 0);
  CHECK(load_json("g.json").at("regimes").size() == 2);
  REQUIRE(run("analyze probe --model m1.dmoe --corpus a.bin --out p.json").code == 0);
  REQUIRE(run("analyze sweep --corpus a.bin --experts-list 1,2 --out s.json " + flags).code == 0);
  CHECK(load_json("s.json").size() == 2);
}

TEST_CASE("training config precedence") {
  REQUIRE(run("make-data --synthetic 3 --context 0 --seed 8 --out c.bin").code == 0);
  io::write_file((workdir() / "cfg.json").string(),
                 R"({"epochs": 1, "hidden": 6, "hidden_layers": 1, "experts": 3, "seed": 11})");
  REQUIRE(run("train --corpus c.bin --out p.dmoe --config cfg.json --experts 2").code == 0);
  const auto m = load_json("p.dmoe.manifest.json").at("config");
  CHECK(m.at("epochs") == 1);
  CHECK(m.at("hidden") == 6);
  CHECK(m.at("experts") == 2);
  CHECK(m.at("seed") == 11);
  CHECK(m.at("batch_size") == 128);
  io::write_file((workdir() / "bad.json").string(), R"({"epoch": 1})");
  CHECK(run("train --corpus c.bin --out q.dmoe --config bad.json").code == 1);
}

TEST_CASE("wav input is checked") {
  signal::Waveform w;
  w.sample_rate = 8000;
  w.samples.assign(4000, 0.01);
  signal::write_wav((workdir() / "rate8k.wav").string(), w);
  REQUIRE(run("make-data --synthetic 2 --context 0 --seed 1 --out d.bin").code == 0);
  REQUIRE(run("train --corpus d.bin --out d.dmoe --hidden 4 --layers 1 --epochs 1").code == 0);
  const auto r = run("enhance --model d.dmoe --in rate8k.wav --out o.wav");
  CHECK(r.code == 1);
  CHECK(r.err.find("8000") != std::string::npos);
  CHECK(run("enhance --model d.dmoe --in rate8k.wav --out o.wav --resample").code == 0);
}
