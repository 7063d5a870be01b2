// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "owlfed/checkpoint.hpp"
#include "owlfed/errors.hpp"
#include "owlfed/experiment.hpp"
#include "test_support.hpp"

using namespace owlfed;
using owlfed::testing::TempDir;
using owlfed::testing::tiny_experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = tiny_experiment(4);
  c.loss_mode = LossMode::kClassBalancedCrossEntropy;
  c.fusion_mode = FusionMode::kPlainAverage;
  c.eval_mask = MaskSource::kLabels;
  c.ablate.seeds = {1, 2};
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.model, c.model);
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  nlohmann::json j = tiny_experiment();
  j["federation"]["roundz"] = 3;
  EXPECT_THROW(j.get<ExperimentConfig>(), ConfigError);
  nlohmann::json k = tiny_experiment();
  k["loss"]["mode"] = "focal";
  EXPECT_THROW(k.get<ExperimentConfig>(), ConfigError);
  auto c = tiny_experiment();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, LoadsFromFile) {
  TempDir dir("cfg");
  const auto c = tiny_experiment(8);
  std::ofstream(dir.path() / "c.json") << nlohmann::json(c).dump();
  EXPECT_EQ(nlohmann::json(load_experiment_config(dir.path() / "c.json")), nlohmann::json(c));
  std::ofstream(dir.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_experiment_config(dir.path() / "bad.json"), ConfigError);
}

TEST(Commands, SynthIsByteIdenticalAndManifestCountsMatch) {
  TempDir a("synth"), b("synth");
  const auto cfg = tiny_experiment(5);
  cmd_synth(cfg, a.path());
  cmd_synth(cfg, b.path());
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a.path())) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 8u + 1u);

  const auto manifest = nlohmann::json::parse(slurp(a.path() / "manifest.json"));
  const auto wells = load_well_directory(a.path(), cfg.schema);
  std::vector<std::size_t> total(5, 0);
  for (const auto& w : wells) {
    const auto h = class_histogram(w);
    for (std::size_t c = 0; c < 5; ++c) total[c] += h[c];
  }
  EXPECT_EQ(manifest["class_counts"].get<std::vector<std::size_t>>(), total);
  EXPECT_EQ(manifest["wells"].size(), wells.size());
}

TEST(Commands, TrainFederatedWritesItsOutputs) {
  TempDir dir("train");
  auto cfg = tiny_experiment(6);
  cfg.rounds = 2;
  cfg.checkpoint_every_round = true;
  const auto out = cmd_train_federated(cfg, dir.path());
  EXPECT_EQ(lines(slurp(dir.path() / "history.jsonl")).size(), 2u);
  EXPECT_TRUE(fs::exists(dir.path() / "checkpoints" / "round_001.owlm"));
  EXPECT_TRUE(fs::exists(dir.path() / "checkpoints" / "round_002.owlm"));
  EXPECT_EQ(load_checkpoint(dir.path() / "model.owlm"), out.federation.global);
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "summary.json"));
  EXPECT_TRUE(summary.contains("final_probe_acc"));
  EXPECT_TRUE(summary.contains("final_probe_macro_f1"));
  EXPECT_TRUE(summary.contains("wall_time"));
  EXPECT_EQ(summary["final_probe_macro_f1"].get<double>(), out.summary.final_probe_macro_f1);
  const auto echoed = load_experiment_config(dir.path() / "config.json");
  EXPECT_EQ(nlohmann::json(echoed), nlohmann::json(cfg));
}

TEST(Commands, HistoryIsReproducible) {
  TempDir a("hist"), b("hist");
  const auto cfg = tiny_experiment(7);
  cmd_train_federated(cfg, a.path());
  cmd_train_federated(cfg, b.path());
  EXPECT_EQ(slurp(a.path() / "history.jsonl"), slurp(b.path() / "history.jsonl"));
  EXPECT_EQ(slurp(a.path() / "model.owlm"), slurp(b.path() / "model.owlm"));
}

TEST(Commands, FinetuneEvalCurves) {
  TempDir dir("ft");
  const auto cfg = tiny_experiment(2);
  const auto ckpt = dir.path() / "m.owlm";
  save_checkpoint(prepare_workspace(cfg).initial, ckpt);
  const auto points = cmd_finetune_eval(cfg, ckpt, "B2", 2, dir.path() / "out");
  // Two wells per block: one tunes, one is tested, rounds 0..2.
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[0].round, 0u);
  EXPECT_EQ(points[2].round, 2u);
  const auto csv = lines(slurp(dir.path() / "out" / "curves.csv"));
  ASSERT_EQ(csv.size(), 4u);
  EXPECT_EQ(csv[0], "test_well,round,accuracy,macro_f1,finetune_loss");
  EXPECT_THROW(cmd_finetune_eval(cfg, ckpt, "nope", 1, {}), ConfigError);
  auto single = cfg;
  single.generator.blocks[1].wells = 1;
  EXPECT_THROW(cmd_finetune_eval(single, ckpt, "B2", 1, {}), ArgumentError);
}

TEST(Commands, AblationGridProducesOneRowPerCell) {
  TempDir dir("abl");
  auto cfg = tiny_experiment(1);
  cfg.rounds = 1;
  const auto report = cmd_ablate(cfg, dir.path());
  EXPECT_EQ(report.cells.size(), 8u);
  EXPECT_EQ(report.runs.size(), 8u);
  const auto csv = lines(slurp(dir.path() / "ablation.csv"));
  EXPECT_EQ(csv.size(), 9u);
  EXPECT_EQ(lines(slurp(dir.path() / "runs.jsonl")).size(), 8u);
  for (const auto& run : report.runs) {
    if (run.fusion != FusionMode::kPlainAverage) continue;
    for (const auto& round : run.weights)
      for (const auto& [id, w] : round) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
  }
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), ArgumentError);
}
