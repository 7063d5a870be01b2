// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "owlfed/federation.hpp"
#include "owlfed/synth.hpp"
#include "owlfed/well_log_io.hpp"

namespace owlfed {

/// Which cells cmd_ablate runs; every cell runs every seed.
struct AblationGrid {
  std::vector<LossMode> losses{LossMode::kCrossEntropy, LossMode::kClassBalancedFLoss};
  std::vector<FusionMode> fusions{FusionMode::kPlainAverage, FusionMode::kFilteredDynamic};
  std::vector<bool> masks{false, true};
  std::vector<std::uint64_t> seeds{0};
};

/// Everything a run depends on. Serialized verbatim next to every output.
struct ExperimentConfig {
  /// Directory of "<block>__<well>.csv" files; when unset the generator is used.
  std::optional<std::string> data_dir;
  GeneratorSpec generator = field_generator_spec();
  WellLogSchema schema;

  /// Blocks acting as clients (empty: every block except the probe block).
  std::vector<std::string> client_blocks;
  /// Held-out block evaluated each round (empty: the last block id).
  std::string probe_block;

  ModelConfig model;
  LossMode loss_mode = LossMode::kClassBalancedFLoss;
  double beta = kDefaultBeta;
  FusionMode fusion_mode = FusionMode::kFilteredDynamic;
  bool mask = true;
  MaskSource eval_mask = MaskSource::kNone;
  AbsentClassPolicy absent_class = AbsentClassPolicy::kStrict;

  std::size_t rounds = 30;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  std::size_t finetune_rounds = 20;
  /// Well of the target block used for fine-tuning (empty: first by id).
  std::string finetune_well;

  std::uint64_t seed = 0;
  std::size_t workers = 0;
  bool checkpoint_every_round = true;

  AblationGrid ablate;

  LocalTrainConfig local_train() const;
  FederationConfig federation() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Unknown keys and wrong types raise ConfigError; missing keys keep defaults.
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// The small benchmark behind the loss and fusion comparisons: four client
/// blocks plus a probe block, roughly 100:1 head:tail class ratio per block,
/// 2-layer width-16 model, 15 rounds of 3 local epochs.
ExperimentConfig reference_benchmark_config(std::uint64_t seed);

/// All well series named by the config (generated or loaded), block-major.
std::vector<WellLogSeries> load_blocks(const ExperimentConfig& config);

/// Clients, probe windows and the initial global model of one run.
struct Workspace {
  std::vector<ClientState> clients;
  std::vector<WindowSample> probe;
  ModelParams initial;
};

Workspace prepare_workspace(const ExperimentConfig& config);

struct RunSummary {
  double final_probe_acc = 0.0;
  double final_probe_macro_f1 = 0.0;
  double wall_time = 0.0;
  std::size_t rounds = 0;
  std::size_t clients = 0;
  std::size_t total_uploads = 0;
  std::size_t max_uploads_per_round = 0;
};

nlohmann::json to_json(const RunSummary& s);

struct RunOutput {
  FederationResult federation;
  RunSummary summary;
};

/// Federated training without touching the filesystem.
RunOutput run_experiment(const ExperimentConfig& config);

/// synth: per-well CSVs plus manifest.json with per-well and total class counts.
void cmd_synth(const ExperimentConfig& config, const std::filesystem::path& out);

/// train-federated: config.json, history.jsonl, checkpoints/, model.owlm, summary.json.
RunOutput cmd_train_federated(const ExperimentConfig& config, const std::filesystem::path& out);

struct CurvePoint {
  std::string test_well;
  std::size_t round = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double finetune_loss = 0.0;
};

/// finetune-eval: fine-tunes on one well of the target block and writes
/// curves.csv with rounds + 1 rows per remaining well. Throws ArgumentError
/// for a target block with fewer than two wells.
std::vector<CurvePoint> cmd_finetune_eval(const ExperimentConfig& config,
                                          const std::filesystem::path& checkpoint,
                                          const std::string& target_block, std::size_t rounds,
                                          const std::filesystem::path& out);

struct AblationRun {
  LossMode loss = LossMode::kCrossEntropy;
  FusionMode fusion = FusionMode::kPlainAverage;
  bool mask = false;
  std::uint64_t seed = 0;
  RunSummary summary;
  /// Fusion weights logged per round (client id, weight).
  std::vector<std::vector<std::pair<std::string, double>>> weights;
};

struct AblationCell {
  LossMode loss = LossMode::kCrossEntropy;
  FusionMode fusion = FusionMode::kPlainAverage;
  bool mask = false;
  double median_acc = 0.0;
  double median_macro_f1 = 0.0;
  double median_wall_time = 0.0;
  std::size_t seeds = 0;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  std::vector<AblationCell> cells;
};

/// ablate: runs.jsonl (one line per run) and ablation.csv (one row per cell,
/// medians over seeds). When out is empty nothing is written.
AblationReport cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& out);

double median(std::vector<double> values);

}  // namespace owlfed
