// SPDX-License-Identifier: Apache-2.0
#include "owlfed/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "owlfed/checkpoint.hpp"
#include "owlfed/errors.hpp"

namespace owlfed {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; }))
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string_view mask_source_name(MaskSource m) {
  switch (m) {
    case MaskSource::kNone: return "none";
    case MaskSource::kLabels: return "labels";
    case MaskSource::kExternal: return "external";
  }
  return "?";
}

MaskSource parse_mask_source(std::string_view s) {
  if (s == "none") return MaskSource::kNone;
  if (s == "labels") return MaskSource::kLabels;
  if (s == "external") return MaskSource::kExternal;
  throw ConfigError("unknown mask source '" + std::string(s) + "' (expected none|labels|external)");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::map<std::string, std::vector<WellLogSeries>> group_by_block(std::vector<WellLogSeries> wells) {
  std::map<std::string, std::vector<WellLogSeries>> blocks;
  for (auto& w : wells) blocks[w.block_id].push_back(std::move(w));
  for (auto& [id, ws] : blocks)
    std::sort(ws.begin(), ws.end(), [](const auto& a, const auto& b) { return a.well_id < b.well_id; });
  return blocks;
}

std::string resolve_probe_block(const ExperimentConfig& config,
                                const std::map<std::string, std::vector<WellLogSeries>>& blocks) {
  if (!config.probe_block.empty()) {
    if (!blocks.count(config.probe_block)) throw ConfigError("probe block '" + config.probe_block + "' not found");
    return config.probe_block;
  }
  if (blocks.size() < 2) throw ConfigError("need at least two blocks (clients plus a probe block)");
  return blocks.rbegin()->first;
}

std::chrono::steady_clock::time_point now() { return std::chrono::steady_clock::now(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(now() - t0).count();
}

}  // namespace

LocalTrainConfig ExperimentConfig::local_train() const {
  LocalTrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.optimizer = optimizer;
  t.loss_mode = loss_mode;
  t.beta = beta;
  t.train_mask = mask;
  t.eval_mask = eval_mask;
  t.absent_class = absent_class;
  return t;
}

FederationConfig ExperimentConfig::federation() const {
  FederationConfig f;
  f.rounds = rounds;
  f.mode = fusion_mode;
  f.train = local_train();
  f.workers = workers;
  return f;
}

void ExperimentConfig::validate() const {
  try {
    model.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (model.features != schema.feature_columns.size()) {
    throw ConfigError("model.features is " + std::to_string(model.features) + " but the schema has " +
                      std::to_string(schema.feature_columns.size()) + " feature columns");
  }
  if (static_cast<int>(model.classes) != schema.classes) throw ConfigError("model.classes differs from schema.classes");
  if (!data_dir && generator.classes != schema.classes) throw ConfigError("generator.classes differs from schema.classes");
  if (model.window % 2 == 0) throw ConfigError("model.window must be odd");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must lie in [0, 1)");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (std::find(client_blocks.begin(), client_blocks.end(), probe_block) != client_blocks.end() &&
      !probe_block.empty())
    throw ConfigError("probe block '" + probe_block + "' is also a client block");
}

void to_json(json& j, const ExperimentConfig& c) {
  json losses = json::array(), fusions = json::array();
  for (auto m : c.ablate.losses) losses.push_back(to_string(m));
  for (auto m : c.ablate.fusions) fusions.push_back(to_string(m));
  j = json{
      {"data",
       {{"dir", c.data_dir ? json(*c.data_dir) : json()},
        {"generator", c.generator},
        {"schema", c.schema},
        {"client_blocks", c.client_blocks},
        {"probe_block", c.probe_block}}},
      {"model", c.model},
      {"loss", {{"mode", to_string(c.loss_mode)}, {"beta", c.beta}}},
      {"federation",
       {{"fusion", to_string(c.fusion_mode)},
        {"rounds", c.rounds},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"workers", c.workers},
        {"checkpoint_every_round", c.checkpoint_every_round}}},
      {"optimizer",
       {{"kind", to_string(c.optimizer.kind)},
        {"learning_rate", c.optimizer.learning_rate},
        {"weight_decay", c.optimizer.weight_decay},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"mask", {{"train", c.mask}, {"eval", mask_source_name(c.eval_mask)}}},
      {"metrics", {{"absent_class", to_string(c.absent_class)}}},
      {"finetune", {{"rounds", c.finetune_rounds}, {"well", c.finetune_well}}},
      {"seed", c.seed},
      {"ablate", {{"losses", losses}, {"fusions", fusions}, {"masks", c.ablate.masks}, {"seeds", c.ablate.seeds}}},
  };
}

void from_json(const json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  try {
    check_keys(j, {"data", "model", "loss", "federation", "optimizer", "mask", "metrics", "finetune", "seed", "ablate"},
               "config");
    if (j.contains("data")) {
      const json& d = j["data"];
      check_keys(d, {"dir", "generator", "schema", "client_blocks", "probe_block"}, "data");
      if (d.contains("dir") && !d["dir"].is_null()) c.data_dir = d["dir"].get<std::string>();
      read(d, "generator", c.generator);
      read(d, "schema", c.schema);
      read(d, "client_blocks", c.client_blocks);
      read(d, "probe_block", c.probe_block);
    }
    if (j.contains("model")) {
      check_keys(j["model"], {"layers", "width", "heads", "ffn_width", "features", "window", "classes", "seed"}, "model");
      c.model = j["model"].get<ModelConfig>();
    }
    if (j.contains("loss")) {
      const json& l = j["loss"];
      check_keys(l, {"mode", "beta"}, "loss");
      if (l.contains("mode")) c.loss_mode = parse_loss_mode(l["mode"].get<std::string>());
      read(l, "beta", c.beta);
    }
    if (j.contains("federation")) {
      const json& f = j["federation"];
      check_keys(f, {"fusion", "rounds", "epochs", "batch_size", "workers", "checkpoint_every_round"}, "federation");
      if (f.contains("fusion")) c.fusion_mode = parse_fusion_mode(f["fusion"].get<std::string>());
      read(f, "rounds", c.rounds);
      read(f, "epochs", c.epochs);
      read(f, "batch_size", c.batch_size);
      read(f, "workers", c.workers);
      read(f, "checkpoint_every_round", c.checkpoint_every_round);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      check_keys(o, {"kind", "learning_rate", "weight_decay", "beta1", "beta2", "epsilon"}, "optimizer");
      if (o.contains("kind")) c.optimizer.kind = parse_optimizer_kind(o["kind"].get<std::string>());
      read(o, "learning_rate", c.optimizer.learning_rate);
      read(o, "weight_decay", c.optimizer.weight_decay);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "epsilon", c.optimizer.epsilon);
    }
    if (j.contains("mask")) {
      const json& m = j["mask"];
      check_keys(m, {"train", "eval"}, "mask");
      read(m, "train", c.mask);
      if (m.contains("eval")) c.eval_mask = parse_mask_source(m["eval"].get<std::string>());
    }
    if (j.contains("metrics")) {
      check_keys(j["metrics"], {"absent_class"}, "metrics");
      if (j["metrics"].contains("absent_class"))
        c.absent_class = parse_absent_class_policy(j["metrics"]["absent_class"].get<std::string>());
    }
    if (j.contains("finetune")) {
      check_keys(j["finetune"], {"rounds", "well"}, "finetune");
      read(j["finetune"], "rounds", c.finetune_rounds);
      read(j["finetune"], "well", c.finetune_well);
    }
    read(j, "seed", c.seed);
    if (j.contains("ablate")) {
      const json& a = j["ablate"];
      check_keys(a, {"losses", "fusions", "masks", "seeds"}, "ablate");
      if (a.contains("losses")) {
        c.ablate.losses.clear();
        for (const auto& s : a["losses"]) c.ablate.losses.push_back(parse_loss_mode(s.get<std::string>()));
      }
      if (a.contains("fusions")) {
        c.ablate.fusions.clear();
        for (const auto& s : a["fusions"]) c.ablate.fusions.push_back(parse_fusion_mode(s.get<std::string>()));
      }
      read(a, "masks", c.ablate.masks);
      read(a, "seeds", c.ablate.seeds);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

ExperimentConfig reference_benchmark_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  GeneratorSpec& g = c.generator;
  g = GeneratorSpec{};
  g.min_layer = 8;
  g.max_layer = 30;
  // Each client block has its own head class and a ~100:1 head:tail ratio.
  g.blocks = {
      {"C1", 3, 500, {100, 30, 12, 4, 1}, {0, 0, 0, 0}},
      {"C2", 3, 500, {12, 100, 30, 1, 4}, {3, 0.1, 4, 1.5}},
      {"C3", 3, 500, {4, 30, 100, 12, 1}, {-3, -0.1, -3, 1}},
      {"C4", 3, 500, {1, 12, 30, 100, 4}, {2, 0.05, 2, -1}},
      {"P", 3, 500, {20, 30, 30, 12, 8}, {1, 0.05, 1, 0.5}},
  };
  c.probe_block = "P";
  c.model.layers = 2;
  c.model.width = 16;
  c.model.heads = 1;
  c.model.ffn_width = 32;
  c.model.window = 25;
  c.rounds = 15;
  c.epochs = 3;
  c.batch_size = 32;
  c.optimizer.learning_rate = 3e-3;
  c.finetune_rounds = 20;
  c.checkpoint_every_round = false;
  return c;
}

std::vector<WellLogSeries> load_blocks(const ExperimentConfig& config) {
  if (config.data_dir) return load_well_directory(*config.data_dir, config.schema);
  return synth_blocks(config.generator, derive_seed(config.seed, "data"));
}

Workspace prepare_workspace(const ExperimentConfig& config) {
  config.validate();
  auto blocks = group_by_block(load_blocks(config));
  const std::string probe_id = resolve_probe_block(config, blocks);

  std::vector<std::string> client_ids = config.client_blocks;
  if (client_ids.empty()) {
    for (const auto& [id, wells] : blocks)
      if (id != probe_id) client_ids.push_back(id);
  }
  if (client_ids.empty()) throw ConfigError("no client blocks");

  SplitOptions options;
  options.window = config.model.window;
  options.classes = static_cast<int>(config.model.classes);

  Workspace ws;
  ModelConfig model = config.model;
  model.seed = derive_seed(config.seed, "init");
  ws.initial = init_model(model);

  for (std::size_t i = 0; i < client_ids.size(); ++i) {
    const auto it = blocks.find(client_ids[i]);
    if (it == blocks.end()) throw ConfigError("client block '" + client_ids[i] + "' not found");
    if (it->second.size() < 2) throw ConfigError("client block '" + client_ids[i] + "' needs at least two wells");
    DataSplit split = split_by_well(it->second, options, derive_seed(derive_seed(config.seed, "split"), i));
    ws.clients.push_back(make_client(client_ids[i], std::move(split), config.optimizer,
                                     derive_seed(derive_seed(config.seed, "client"), i)));
  }

  const auto& probe_wells = blocks.at(probe_id);
  const Standardizer st = Standardizer::fit(probe_wells);
  for (const auto& w : probe_wells) {
    auto windows = make_windows(st.apply(w), config.model.window, options.mask_class);
    ws.probe.insert(ws.probe.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
  }
  return ws;
}

json to_json(const RunSummary& s) {
  return json{{"final_probe_acc", s.final_probe_acc},
              {"final_probe_macro_f1", s.final_probe_macro_f1},
              {"wall_time", s.wall_time}};
}

namespace {

RunOutput run_with(const ExperimentConfig& config, const RoundFn& on_round) {
  const auto t0 = now();
  Workspace ws = prepare_workspace(config);
  const FederationConfig fed = config.federation();
  const ProbeFn probe = [&](const ModelParams& p) {
    return evaluate_model(p, ws.probe, config.eval_mask, config.absent_class);
  };
  RunOutput out;
  out.federation = run_federation(ws.clients, ws.initial, fed, probe, on_round);
  RunSummary& s = out.summary;
  s.rounds = out.federation.history.rounds.size();
  s.clients = ws.clients.size();
  for (const auto& r : out.federation.history.rounds) {
    s.total_uploads += r.uploaded.size();
    s.max_uploads_per_round = std::max(s.max_uploads_per_round, r.uploaded.size());
  }
  if (!out.federation.history.rounds.empty()) {
    s.final_probe_acc = out.federation.history.rounds.back().probe_accuracy;
    s.final_probe_macro_f1 = out.federation.history.rounds.back().probe_macro_f1;
  }
  s.wall_time = seconds_since(t0);
  return out;
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& config) { return run_with(config, {}); }

void cmd_synth(const ExperimentConfig& config, const std::filesystem::path& out) {
  if (config.generator.classes != config.schema.classes) throw ConfigError("generator.classes differs from schema.classes");
  ensure_dir(out);
  const auto wells = synth_blocks(config.generator, derive_seed(config.seed, "data"));
  json files = json::array();
  std::vector<std::size_t> total(static_cast<std::size_t>(config.schema.classes), 0);
  for (const auto& w : wells) {
    const std::string name = well_filename(w);
    save_well_log(w, out / name, config.schema);
    const auto counts = class_histogram(w, config.schema.classes);
    for (std::size_t c = 0; c < counts.size(); ++c) total[c] += counts[c];
    files.push_back({{"file", name}, {"block", w.block_id}, {"well", w.well_id}, {"records", w.size()},
                     {"class_counts", counts}});
  }
  json manifest{{"seed", config.seed},
                {"generator", config.generator},
                {"schema", config.schema},
                {"wells", files},
                {"class_counts", total}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

RunOutput cmd_train_federated(const ExperimentConfig& config, const std::filesystem::path& out) {
  ensure_dir(out);
  write_text(out / "config.json", json(config).dump(2) + "\n");
  if (config.checkpoint_every_round) ensure_dir(out / "checkpoints");

  std::ofstream history(out / "history.jsonl", std::ios::binary);
  if (!history) throw IoError("cannot write " + (out / "history.jsonl").string());
  const RoundFn on_round = [&](const RoundRecord& r, const ModelParams& global) {
    history << to_json_line(r).dump() << '\n';
    history.flush();
    if (config.checkpoint_every_round) {
      char name[32];
      std::snprintf(name, sizeof(name), "round_%03zu.owlm", r.round);
      save_checkpoint(global, out / "checkpoints" / name);
    }
  };
  RunOutput result = run_with(config, on_round);
  history.close();
  if (!history) throw IoError("failed writing " + (out / "history.jsonl").string());
  save_checkpoint(result.federation.global, out / "model.owlm");
  write_text(out / "summary.json", to_json(result.summary).dump(2) + "\n");
  return result;
}

std::vector<CurvePoint> cmd_finetune_eval(const ExperimentConfig& config,
                                          const std::filesystem::path& checkpoint,
                                          const std::string& target_block, std::size_t rounds,
                                          const std::filesystem::path& out) {
  const ModelParams global = load_checkpoint(checkpoint);
  auto blocks = group_by_block(load_blocks(config));
  const auto it = blocks.find(target_block);
  if (it == blocks.end()) throw ConfigError("target block '" + target_block + "' not found");
  const auto& wells = it->second;
  if (wells.size() < 2) {
    throw ArgumentError("finetune-eval: target block '" + target_block + "' has a single well");
  }
  std::size_t tune_index = 0;
  if (!config.finetune_well.empty()) {
    const auto w = std::find_if(wells.begin(), wells.end(),
                                [&](const auto& s) { return s.well_id == config.finetune_well; });
    if (w == wells.end()) throw ConfigError("fine-tune well '" + config.finetune_well + "' not in block");
    tune_index = static_cast<std::size_t>(w - wells.begin());
  }

  // Statistics of the fine-tune well are the only ones available on site.
  const Standardizer st = Standardizer::fit(std::span<const WellLogSeries>(&wells[tune_index], 1));
  const std::size_t k = global.config.window;
  const auto tune = make_windows(st.apply(wells[tune_index]), k, kDefaultMaskClass);
  std::vector<std::pair<std::string, std::vector<WindowSample>>> tests;
  for (std::size_t i = 0; i < wells.size(); ++i)
    if (i != tune_index) tests.emplace_back(wells[i].well_id, make_windows(st.apply(wells[i]), k, kDefaultMaskClass));

  std::vector<std::vector<CurvePoint>> per_well(tests.size());
  auto record = [&](std::size_t round, const ModelParams& p) {
    for (std::size_t t = 0; t < tests.size(); ++t) {
      const EvalResult e = evaluate_model(p, tests[t].second, config.eval_mask, config.absent_class);
      per_well[t].push_back({tests[t].first, round, e.accuracy, e.macro_f1, 0.0});
    }
  };
  record(0, global);
  const FinetuneResult ft =
      finetune(global, tune, rounds, config.local_train(), derive_seed(config.seed, "finetune"), record);

  std::vector<CurvePoint> points;
  for (auto& curve : per_well)
    for (auto& p : curve) {
      p.finetune_loss = ft.round_loss[p.round];
      points.push_back(p);
    }

  if (!out.empty()) {
    ensure_dir(out);
    std::ostringstream csv;
    csv << "test_well,round,accuracy,macro_f1,finetune_loss\n";
    for (const auto& p : points)
      csv << p.test_well << ',' << p.round << ',' << format_number(p.accuracy) << ','
          << format_number(p.macro_f1) << ',' << format_number(p.finetune_loss) << '\n';
    write_text(out / "curves.csv", csv.str());
    json echo = config;
    echo["finetune"]["rounds"] = rounds;
    write_text(out / "config.json", echo.dump(2) + "\n");
  }
  return points;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationReport cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& out) {
  if (config.ablate.losses.empty() || config.ablate.fusions.empty() || config.ablate.masks.empty() ||
      config.ablate.seeds.empty())
    throw ConfigError("ablate: every grid axis needs at least one value");
  AblationReport report;
  std::ostringstream runs;
  for (LossMode loss : config.ablate.losses)
    for (FusionMode fusion : config.ablate.fusions)
      for (bool mask : config.ablate.masks) {
        AblationCell cell{loss, fusion, mask};
        std::vector<double> acc, f1, wall;
        for (std::uint64_t seed : config.ablate.seeds) {
          ExperimentConfig c = config;
          c.loss_mode = loss;
          c.fusion_mode = fusion;
          c.mask = mask;
          c.seed = seed;
          const RunOutput r = run_experiment(c);
          AblationRun run{loss, fusion, mask, seed, r.summary, {}};
          for (const auto& rec : r.federation.history.rounds) run.weights.push_back(rec.weights);
          acc.push_back(r.summary.final_probe_acc);
          f1.push_back(r.summary.final_probe_macro_f1);
          wall.push_back(r.summary.wall_time);

          json line{{"loss", to_string(loss)}, {"fusion", to_string(fusion)}, {"mask", mask}, {"seed", seed}};
          line.update(to_json(r.summary));
          json weights = json::array();
          for (const auto& rec : r.federation.history.rounds) weights.push_back(to_json_line(rec)["weights"]);
          line["weights"] = weights;
          runs << line.dump() << '\n';
          report.runs.push_back(std::move(run));
        }
        cell.median_acc = median(acc);
        cell.median_macro_f1 = median(f1);
        cell.median_wall_time = median(wall);
        cell.seeds = config.ablate.seeds.size();
        report.cells.push_back(cell);
      }

  if (!out.empty()) {
    ensure_dir(out);
    write_text(out / "config.json", json(config).dump(2) + "\n");
    write_text(out / "runs.jsonl", runs.str());
    std::ostringstream csv;
    csv << "loss,fusion,mask,seeds,acc,macro_f1,wall_time\n";
    for (const auto& c : report.cells)
      csv << to_string(c.loss) << ',' << to_string(c.fusion) << ',' << (c.mask ? "on" : "off") << ','
          << c.seeds << ',' << format_number(c.median_acc) << ',' << format_number(c.median_macro_f1) << ','
          << format_number(c.median_wall_time) << '\n';
    write_text(out / "ablation.csv", csv.str());
  }
  return report;
}

}  // namespace owlfed
