// SPDX-License-Identifier: Apache-2.0
// owlfed command-line driver.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "owlfed/errors.hpp"
#include "owlfed/experiment.hpp"
#include "owlfed/gradcheck_suite.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kGradcheckFailed = 3 };

struct CommonFlags {
  std::string config;
  std::string preset = "default";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* sub, CommonFlags& f, bool needs_out) {
  sub->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--preset", f.preset, "Base config when --config is absent")
      ->check(CLI::IsMember({"default", "reference"}));
  sub->add_option("--seed", f.seed, "Root seed (overrides the config)");
  auto* out = sub->add_option("--out", f.out, "Output directory");
  if (needs_out) out->required();
  sub->add_option("--workers", f.workers, "Concurrent client rounds (default: one per client)")
      ->check(CLI::PositiveNumber);
}

owlfed::ExperimentConfig resolve(const CommonFlags& f) {
  owlfed::ExperimentConfig c = !f.config.empty()         ? owlfed::load_experiment_config(f.config)
                               : f.preset == "reference" ? owlfed::reference_benchmark_config(0)
                                                         : owlfed::ExperimentConfig{};
  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  c.validate();
  return c;
}

int run_gradcheck(std::uint64_t seed, std::size_t draws, const std::string& corrupt) {
  owlfed::GradcheckOptions opt;
  opt.seed = seed;
  opt.draws = draws;
  opt.corrupt = corrupt;
  bool ok = true;
  for (const auto& line : owlfed::run_gradcheck_suite(opt)) {
    std::printf("%s %-18s draws=%zu max_rel_err=%.3e\n", line.passed ? "PASS" : "FAIL", line.name.c_str(),
                line.draws, line.max_relative_error);
    ok = ok && line.passed;
  }
  std::fflush(stdout);
  return ok ? kOk : kGradcheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated oil-water layer identification experiments"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, tune_f, ablate_f;
  auto* synth = app.add_subcommand("synth", "Generate synthetic well-log CSVs and a manifest");
  add_common(synth, synth_f, true);

  auto* train = app.add_subcommand("train-federated", "Run federated training and write reports");
  add_common(train, train_f, true);

  auto* tune = app.add_subcommand("finetune-eval", "Fine-tune a checkpoint on one well and trace test curves");
  add_common(tune, tune_f, true);
  std::string checkpoint, target;
  std::optional<std::size_t> tune_rounds;
  tune->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  tune->add_option("--target", target, "Target block id")->required();
  tune->add_option("--rounds", tune_rounds, "Fine-tune rounds (default from config)");

  auto* ablate = app.add_subcommand("ablate", "Run the loss x fusion x mask grid");
  add_common(ablate, ablate_f, true);

  auto* grad = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
  std::uint64_t grad_seed = 0;
  std::size_t draws = 100;
  std::string corrupt;
  grad->add_option("--seed", grad_seed, "Seed for the random draws");
  grad->add_option("--draws", draws, "Random draws per check")->check(CLI::PositiveNumber);
  grad->add_option("--corrupt", corrupt, "Harness self-test: corrupt the named check's gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      const auto c = resolve(synth_f);
      owlfed::cmd_synth(c, synth_f.out);
      std::cerr << "wrote synthetic wells to " << synth_f.out << '\n';
    } else if (*train) {
      const auto c = resolve(train_f);
      const auto r = owlfed::cmd_train_federated(c, train_f.out);
      std::cerr << "final probe acc " << r.summary.final_probe_acc << ", macro F1 "
                << r.summary.final_probe_macro_f1 << " (" << r.summary.wall_time << " s)\n";
    } else if (*tune) {
      const auto c = resolve(tune_f);
      const auto points =
          owlfed::cmd_finetune_eval(c, checkpoint, target, tune_rounds.value_or(c.finetune_rounds), tune_f.out);
      std::cerr << "wrote " << points.size() << " curve points to " << tune_f.out << "/curves.csv\n";
    } else if (*ablate) {
      const auto c = resolve(ablate_f);
      const auto report = owlfed::cmd_ablate(c, ablate_f.out);
      std::cerr << "wrote " << report.cells.size() << " cells to " << ablate_f.out << "/ablation.csv\n";
    } else if (*grad) {
      return run_gradcheck(grad_seed, draws, corrupt);
    }
  } catch (const owlfed::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
