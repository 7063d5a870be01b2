// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "owlfed/checkpoint.hpp"
#include "owlfed/errors.hpp"
#include "owlfed/experiment.hpp"
#include "owlfed/gradcheck_suite.hpp"
#include "owlfed/loss.hpp"
#include "owlfed/rng.hpp"

using namespace owlfed;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Small but complete federation: three client blocks and a probe block.
ExperimentConfig small_experiment(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.generator = field_generator_spec(2, 0.1);
  c.generator.blocks.resize(4);
  c.model.layers = 1;
  c.model.width = 8;
  c.model.heads = 2;
  c.model.ffn_width = 16;
  c.model.window = 7;
  c.epochs = 1;
  c.batch_size = 32;
  c.optimizer.learning_rate = 3e-3;
  c.checkpoint_every_round = false;
  return c;
}

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  GradcheckOptions opt;
  opt.draws = 100;
  const auto lines = run_gradcheck_suite(opt);
  const double secs = seconds_since(start);
  bool ok = secs <= 60.0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& l : lines) {
    ok = ok && l.passed && l.draws >= 100 && l.max_relative_error <= 1e-4;
    if (l.max_relative_error >= worst) {
      worst = l.max_relative_error;
      worst_name = l.name;
    }
  }
  return {ok, std::to_string(lines.size()) + " checks x 100 draws, worst " + fmt("%.2e", worst) + " (" +
                  worst_name + "), " + fmt("%.1f", secs) + " s"};
}

Outcome loss_spot_checks() {
  const Tensor2 y{{1.0}}, p{{0.5}};
  const std::vector<double> fg{0.5};
  const double f = f_loss(y, p, fg).loss;
  bool ok = std::abs(f - 0.5199) <= 1e-4;
  ok = ok && cb_weight(0.0, 0.9999) == 1.0;
  double prev = cb_weight(0.0, 0.9999);
  bool decreasing = true;
  for (int s = 1; s <= 10000; ++s) {
    const double w = cb_weight(s, 0.9999);
    decreasing = decreasing && w < prev;
    prev = w;
  }
  return {ok && decreasing, "f_loss(1,0.5,0.5)=" + fmt("%.6f", f) + ", cb_weight(0)=" +
                                fmt("%.17g", cb_weight(0.0, 0.9999)) +
                                (decreasing ? ", strictly decreasing on 0..1e4" : ", NOT decreasing")};
}

ClientReport fusion_report(std::string id, double acc, double f, std::size_t size) {
  ClientReport r;
  r.client_id = std::move(id);
  r.accuracy = acc;
  r.f1 = r.f_last = f;
  r.size = size;
  r.uploaded = true;
  return r;
}

Outcome fusion_correctness() {
  const std::vector<ClientReport> example{fusion_report("a", 0.9, 0.8, 100), fusion_report("b", 0.6, 0.4, 50),
                                          fusion_report("c", 0.6, 0.4, 50)};
  const auto w = fusion_weights(example).weights;
  const std::vector<double> expect{0.3825, 0.3087, 0.3087};
  bool ok = true;
  for (std::size_t i = 0; i < 3; ++i) ok = ok && std::abs(w[i] - expect[i]) <= 1e-3;

  Rng rng(derive_seed(0, "acceptance-fusion"));
  std::size_t violations = 0;
  constexpr int kSets = 10000;
  for (int t = 0; t < kSets; ++t) {
    std::vector<ClientReport> rs;
    const std::size_t n = 1 + uniform_index(rng, 10);
    for (std::size_t i = 0; i < n; ++i)
      rs.push_back(fusion_report(std::to_string(i), uniform01(rng), uniform01(rng), 1 + uniform_index(rng, 5000)));
    const auto fw = fusion_weights(rs);
    double sum = 0.0;
    bool positive = true;
    for (double v : fw.weights) {
      positive = positive && v > 0.0;
      sum += v;
    }
    const auto wmax = std::max_element(fw.weights.begin(), fw.weights.end()) - fw.weights.begin();
    const auto cmax = std::max_element(fw.combined.begin(), fw.combined.end()) - fw.combined.begin();
    if (!positive || std::abs(sum - 1.0) > 1e-9 || wmax != cmax) ++violations;
  }
  return {ok && violations == 0, "example w=(" + fmt("%.4f", w[0]) + ", " + fmt("%.4f", w[1]) + ", " +
                                     fmt("%.4f", w[2]) + "), " + std::to_string(violations) + " violations in " +
                                     std::to_string(kSets) + " random sets"};
}

Outcome filtering_semantics() {
  auto cfg = small_experiment(11);
  cfg.rounds = 30;
  // Larger wells than the other small runs so clients keep improving and the
  // monotonicity check sees long upload sequences.
  cfg.generator = field_generator_spec(2, 0.3);
  cfg.generator.blocks.resize(4);
  Workspace ws = prepare_workspace(cfg);

  std::map<std::string, std::vector<double>> uploaded_f1;
  std::size_t empty_rounds = 0, empty_round_changes = 0;
  ModelParams previous = ws.initial;
  auto clients = ws.clients;
  run_federation(clients, ws.initial, cfg.federation(), {}, [&](const RoundRecord& r, const ModelParams& g) {
    for (const auto& c : r.clients)
      if (c.uploaded) uploaded_f1[c.client_id].push_back(c.f1);
    if (r.uploaded.empty()) {
      ++empty_rounds;
      if (!(g == previous)) ++empty_round_changes;
    }
    previous = g;
  });
  bool increasing = true;
  std::size_t uploads = 0, longest = 0;
  for (const auto& [id, seq] : uploaded_f1) {
    uploads += seq.size();
    longest = std::max(longest, seq.size());
    for (std::size_t i = 1; i < seq.size(); ++i) increasing = increasing && seq[i] > seq[i - 1];
  }

  // Forced: no client can beat F_last = 1, so nothing may change.
  auto blocked = ws.clients;
  for (auto& c : blocked) c.f_last = 1.0;
  auto forced_cfg = cfg.federation();
  forced_cfg.rounds = 5;
  const auto forced = run_federation(blocked, ws.initial, forced_cfg);
  const bool identical = forced.global == ws.initial;
  std::size_t forced_uploads = 0;
  for (const auto& r : forced.history.rounds) forced_uploads += r.uploaded.size();

  const bool ok = increasing && longest >= 3 && empty_round_changes == 0 && identical && forced_uploads == 0;
  return {ok, "30 rounds, " + std::to_string(uploads) + " uploads (longest run " + std::to_string(longest) + "), F1 sequences " +
                  (increasing ? "strictly increasing" : "NOT increasing") + ", " + std::to_string(empty_rounds) +
                  " natural empty rounds with " + std::to_string(empty_round_changes) +
                  " changes, forced empty run " + (identical ? "bit-identical" : "CHANGED")};
}

Outcome mask_attention() {
  Rng rng(derive_seed(0, "acceptance-mask"));
  std::size_t weight_violations = 0, output_violations = 0, masked_keys = 0;
  constexpr int kTrials = 1000;
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t k = 3 + uniform_index(rng, 47), dk = 1 + uniform_index(rng, 8);
    Tensor2 q(k, dk), key(k, dk), v(k, dk);
    for (Tensor2* m : {&q, &key, &v})
      for (double& x : m->values()) x = 3.0 * standard_normal(rng);
    Mask mask(k);
    for (auto& m : mask) m = uniform01(rng) < 0.5;
    mask[uniform_index(rng, k)] = 0;
    const auto before = masked_attention(q, key, v, mask, dk);
    for (std::size_t j = 0; j < k; ++j) {
      if (!mask[j]) continue;
      ++masked_keys;
      for (std::size_t r = 0; r < k; ++r) weight_violations += before.weights(r, j) != 0.0;
      for (std::size_t c = 0; c < dk; ++c) v(j, c) = 1e6 * standard_normal(rng);
    }
    const auto after = masked_attention(q, key, v, mask, dk);
    output_violations += !(before.output == after.output);
  }

  // Same property inside the full model on labelled windows.
  ModelConfig mc;
  mc.layers = 2;
  mc.width = 8;
  mc.heads = 2;
  mc.ffn_width = 16;
  mc.window = 9;
  const ModelParams params = init_model(mc);
  std::vector<WindowSample> batch(4);
  for (auto& s : batch) {
    s.matrix = Tensor2(mc.features, mc.window);
    for (double& x : s.matrix.values()) x = standard_normal(rng);
    s.mask.assign(mc.window, 0);
    for (auto& m : s.mask) m = uniform01(rng) < 0.4;
    s.mask[0] = 0;
  }
  const auto out = forward(params, batch, MaskSource::kLabels);
  std::size_t model_violations = 0;
  for (const Tensor2& a : out.cache.attention_weights())
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto& m = batch[r / (mc.heads * mc.window)].mask;
      for (std::size_t j = 0; j < mc.window; ++j) model_violations += m[j] && a(r, j) != 0.0;
    }

  const bool ok = weight_violations == 0 && output_violations == 0 && model_violations == 0;
  return {ok, std::to_string(kTrials) + " random layers, " + std::to_string(masked_keys) + " masked keys, " +
                  std::to_string(weight_violations + model_violations) + " non-zero weights, " +
                  std::to_string(output_violations) + " outputs changed by V perturbation"};
}

Outcome windowing() {
  const auto start = Clock::now();
  Rng rng(derive_seed(0, "acceptance-windows"));
  std::size_t violations = 0;
  constexpr int kPairs = 1000;
  for (int t = 0; t < kPairs; ++t) {
    const std::size_t k = 2 * uniform_index(rng, 40) + 1;
    const std::size_t len = k + uniform_index(rng, 400);
    WellLogSeries s;
    s.well_id = "W";
    s.block_id = "B";
    s.feature_names = {"SP", "CAL", "AC", "RA25", "DEPTH"};
    for (std::size_t i = 0; i < len; ++i) {
      WellLogRecord r;
      r.depth = 1000.0 + kDefaultSpacing * static_cast<double>(i);
      r.features = {standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng), r.depth};
      r.label = static_cast<int>(uniform_index(rng, kDefaultClassCount));
      s.records.push_back(std::move(r));
    }
    const auto w = make_windows(s, k);
    if (w.size() != len - k + 1) ++violations;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i].label != s.records[i + k / 2].label || w[i].source.center_depth != s.records[i + k / 2].depth)
        ++violations;
  }
  const double secs = seconds_since(start);
  const bool ok = violations == 0 && kDefaultWindow == 49 && secs <= 10.0;
  return {ok, std::to_string(kPairs) + " (len, k) pairs, " + std::to_string(violations) + " violations, default k=" +
                  std::to_string(kDefaultWindow) + ", " + fmt("%.2f", secs) + " s"};
}

struct BenchmarkRun {
  double macro_f1 = 0.0;
  double seconds = 0.0;
  std::size_t max_uploads = 0;
  std::size_t clients = 0;
};

struct Benchmark {
  // [variant][seed]
  std::map<std::string, std::vector<BenchmarkRun>> runs;
  std::size_t seeds = 0;
};

Benchmark run_benchmark(std::size_t seeds) {
  const std::vector<std::tuple<std::string, LossMode, FusionMode>> variants{
      {"CE", LossMode::kCrossEntropy, FusionMode::kFilteredDynamic},
      {"CB-CE", LossMode::kClassBalancedCrossEntropy, FusionMode::kFilteredDynamic},
      {"CB-F", LossMode::kClassBalancedFLoss, FusionMode::kFilteredDynamic},
      {"CB-F/FedAvg", LossMode::kClassBalancedFLoss, FusionMode::kPlainAverage},
  };
  Benchmark b;
  b.seeds = seeds;
  for (std::uint64_t seed = 0; seed < seeds; ++seed)
    for (const auto& [name, loss, fusion] : variants) {
      ExperimentConfig c = reference_benchmark_config(seed);
      c.loss_mode = loss;
      c.fusion_mode = fusion;
      const auto start = Clock::now();
      const RunOutput out = run_experiment(c);
      BenchmarkRun r{out.summary.final_probe_macro_f1, seconds_since(start), out.summary.max_uploads_per_round,
                     out.summary.clients};
      std::printf("# seed %llu %-12s macro_f1 %.4f  max_uploads/round %zu/%zu  %.1f s\n",
                  static_cast<unsigned long long>(seed), name.c_str(), r.macro_f1, r.max_uploads, r.clients,
                  r.seconds);
      std::fflush(stdout);
      b.runs[name].push_back(r);
    }
  return b;
}

std::vector<double> f1s(const std::vector<BenchmarkRun>& runs) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.macro_f1);
  return out;
}

Outcome loss_trend(const Benchmark& b) {
  const auto ce = f1s(b.runs.at("CE")), cbce = f1s(b.runs.at("CB-CE")), cbf = f1s(b.runs.at("CB-F"));
  const double m_ce = median(ce), m_cbce = median(cbce), m_cbf = median(cbf);
  std::size_t wins = 0;
  for (std::size_t s = 0; s < b.seeds; ++s) wins += cbf[s] > ce[s];
  double secs = 0.0;
  for (const char* v : {"CE", "CB-CE", "CB-F"})
    for (const auto& r : b.runs.at(v)) secs += r.seconds;
  const bool ok = m_cbf >= m_cbce && m_cbce >= m_ce && wins >= 4 && secs <= 900.0;
  return {ok, "median macro F1 CB-F " + fmt("%.4f", m_cbf) + ", CB-CE " + fmt("%.4f", m_cbce) + ", CE " +
                  fmt("%.4f", m_ce) + "; CB-F > CE in " + std::to_string(wins) + "/" + std::to_string(b.seeds) +
                  " seeds; " + fmt("%.0f", secs) + " s for " + std::to_string(3 * b.seeds) + " runs"};
}

Outcome fusion_trend(const Benchmark& b) {
  const auto filtered = f1s(b.runs.at("CB-F")), fedavg = f1s(b.runs.at("CB-F/FedAvg"));
  std::size_t wins = 0;
  bool bounded = true;
  for (std::size_t s = 0; s < b.seeds; ++s) {
    wins += filtered[s] >= fedavg[s];
    const auto& r = b.runs.at("CB-F")[s];
    bounded = bounded && r.max_uploads <= r.clients;
  }
  const bool ok = wins >= 4 && bounded;
  return {ok, "filtered >= FedAvg in " + std::to_string(wins) + "/" + std::to_string(b.seeds) +
                  " seeds (median " + fmt("%.4f", median(filtered)) + " vs " + fmt("%.4f", median(fedavg)) +
                  "); uploads per round " + (bounded ? "<= client count" : "EXCEED client count")};
}

// Static half: compile-time rejection of data-bearing types at the server.
static_assert(!ServerReceivable<WellLogRecord>);
static_assert(!ServerReceivable<WellLogSeries>);
static_assert(!ServerReceivable<WindowSample>);
static_assert(!ServerReceivable<std::vector<WindowSample>>);
static_assert(!ServerReceivable<DataSplit>);
static_assert(!ServerReceivable<ClientState>);
static_assert(!ServerReceivable<ClientReport>);
static_assert(is_data_bearing_v<std::span<const WindowSample>>);
static_assert(!is_data_bearing_v<ClientReport>);

Outcome data_isolation() {
  auto cfg = small_experiment(5);
  Workspace ws = prepare_workspace(cfg);
  Server server(ws.initial, FusionMode::kFilteredDynamic);
  std::size_t expected_bytes = 0, size_mismatches = 0, smuggled_accepted = 0;
  for (std::size_t i = 0; i < ws.clients.size(); ++i) {
    const ClientReport r =
        client_round(ws.clients[i], decode_checkpoint(server.dispatch()), cfg.local_train(), server.mode(), 1);
    const auto msg = wire::encode_report(r);
    const std::size_t want = wire::expected_report_size(
        r.client_id.size(), r.params ? std::optional<std::size_t>(r.params->parameter_count()) : std::nullopt);
    size_mismatches += msg.size() != want;
    // A message carrying anything beyond the scalars and the model must bounce.
    auto smuggled = msg;
    const auto& sample = ws.clients[i].split.train.front().matrix.values();
    for (double v : sample) le::put_f64(smuggled, v);
    try {
      server.receive(smuggled);
      ++smuggled_accepted;
    } catch (const FormatError&) {
    }
    server.receive(msg);
    expected_bytes += want;
  }
  server.close_round();
  const bool ok = size_mismatches == 0 && smuggled_accepted == 0 && server.bytes_received() == expected_bytes;
  return {ok, "static traits hold; " + std::to_string(ws.clients.size()) + " reports of exact length, " +
                  std::to_string(smuggled_accepted) + " padded reports accepted, server received " +
                  std::to_string(server.bytes_received()) + "/" + std::to_string(expected_bytes) + " bytes"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  std::random_device rd;
  const fs::path root = fs::temp_directory_path() / ("owlfed_accept_" + std::to_string(rd()));
  ExperimentConfig c = reference_benchmark_config(3);
  c.rounds = 4;
  cmd_train_federated(c, root / "a");
  cmd_train_federated(c, root / "b");
  const std::string a = slurp(root / "a" / "history.jsonl"), b = slurp(root / "b" / "history.jsonl");
  const bool ok = !a.empty() && a == b;
  const auto lines = std::count(a.begin(), a.end(), '\n');
  std::error_code ec;
  fs::remove_all(root, ec);
  return {ok, "history.jsonl " + std::to_string(a.size()) + " bytes, " + std::to_string(lines) + " rounds, " +
                  (ok ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"owlfed acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient-fidelity"}, {2, "loss-spot-checks"}, {3, "fusion-correctness"},
      {4, "filtering-semantics"}, {5, "mask-attention"}, {6, "windowing"},
      {7, "loss-trend"}, {8, "fusion-trend"}, {9, "data-isolation"}, {10, "determinism"}};

  std::optional<Benchmark> bench;
  auto benchmark = [&]() -> const Benchmark& {
    if (!bench) bench = run_benchmark(5);
    return *bench;
  };
  const std::map<int, std::function<Outcome()>> criteria{
      {1, gradient_fidelity},
      {2, loss_spot_checks},
      {3, fusion_correctness},
      {4, filtering_semantics},
      {5, mask_attention},
      {6, windowing},
      {7, [&] { return loss_trend(benchmark()); }},
      {8, [&] { return fusion_trend(benchmark()); }},
      {9, data_isolation},
      {10, determinism},
  };

  int failed = 0;
  for (const auto& [id, name] : names) {
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria.at(id)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %-20s %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
