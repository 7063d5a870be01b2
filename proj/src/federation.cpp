// SPDX-License-Identifier: Apache-2.0
#include "owlfed/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <thread>

#include "owlfed/checkpoint.hpp"
#include "owlfed/errors.hpp"

namespace owlfed {

static_assert(is_data_bearing_v<WindowSample> && is_data_bearing_v<std::vector<WindowSample>> &&
              is_data_bearing_v<const DataSplit&> && is_data_bearing_v<WellLogSeries>);
static_assert(!is_data_bearing_v<ModelParams> && !is_data_bearing_v<ClientReport>);
// The server interface accepts bytes only.
static_assert(!ServerReceivable<WindowSample> && !ServerReceivable<std::vector<WindowSample>> &&
              !ServerReceivable<DataSplit> && !ServerReceivable<WellLogSeries> &&
              !ServerReceivable<ClientState> && !ServerReceivable<ClientReport>);
static_assert(ServerReceivable<std::vector<std::byte>>);

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "filtered-dynamic") return FusionMode::kFilteredDynamic;
  if (name == "plain-average" || name == "fedavg") return FusionMode::kPlainAverage;
  throw ArgumentError("unknown fusion mode '" + std::string(name) +
                      "' (expected filtered-dynamic|plain-average)");
}

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::kFilteredDynamic ? "filtered-dynamic" : "plain-average";
}

ClientState make_client(std::string id, DataSplit split, const OptimizerConfig& optimizer,
                        std::uint64_t seed) {
  ClientState s;
  s.id = std::move(id);
  s.split = std::move(split);
  s.optim.config = optimizer;
  s.seed = seed;
  return s;
}

ClientReport client_round(ClientState& state, const ModelParams& global,
                          const LocalTrainConfig& config, FusionMode mode, std::size_t round) {
  if (state.split.train.empty()) throw ArgumentError("client " + state.id + ": empty train split");
  if (state.split.test.empty()) throw ArgumentError("client " + state.id + ": empty held-out split");
  const std::vector<const WindowSample*> samples = trainable(state.split.train, config.train_mask);
  if (samples.empty()) throw ArgumentError("client " + state.id + ": every train window is fully masked");

  state.params = global;
  LossConfig loss;
  loss.beta = config.beta;
  loss.mode = config.loss_mode;
  loss.class_counts = state.split.class_counts;
  Rng rng(derive_seed(derive_seed(state.seed, "round"), static_cast<std::uint64_t>(round)));
  for (std::size_t e = 0; e < config.epochs; ++e)
    train_epoch(state.params, state.optim, samples, loss, config, rng);

  const EvalResult eval = evaluate_model(state.params, state.split.test, config.eval_mask, config.absent_class);
  ClientReport report;
  report.client_id = state.id;
  report.accuracy = eval.accuracy;
  report.f1 = eval.macro_f1;
  report.size = state.split.train.size();
  if (mode == FusionMode::kPlainAverage) {
    report.uploaded = true;
  } else if (eval.macro_f1 > state.f_last) {
    report.uploaded = true;
    state.f_last = eval.macro_f1;
  }
  report.f_last = state.f_last;
  if (report.uploaded) report.params = state.params;
  return report;
}

FusionWeights fusion_weights(std::span<const ClientReport> reports) {
  if (reports.empty()) throw ArgumentError("fusion_weights: no uploaded reports");
  const std::size_t n = reports.size();
  double acc_sum = 0.0, f_sum = 0.0, size_sum = 0.0;
  for (const auto& r : reports) {
    if (!(std::isfinite(r.accuracy) && r.accuracy >= 0.0 && std::isfinite(r.f_last) && r.f_last >= 0.0)) {
      throw ArgumentError("fusion_weights: client " + r.client_id + " reports an invalid metric");
    }
    acc_sum += r.accuracy;
    f_sum += r.f_last;
    size_sum += static_cast<double>(r.size);
  }
  FusionWeights out;
  const double uniform = 1.0 / static_cast<double>(n);
  if (acc_sum == 0.0) out.degenerate.push_back("accuracy");
  if (f_sum == 0.0) out.degenerate.push_back("f1");
  if (size_sum == 0.0) out.degenerate.push_back("size");
  out.combined.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = acc_sum == 0.0 ? uniform : reports[i].accuracy / acc_sum;
    const double mu = f_sum == 0.0 ? uniform : reports[i].f_last / f_sum;
    const double nu = size_sum == 0.0 ? uniform : static_cast<double>(reports[i].size) / size_sum;
    out.combined[i] = (alpha + mu + nu) / 3.0;
  }
  const double top = *std::max_element(out.combined.begin(), out.combined.end());
  out.weights.resize(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += out.weights[i] = std::exp(out.combined[i] - top);
  for (double& w : out.weights) w /= z;
  return out;
}

ModelParams aggregate(std::span<const ModelParams> models, std::span<const double> weights) {
  if (models.empty()) throw ArgumentError("aggregate: no models");
  if (models.size() != weights.size()) {
    throw ArgumentError("aggregate: " + std::to_string(models.size()) + " models vs " +
                        std::to_string(weights.size()) + " weights");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(std::isfinite(w) && w >= 0.0)) throw ArgumentError("aggregate: weights must be finite and >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("aggregate: weights sum to " + std::to_string(sum));
  for (std::size_t i = 1; i < models.size(); ++i)
    if (!models[0].congruent(models[i])) {
      throw DimensionError("aggregate: model " + std::to_string(i) + " is not congruent with model 0");
    }

  ModelParams out = models[0];
  std::vector<Tensor2*> dst = out.tensors();
  const std::vector<const Tensor2*> base = models[0].tensors();
  for (std::size_t i = 1; i < models.size(); ++i) {
    const std::vector<const Tensor2*> src = models[i].tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
      auto d = dst[t]->values();
      auto s = src[t]->values();
      auto b = base[t]->values();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += weights[i] * (s[j] - b[j]);
    }
  }
  return out;
}

namespace wire {

namespace {
constexpr char kMagic[4] = {'O', 'W', 'L', 'R'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kPrefixBytes = 8 + 8;  // magic/version/flags/reserved, id length
constexpr std::size_t kScalarBytes = 4 * 8;  // accuracy, f1, f_last, size
constexpr std::size_t kMaxIdLength = 4096;
}  // namespace

std::size_t expected_report_size(std::size_t id_length, std::optional<std::size_t> parameter_count) {
  std::size_t n = kPrefixBytes + id_length + kScalarBytes;
  if (parameter_count) n += kCheckpointHeaderBytes + 8 * *parameter_count;
  return n;
}

std::vector<std::byte> encode_report(const ClientReport& report) {
  if (report.uploaded != report.params.has_value()) {
    throw StateError("encode_report: params must be present exactly when uploaded");
  }
  std::vector<std::byte> out;
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  out.push_back(static_cast<std::byte>(kVersion));
  out.push_back(static_cast<std::byte>(report.uploaded ? 1 : 0));
  out.insert(out.end(), 2, std::byte{0});
  le::put_u64(out, report.client_id.size());
  for (char c : report.client_id) out.push_back(static_cast<std::byte>(c));
  le::put_f64(out, report.accuracy);
  le::put_f64(out, report.f1);
  le::put_f64(out, report.f_last);
  le::put_u64(out, report.size);
  if (report.params) {
    const auto model = encode_checkpoint(*report.params);
    out.insert(out.end(), model.begin(), model.end());
  }
  return out;
}

ClientReport decode_report(std::span<const std::byte> message) {
  if (message.size() < kPrefixBytes) throw FormatError("report: truncated header");
  if (std::memcmp(message.data(), kMagic, 4) != 0) throw FormatError("report: bad magic");
  if (std::to_integer<std::uint8_t>(message[4]) != kVersion) throw FormatError("report: unsupported version");
  const auto flag = std::to_integer<std::uint8_t>(message[5]);
  if (flag > 1) throw FormatError("report: bad upload flag");
  const std::uint64_t id_length = le::get_u64(message, 8);
  if (id_length > kMaxIdLength) throw FormatError("report: client id too long");

  ClientReport r;
  r.uploaded = flag == 1;
  std::size_t offset = kPrefixBytes;
  if (message.size() < expected_report_size(id_length, std::nullopt)) throw FormatError("report: truncated body");
  r.client_id.resize(id_length);
  std::memcpy(r.client_id.data(), message.data() + offset, id_length);
  offset += id_length;
  r.accuracy = le::get_f64(message, offset);
  r.f1 = le::get_f64(message, offset + 8);
  r.f_last = le::get_f64(message, offset + 16);
  r.size = le::get_u64(message, offset + 24);
  offset += kScalarBytes;

  std::optional<std::size_t> count;
  if (r.uploaded) {
    r.params = decode_checkpoint(message.subspan(offset));
    count = r.params->parameter_count();
  }
  // Nothing beyond the declared scalars and model may ride along.
  if (message.size() != expected_report_size(id_length, count)) {
    throw FormatError("report: " + std::to_string(message.size()) + " bytes, expected exactly " +
                      std::to_string(expected_report_size(id_length, count)));
  }
  return r;
}

}  // namespace wire

Server::Server(ModelParams initial, FusionMode mode) : global_(std::move(initial)), mode_(mode) {
  global_.config.validate();
}

std::vector<std::byte> Server::dispatch() const { return encode_checkpoint(global_); }

void Server::receive(std::span<const std::byte> message) {
  ClientReport r = wire::decode_report(message);
  if (r.params && !r.params->congruent(global_)) {
    throw FormatError("server: model from client " + r.client_id + " does not match the global config");
  }
  bytes_received_ += message.size();
  f_last_[r.client_id] = r.f_last;
  pending_.push_back(std::move(r));
}

RoundOutcome Server::close_round() {
  std::vector<ClientReport> uploads;
  for (auto& r : pending_)
    if (r.uploaded) uploads.push_back(std::move(r));
  pending_.clear();

  RoundOutcome out;
  if (uploads.empty()) {
    out.skipped = true;
    return out;
  }
  std::vector<double> w;
  if (mode_ == FusionMode::kPlainAverage) {
    w.assign(uploads.size(), 1.0 / static_cast<double>(uploads.size()));
  } else {
    FusionWeights fw = fusion_weights(uploads);
    w = std::move(fw.weights);
    out.degenerate = std::move(fw.degenerate);
  }
  std::vector<ModelParams> models;
  models.reserve(uploads.size());
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    out.uploaded.push_back(uploads[i].client_id);
    out.weights.emplace_back(uploads[i].client_id, w[i]);
    models.push_back(std::move(*uploads[i].params));
  }
  global_ = aggregate(models, w);
  return out;
}

nlohmann::json to_json_line(const RoundRecord& record) {
  nlohmann::json weights = nlohmann::json::object();
  for (const auto& [id, w] : record.weights) weights[id] = w;
  return nlohmann::json{{"round", record.round},
                        {"uploaded", record.uploaded},
                        {"weights", weights},
                        {"probe_acc", record.probe_accuracy},
                        {"probe_macro_f1", record.probe_macro_f1}};
}

std::string history_jsonl(const RoundHistory& history) {
  std::string out;
  for (const auto& r : history.rounds) {
    out += to_json_line(r).dump();
    out += '\n';
  }
  return out;
}

namespace {

// Runs job(i) for i in [0, n) on up to `workers` threads; rethrows the
// lowest-index failure.
template <class Job>
void parallel_for(std::size_t n, std::size_t workers, const Job& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::min(workers, n); ++t) threads.emplace_back(drain);
  drain();
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

FederationResult run_federation(std::vector<ClientState>& clients, const ModelParams& initial,
                                const FederationConfig& config, const ProbeFn& probe,
                                const RoundFn& on_round) {
  if (clients.empty()) throw ArgumentError("run_federation: no clients");
  Server server(initial, config.mode);
  const std::size_t workers = config.workers == 0 ? clients.size() : config.workers;
  FederationResult result;
  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const std::vector<std::byte> dispatched = server.dispatch();
    std::vector<std::vector<std::byte>> messages(clients.size());
    std::vector<ClientRoundSummary> summaries(clients.size());
    parallel_for(clients.size(), workers, [&](std::size_t i) {
      const ModelParams global = decode_checkpoint(dispatched);
      const ClientReport report = client_round(clients[i], global, config.train, config.mode, round);
      summaries[i] = {report.client_id, report.accuracy, report.f1, report.size, report.uploaded};
      messages[i] = wire::encode_report(report);
    });
    for (const auto& m : messages) server.receive(m);
    RoundOutcome outcome = server.close_round();

    RoundRecord record;
    record.round = round;
    record.uploaded = std::move(outcome.uploaded);
    record.weights = std::move(outcome.weights);
    record.skipped = outcome.skipped;
    record.degenerate = std::move(outcome.degenerate);
    record.clients = std::move(summaries);
    if (probe) {
      const EvalResult eval = probe(server.global());
      record.probe_accuracy = eval.accuracy;
      record.probe_macro_f1 = eval.macro_f1;
    }
    if (on_round) on_round(record, server.global());
    result.history.rounds.push_back(std::move(record));
  }
  result.global = server.global();
  return result;
}

}  // namespace owlfed
