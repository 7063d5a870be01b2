// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "owlfed/data.hpp"
#include "owlfed/model.hpp"
#include "owlfed/training.hpp"

namespace owlfed {

enum class FusionMode {
  kFilteredDynamic,  ///< F1-gated uploads, softmax(Acc, F, Size) weights
  kPlainAverage,     ///< FedAvg: every client uploads, uniform weights
};

/// Accepts "filtered-dynamic" and "plain-average" (alias "fedavg").
FusionMode parse_fusion_mode(std::string_view name);
std::string_view to_string(FusionMode mode);

/// One federated participant. Its data never leaves this struct.
struct ClientState {
  std::string id;
  DataSplit split;
  ModelParams params;
  /// Best F1 uploaded so far; starts at 0 and only rises.
  double f_last = 0.0;
  OptimState optim;
  std::uint64_t seed = 0;
};

ClientState make_client(std::string id, DataSplit split, const OptimizerConfig& optimizer,
                        std::uint64_t seed);

/// What a client sends after a round. params is present iff uploaded.
struct ClientReport {
  std::string client_id;
  double accuracy = 0.0;
  double f1 = 0.0;
  /// F_last after this round (equals f1 when uploaded under filtering).
  double f_last = 0.0;
  std::size_t size = 0;
  bool uploaded = false;
  std::optional<ModelParams> params;
};

/// Adopts the global model, trains for the configured epochs, evaluates on
/// the held-out well and applies the upload rule (strict F1 > F_last under
/// filtering, always under plain averaging). round seeds the shuffling.
/// Throws ArgumentError on an empty train split.
ClientReport client_round(ClientState& state, const ModelParams& global,
                          const LocalTrainConfig& config, FusionMode mode, std::size_t round);

struct FusionWeights {
  std::vector<double> weights;
  /// Combined score c_i before the softmax.
  std::vector<double> combined;
  /// Metrics whose total was zero and were replaced by the uniform share.
  std::vector<std::string> degenerate;
};

/// alpha = Acc/sum Acc, mu = F_last/sum F_last, nu = Size/sum Size,
/// c = (alpha + mu + nu) / 3, w = softmax(c). Throws ArgumentError on an empty
/// set or a negative or non-finite metric.
FusionWeights fusion_weights(std::span<const ClientReport> reports);

/// Parameter-wise sum_i w_i theta_i, evaluated as theta_0 + sum_{i>0} w_i (theta_i - theta_0)
/// in list order so identical inputs come back bit-exactly. Throws ArgumentError
/// on shape mismatch, count mismatch, negative weights or |sum w - 1| > 1e-9.
ModelParams aggregate(std::span<const ModelParams> models, std::span<const double> weights);

/// Types that carry well-log records or windows. None of them may reach the server.
template <class T> struct is_data_bearing : std::false_type {};
template <> struct is_data_bearing<WellLogRecord> : std::true_type {};
template <> struct is_data_bearing<WellLogSeries> : std::true_type {};
template <> struct is_data_bearing<WindowSample> : std::true_type {};
template <> struct is_data_bearing<DataSplit> : std::true_type {};
template <> struct is_data_bearing<ClientState> : std::true_type {};
template <class T> struct is_data_bearing<std::vector<T>> : is_data_bearing<T> {};
template <class T> struct is_data_bearing<std::span<T>> : is_data_bearing<std::remove_cv_t<T>> {};
template <class T>
inline constexpr bool is_data_bearing_v = is_data_bearing<std::remove_cvref_t<T>>::value;

namespace wire {

/// Client -> server report:
///   "OWLR" | version u8 | uploaded u8 | 2 reserved | id length u64 | id bytes |
///   accuracy f64 | f1 f64 | f_last f64 | size u64 | [checkpoint bytes if uploaded]
/// Only scalars and, optionally, one model cross the boundary.
std::vector<std::byte> encode_report(const ClientReport& report);
/// Rejects any message whose length differs from the exact length implied
/// by its header and model config (FormatError).
ClientReport decode_report(std::span<const std::byte> message);
/// Byte length a report with these fields must have.
std::size_t expected_report_size(std::size_t id_length, std::optional<std::size_t> parameter_count);

}  // namespace wire

struct RoundOutcome {
  std::vector<std::string> uploaded;
  /// Fusion weight per uploaded client, in upload order.
  std::vector<std::pair<std::string, double>> weights;
  std::vector<std::string> degenerate;
  bool skipped = false;
};

/// Holds the global model. It only ever sees encoded bytes: dispatch() hands
/// the model out, receive() takes a client report, close_round() fuses.
class Server {
 public:
  Server(ModelParams initial, FusionMode mode);

  std::vector<std::byte> dispatch() const;
  void receive(std::span<const std::byte> message);
  /// Fuses the uploads received since the last close. With no uploads the
  /// global model is left untouched and the round is marked skipped.
  RoundOutcome close_round();

  const ModelParams& global() const noexcept { return global_; }
  FusionMode mode() const noexcept { return mode_; }
  /// Mirror of each client's F_last as reported.
  const std::map<std::string, double>& f_last_mirror() const noexcept { return f_last_; }
  std::size_t bytes_received() const noexcept { return bytes_received_; }

 private:
  ModelParams global_;
  FusionMode mode_;
  std::vector<ClientReport> pending_;
  std::map<std::string, double> f_last_;
  std::size_t bytes_received_ = 0;
};

template <class T>
concept ServerReceivable = requires(Server& s, const T& t) { s.receive(t); };

struct ClientRoundSummary {
  std::string client_id;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t size = 0;
  bool uploaded = false;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::string> uploaded;
  std::vector<std::pair<std::string, double>> weights;
  double probe_accuracy = 0.0;
  double probe_macro_f1 = 0.0;
  bool skipped = false;
  std::vector<std::string> degenerate;
  std::vector<ClientRoundSummary> clients;
};

struct RoundHistory {
  std::vector<RoundRecord> rounds;
};

/// {round, uploaded, weights, probe_acc, probe_macro_f1}
nlohmann::json to_json_line(const RoundRecord& record);
std::string history_jsonl(const RoundHistory& history);

struct FederationConfig {
  std::size_t rounds = 30;
  FusionMode mode = FusionMode::kFilteredDynamic;
  LocalTrainConfig train;
  /// Concurrent client rounds; 0 means one per client.
  std::size_t workers = 0;
};

/// Evaluates the global model on a fixed probe set owned by the caller.
using ProbeFn = std::function<EvalResult(const ModelParams&)>;
/// Called after each round with the record and the new global model.
using RoundFn = std::function<void(const RoundRecord&, const ModelParams&)>;

struct FederationResult {
  ModelParams global;
  RoundHistory history;
};

/// Synchronous rounds: dispatch, client rounds (in parallel up to workers),
/// fusion over the uploaded subset, aggregation. Deterministic in the client
/// seeds regardless of worker count.
FederationResult run_federation(std::vector<ClientState>& clients, const ModelParams& initial,
                                const FederationConfig& config, const ProbeFn& probe = {},
                                const RoundFn& on_round = {});

}  // namespace owlfed
