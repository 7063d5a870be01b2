// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "owlfed/data.hpp"

namespace owlfed {

/// One synthetic block (fault-separated region, one federated client).
struct BlockSpec {
  std::string id;
  std::size_t wells = 3;
  std::size_t records_per_well = 1000;
  /// Relative class frequencies; normalized internally.
  std::vector<double> class_weights;
  /// Additive shift per log curve (SP, CAL, AC, RA25); shorter vectors are zero-padded.
  std::vector<double> mean_shift;
  /// Fraction of layers recorded under a wrong class (interpretation errors).
  /// The logs still follow the true class. 0 keeps every label.
  double label_noise = 0.0;
};

/// Generator for layered, long-tailed well logs. Every well is a stack of
/// layers; each class receives exactly its largest-remainder share of the
/// well's records, cut into layers of random thickness and stacked in random
/// order. Log curves follow per-class profiles plus the block shift and AR(1)
/// noise, with profiles blended over a few samples at layer boundaries.
/// The DEPTH feature is the record depth itself.
struct GeneratorSpec {
  int classes = kDefaultClassCount;
  double spacing = kDefaultSpacing;
  double start_depth = 1500.0;
  std::size_t min_layer = 6;
  std::size_t max_layer = 40;
  /// classes x 4 mean (SP, CAL, AC, RA25) per class.
  std::vector<std::vector<double>> class_profiles;
  /// Noise standard deviation per curve.
  std::vector<double> noise_sd;
  /// AR(1) coefficient of the noise along depth.
  double noise_correlation = 0.6;
  /// Half-width (samples) of the profile blend at layer boundaries.
  std::size_t boundary_blend = 2;
  std::vector<BlockSpec> blocks;
};

inline constexpr std::size_t kLogCurves = 4;
const std::vector<std::string>& default_feature_names();
std::vector<std::vector<double>> default_class_profiles();
std::vector<double> default_noise_sd();

void to_json(nlohmann::json& j, const BlockSpec& b);
void from_json(const nlohmann::json& j, BlockSpec& b);
void to_json(nlohmann::json& j, const GeneratorSpec& g);
void from_json(const nlohmann::json& j, GeneratorSpec& g);

/// Largest-remainder apportionment of total over weights.
std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total);

/// All wells of all blocks, block-major, deterministic in seed.
/// Throws ArgumentError for zero classes or an all-zero weight vector.
std::vector<WellLogSeries> synth_blocks(const GeneratorSpec& spec, std::uint64_t seed);

/// Five blocks B1..B5 whose per-well class counts follow the oil-field well
/// statistics (B1: 5/203/736/66/31 and so on). With scale 1 every well holds
/// exactly those counts.
GeneratorSpec field_generator_spec(std::size_t wells_per_block = 3, double scale = 1.0);

}  // namespace owlfed
