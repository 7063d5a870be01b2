// SPDX-License-Identifier: Apache-2.0
#include "owlfed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "owlfed/errors.hpp"
#include "owlfed/rng.hpp"

namespace owlfed {

const std::vector<std::string>& default_feature_names() {
  static const std::vector<std::string> names{"SP", "CAL", "AC", "RA25", "DEPTH"};
  return names;
}

std::vector<std::vector<double>> default_class_profiles() {
  // SP (mV), CAL (in), AC (us/ft), RA25 (ohm.m)
  return {
      {-62.0, 8.50, 250.0, 30.0},  // oil
      {-18.0, 9.40, 218.0, 14.0},  // dry
      {-66.0, 8.50, 262.0, 5.0},   // water
      {-64.0, 8.50, 258.0, 10.0},  // oily water
      {-63.0, 8.50, 254.0, 18.0},  // oil and water
  };
}

std::vector<double> default_noise_sd() { return {6.0, 0.2, 7.0, 3.0}; }

void to_json(nlohmann::json& j, const BlockSpec& b) {
  j = nlohmann::json{{"id", b.id},
                     {"wells", b.wells},
                     {"records_per_well", b.records_per_well},
                     {"class_weights", b.class_weights},
                     {"mean_shift", b.mean_shift},
                     {"label_noise", b.label_noise}};
}

void from_json(const nlohmann::json& j, BlockSpec& b) {
  b = BlockSpec{};
  b.id = j.at("id").get<std::string>();
  b.wells = j.value("wells", b.wells);
  b.records_per_well = j.value("records_per_well", b.records_per_well);
  b.class_weights = j.at("class_weights").get<std::vector<double>>();
  b.mean_shift = j.value("mean_shift", std::vector<double>{});
  b.label_noise = j.value("label_noise", 0.0);
}

void to_json(nlohmann::json& j, const GeneratorSpec& g) {
  j = nlohmann::json{{"classes", g.classes},
                     {"spacing", g.spacing},
                     {"start_depth", g.start_depth},
                     {"min_layer", g.min_layer},
                     {"max_layer", g.max_layer},
                     {"class_profiles", g.class_profiles},
                     {"noise_sd", g.noise_sd},
                     {"noise_correlation", g.noise_correlation},
                     {"boundary_blend", g.boundary_blend},
                     {"blocks", g.blocks}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& g) {
  g = GeneratorSpec{};
  g.classes = j.value("classes", g.classes);
  g.spacing = j.value("spacing", g.spacing);
  g.start_depth = j.value("start_depth", g.start_depth);
  g.min_layer = j.value("min_layer", g.min_layer);
  g.max_layer = j.value("max_layer", g.max_layer);
  g.class_profiles = j.value("class_profiles", std::vector<std::vector<double>>{});
  g.noise_sd = j.value("noise_sd", std::vector<double>{});
  g.noise_correlation = j.value("noise_correlation", g.noise_correlation);
  g.boundary_blend = j.value("boundary_blend", g.boundary_blend);
  g.blocks = j.at("blocks").get<std::vector<BlockSpec>>();
}

std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(sum > 0.0)) {
    throw ArgumentError("apportion: class weights must contain a positive entry");
  }
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    if (weights[c] < 0.0) throw ArgumentError("apportion: negative class weight");
    const double exact = weights[c] / sum * static_cast<double>(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

namespace {

std::vector<int> layer_sequence(const std::vector<std::size_t>& counts, const GeneratorSpec& spec,
                                Rng& rng) {
  struct Layer {
    int label;
    std::size_t thickness;
  };
  std::vector<Layer> layers;
  const std::size_t lo = std::max<std::size_t>(1, spec.min_layer);
  const std::size_t hi = std::max(lo, spec.max_layer);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::size_t rest = counts[c];
    while (rest > 0) {
      std::size_t t;
      if (rest <= hi) {
        t = rest;
      } else {
        const std::size_t top = std::min(hi, rest - lo);
        t = lo + uniform_index(rng, top - lo + 1);
      }
      layers.push_back({static_cast<int>(c), t});
      rest -= t;
    }
  }
  shuffle(layers.begin(), layers.end(), rng);
  std::vector<int> labels;
  for (const auto& l : layers) labels.insert(labels.end(), l.thickness, l.label);
  return labels;
}

WellLogSeries synth_well(const GeneratorSpec& spec, const BlockSpec& block,
                         const std::vector<std::vector<double>>& profiles,
                         const std::vector<double>& noise_sd, std::size_t block_index,
                         std::size_t well_index, std::uint64_t seed) {
  Rng rng(derive_seed(derive_seed(seed, block_index), well_index));
  const auto counts = apportion(block.class_weights, block.records_per_well);
  const auto labels = layer_sequence(counts, spec, rng);
  const std::size_t n = labels.size();

  std::vector<double> shift(kLogCurves, 0.0);
  for (std::size_t f = 0; f < std::min(kLogCurves, block.mean_shift.size()); ++f)
    shift[f] = block.mean_shift[f];

  WellLogSeries series;
  series.block_id = block.id;
  series.well_id = block.id + "-W" + std::to_string(well_index + 1);
  series.spacing = spec.spacing;
  series.feature_names = default_feature_names();
  series.records.resize(n);

  // Depth grid offsets stay multiples of the spacing.
  const double start = spec.start_depth +
                       spec.spacing * static_cast<double>(800 * block_index + 296 * well_index);
  const double phi = spec.noise_correlation;
  const double innovation = std::sqrt(std::max(0.0, 1.0 - phi * phi));
  std::vector<double> noise(kLogCurves, 0.0);
  for (std::size_t f = 0; f < kLogCurves; ++f) noise[f] = noise_sd[f] * standard_normal(rng);

  const auto blend = static_cast<std::ptrdiff_t>(spec.boundary_blend);
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = series.records[i];
    rec.depth = start + spec.spacing * static_cast<double>(i);
    rec.label = labels[i];
    rec.features.assign(kLogCurves + 1, 0.0);
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - blend);
    const auto hi =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(i) + blend);
    for (std::size_t f = 0; f < kLogCurves; ++f) {
      double mean = 0.0;
      for (auto j = lo; j <= hi; ++j) mean += profiles[static_cast<std::size_t>(labels[j])][f];
      mean /= static_cast<double>(hi - lo + 1);
      if (i > 0) noise[f] = phi * noise[f] + innovation * noise_sd[f] * standard_normal(rng);
      rec.features[f] = mean + shift[f] + noise[f];
    }
    rec.features[kLogCurves] = rec.depth;
  }

  // Mislabel whole layers (runs of one class) on a separate stream so the
  // logs do not depend on the noise level.
  if (block.label_noise > 0.0 && spec.classes > 1) {
    Rng flip(derive_seed(derive_seed(derive_seed(seed, "labels"), block_index), well_index));
    for (std::size_t i = 0; i < n;) {
      std::size_t end = i;
      while (end < n && labels[end] == labels[i]) ++end;
      if (uniform01(flip) < block.label_noise) {
        auto wrong = static_cast<int>(uniform_index(flip, static_cast<std::size_t>(spec.classes) - 1));
        if (wrong >= labels[i]) ++wrong;
        for (std::size_t j = i; j < end; ++j) series.records[j].label = wrong;
      }
      i = end;
    }
  }
  return series;
}

}  // namespace

std::vector<WellLogSeries> synth_blocks(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.classes <= 0) throw ArgumentError("synth_blocks: zero classes requested");
  const auto profiles = spec.class_profiles.empty() ? default_class_profiles() : spec.class_profiles;
  const auto noise_sd = spec.noise_sd.empty() ? default_noise_sd() : spec.noise_sd;
  if (profiles.size() < static_cast<std::size_t>(spec.classes)) {
    throw ArgumentError("synth_blocks: " + std::to_string(profiles.size()) +
                        " class profiles for " + std::to_string(spec.classes) + " classes");
  }
  for (const auto& p : profiles)
    if (p.size() != kLogCurves) throw ArgumentError("synth_blocks: class profile needs 4 curves");
  if (noise_sd.size() != kLogCurves) throw ArgumentError("synth_blocks: noise_sd needs 4 entries");

  std::vector<WellLogSeries> out;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& block = spec.blocks[b];
    if (block.class_weights.size() != static_cast<std::size_t>(spec.classes)) {
      throw ArgumentError("synth_blocks: block " + block.id + " has " +
                          std::to_string(block.class_weights.size()) + " class weights for " +
                          std::to_string(spec.classes) + " classes");
    }
    if (!(block.label_noise >= 0.0 && block.label_noise <= 1.0)) {
      throw ArgumentError("synth_blocks: block " + block.id + " label_noise outside [0, 1]");
    }
    if (std::all_of(block.class_weights.begin(), block.class_weights.end(),
                    [](double w) { return w <= 0.0; })) {
      throw ArgumentError("synth_blocks: block " + block.id + " requests zero classes");
    }
    for (std::size_t w = 0; w < block.wells; ++w)
      out.push_back(synth_well(spec, block, profiles, noise_sd, b, w, seed));
  }
  return out;
}

GeneratorSpec field_generator_spec(std::size_t wells_per_block, double scale) {
  struct Column {
    const char* id;
    std::vector<double> counts;
    std::vector<double> shift;
  };
  const std::vector<Column> columns{
      {"B1", {5, 203, 736, 66, 31}, {0.0, 0.0, 0.0, 0.0}},
      {"B2", {71, 31, 338, 0, 69}, {4.0, 0.15, 6.0, 2.0}},
      {"B3", {22, 38, 55, 122, 951}, {-3.0, -0.1, -4.0, 3.0}},
      {"B4", {28, 88, 90, 240, 808}, {2.0, 0.05, 3.0, -1.5}},
      {"B5", {3, 8, 380, 15, 0}, {-5.0, 0.2, 8.0, 1.0}},
  };
  GeneratorSpec spec;
  for (const auto& col : columns) {
    BlockSpec b;
    b.id = col.id;
    b.wells = wells_per_block;
    const double total = std::accumulate(col.counts.begin(), col.counts.end(), 0.0);
    b.records_per_well = static_cast<std::size_t>(std::llround(total * scale));
    b.class_weights = col.counts;
    b.mean_shift = col.shift;
    spec.blocks.push_back(std::move(b));
  }
  return spec;
}

}  // namespace owlfed
