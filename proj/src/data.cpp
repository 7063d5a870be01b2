// SPDX-License-Identifier: Apache-2.0
#include "owlfed/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "owlfed/errors.hpp"
#include "owlfed/rng.hpp"

namespace owlfed {

void WellLogSeries::validate(int classes, double spacing_tolerance) const {
  const std::size_t d = feature_count();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.features.size() != d) {
      throw FormatError("well " + well_id + ": record " + std::to_string(i) + " has " +
                        std::to_string(r.features.size()) + " features, expected " +
                        std::to_string(d));
    }
    for (std::size_t f = 0; f < d; ++f) {
      if (!std::isfinite(r.features[f])) {
        throw FormatError("well " + well_id + ": non-finite feature " + std::to_string(f) +
                          " at record " + std::to_string(i));
      }
    }
    if (r.label < 0 || r.label >= classes) {
      throw FormatError("well " + well_id + ": label " + std::to_string(r.label) +
                        " at record " + std::to_string(i) + " outside 0.." +
                        std::to_string(classes - 1));
    }
    if (i == 0) continue;
    const double delta = r.depth - records[i - 1].depth;
    if (delta <= 0.0) {
      std::ostringstream os;
      os << "well " << well_id << ": depth " << r.depth << " does not increase (record " << i
         << ")";
      throw FormatError(os.str());
    }
    if (std::abs(delta - spacing) > spacing_tolerance) {
      std::ostringstream os;
      os << "well " << well_id << ": spacing " << delta << " m at depth " << r.depth
         << " deviates from " << spacing << " m";
      throw FormatError(os.str());
    }
  }
}

bool WindowSample::fully_masked() const noexcept {
  return !mask.empty() && std::all_of(mask.begin(), mask.end(), [](auto m) { return m != 0; });
}

std::vector<WindowSample> make_windows(const WellLogSeries& series, std::size_t k,
                                       int mask_class) {
  if (k == 0 || k % 2 == 0) {
    throw ArgumentError("make_windows: window size must be odd, got " + std::to_string(k));
  }
  const std::size_t len = series.size();
  if (k > len) {
    throw ArgumentError("make_windows: window " + std::to_string(k) + " exceeds series length " +
                        std::to_string(len) + " of well " + series.well_id);
  }
  const std::size_t d = series.feature_count();
  const bool has_flags = std::all_of(series.records.begin(), series.records.end(),
                                     [](const auto& r) { return r.non_reservoir_flag.has_value(); });
  std::vector<WindowSample> windows;
  windows.reserve(len - k + 1);
  for (std::size_t start = 0; start + k <= len; ++start) {
    WindowSample w;
    w.matrix = Tensor2(d, k);
    w.mask.resize(k);
    if (has_flags) w.external_mask.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& rec = series.records[start + j];
      for (std::size_t f = 0; f < d; ++f) w.matrix(f, j) = rec.features[f];
      w.mask[j] = rec.label == mask_class ? 1 : 0;
      if (has_flags) w.external_mask[j] = *rec.non_reservoir_flag ? 1 : 0;
    }
    const auto& center = series.records[start + k / 2];
    w.label = center.label;
    w.source = {series.well_id, center.depth};
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<std::size_t> class_histogram(std::span<const WindowSample> samples, int classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
  return counts;
}

std::vector<std::size_t> class_histogram(std::span<const int> labels, int classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  return counts;
}

std::vector<std::size_t> class_histogram(const WellLogSeries& series, int classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& r : series.records) ++counts.at(static_cast<std::size_t>(r.label));
  return counts;
}

Standardizer Standardizer::fit(std::span<const WellLogSeries> series) {
  Standardizer s;
  if (series.empty()) return s;
  const std::size_t d = series.front().feature_count();
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  double n = 0.0;
  for (const auto& w : series)
    for (const auto& r : w.records) {
      for (std::size_t f = 0; f < d; ++f) s.mean[f] += r.features[f];
      n += 1.0;
    }
  if (n == 0.0) return Standardizer{};
  for (double& m : s.mean) m /= n;
  for (const auto& w : series)
    for (const auto& r : w.records)
      for (std::size_t f = 0; f < d; ++f) {
        const double c = r.features[f] - s.mean[f];
        s.stddev[f] += c * c;
      }
  for (double& sd : s.stddev) {
    sd = std::sqrt(sd / n);
    if (sd < 1e-12) sd = 1.0;
  }
  return s;
}

WellLogSeries Standardizer::apply(const WellLogSeries& series) const {
  WellLogSeries out = series;
  if (empty()) return out;
  for (auto& r : out.records) {
    if (r.features.size() != mean.size()) {
      throw DimensionError("Standardizer: series " + series.well_id + " has " +
                           std::to_string(r.features.size()) + " features, fitted on " +
                           std::to_string(mean.size()));
    }
    for (std::size_t f = 0; f < mean.size(); ++f)
      r.features[f] = (r.features[f] - mean[f]) / stddev[f];
  }
  return out;
}

DataSplit split_by_well(std::span<const WellLogSeries> block, const SplitOptions& options,
                        std::uint64_t seed) {
  if (block.size() < 2) {
    throw ArgumentError("split_by_well: block needs at least 2 wells, got " +
                        std::to_string(block.size()));
  }
  std::size_t test_index = block.size();
  if (options.test_well) {
    for (std::size_t i = 0; i < block.size(); ++i)
      if (block[i].well_id == *options.test_well) test_index = i;
    if (test_index == block.size()) {
      throw ArgumentError("split_by_well: no well named '" + *options.test_well + "'");
    }
  } else {
    // Wells are ordered by id so the choice does not depend on input order.
    std::vector<std::size_t> order(block.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return block[a].well_id < block[b].well_id; });
    Rng rng(derive_seed(seed, "test-well"));
    test_index = order[uniform_index(rng, order.size())];
  }

  std::vector<WellLogSeries> train_wells;
  for (std::size_t i = 0; i < block.size(); ++i)
    if (i != test_index) train_wells.push_back(block[i]);

  DataSplit split;
  split.test_well = block[test_index].well_id;
  if (options.standardize) split.standardizer = Standardizer::fit(train_wells);

  for (const auto& w : train_wells) {
    auto windows = make_windows(split.standardizer.apply(w), options.window, options.mask_class);
    std::move(windows.begin(), windows.end(), std::back_inserter(split.train));
  }
  split.test = make_windows(split.standardizer.apply(block[test_index]), options.window,
                            options.mask_class);
  split.class_counts = class_histogram(split.train, options.classes);
  return split;
}

std::vector<WindowSample> drop_fully_masked(std::vector<WindowSample> samples,
                                            std::size_t* removed) {
  const auto before = samples.size();
  std::erase_if(samples, [](const WindowSample& s) { return s.fully_masked(); });
  if (removed) *removed = before - samples.size();
  return samples;
}

}  // namespace owlfed
