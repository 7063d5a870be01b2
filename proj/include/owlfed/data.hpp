// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "owlfed/tensor.hpp"

namespace owlfed {

/// Layer classes, in the order used by labels and histograms.
enum LayerClass : int {
  kOilLayer = 0,
  kDryLayer = 1,
  kWaterLayer = 2,
  kOilyWaterLayer = 3,
  kOilAndWaterLayer = 4,
};

inline constexpr int kDefaultClassCount = 5;
inline constexpr int kDefaultMaskClass = kDryLayer;
inline constexpr double kDefaultSpacing = 0.125;
inline constexpr std::size_t kDefaultWindow = 49;

/// Per-position attention mask: 1 = masked key.
using Mask = std::vector<std::uint8_t>;

struct WellLogRecord {
  double depth = 0.0;
  std::vector<double> features;
  int label = 0;
  /// Optional externally supplied non-reservoir flag (true = non-reservoir).
  std::optional<bool> non_reservoir_flag;
};

/// Depth-ascending log of one well.
struct WellLogSeries {
  std::string well_id;
  std::string block_id;
  double spacing = kDefaultSpacing;
  std::vector<std::string> feature_names;
  std::vector<WellLogRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t feature_count() const noexcept {
    return records.empty() ? feature_names.size() : records.front().features.size();
  }

  /// Checks ordering, spacing (+/- tolerance), finiteness and label range.
  /// Throws FormatError.
  void validate(int classes, double spacing_tolerance = 1e-6) const;
};

struct WindowSource {
  std::string well_id;
  double center_depth = 0.0;
  auto operator<=>(const WindowSource&) const = default;
};

/// One training example: a d x k feature matrix (row = feature, column =
/// position along depth), the label of the center record and the per-position
/// reservoir mask derived from labels.
struct WindowSample {
  Tensor2 matrix;
  int label = 0;
  Mask mask;
  /// Mask built from the external non-reservoir flag; empty when the series has none.
  Mask external_mask;
  WindowSource source;

  std::size_t window() const noexcept { return matrix.cols(); }
  std::size_t features() const noexcept { return matrix.rows(); }
  bool fully_masked() const noexcept;
};

/// Sliding windows with stride 1. Edge positions without a full window are
/// dropped, so the count is len - k + 1. mask[j] is set iff the record at
/// position j carries mask_class. Throws ArgumentError for even k or k > len.
std::vector<WindowSample> make_windows(const WellLogSeries& series, std::size_t k,
                                       int mask_class = kDefaultMaskClass);

std::vector<std::size_t> class_histogram(std::span<const WindowSample> samples,
                                         int classes = kDefaultClassCount);
std::vector<std::size_t> class_histogram(std::span<const int> labels,
                                         int classes = kDefaultClassCount);
std::vector<std::size_t> class_histogram(const WellLogSeries& series,
                                         int classes = kDefaultClassCount);

/// Per-feature z-score fitted on one set of series and applied to others.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(std::span<const WellLogSeries> series);
  WellLogSeries apply(const WellLogSeries& series) const;
  bool empty() const noexcept { return mean.empty(); }
};

struct SplitOptions {
  std::size_t window = kDefaultWindow;
  int classes = kDefaultClassCount;
  int mask_class = kDefaultMaskClass;
  /// Explicit test well; chosen uniformly at random from the seed when unset.
  std::optional<std::string> test_well;
  bool standardize = true;
};

/// D^tr / D^te of one block. class_counts are computed on train.
struct DataSplit {
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;
  std::vector<std::size_t> class_counts;
  std::string test_well;
  Standardizer standardizer;
};

/// Holds out one well of the block as test; all other wells' windows form the
/// train set. Standardization statistics come from the train wells only.
/// Throws ArgumentError for blocks with fewer than two wells.
DataSplit split_by_well(std::span<const WellLogSeries> block, const SplitOptions& options,
                        std::uint64_t seed);

/// Windows whose every position is masked cannot be attended over; returns
/// the remaining ones and the number removed.
std::vector<WindowSample> drop_fully_masked(std::vector<WindowSample> samples,
                                            std::size_t* removed = nullptr);

}  // namespace owlfed
