// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "owlfed/data.hpp"

namespace owlfed {

/// Column layout of a well-log CSV. The depth column is always read; it may
/// also appear among feature_columns (DEPTH is a model feature by default).
struct WellLogSchema {
  std::string depth_column = "DEPTH";
  std::vector<std::string> feature_columns = {"SP", "CAL", "AC", "RA25", "DEPTH"};
  std::string class_column = "CLASS";
  /// Optional 0/1 column marking non-reservoir samples for inference-time masking.
  std::optional<std::string> reservoir_flag_column;
  double spacing = kDefaultSpacing;
  double spacing_tolerance = 1e-6;
  int classes = kDefaultClassCount;
};

void to_json(nlohmann::json& j, const WellLogSchema& s);
void from_json(const nlohmann::json& j, WellLogSchema& s);

/// Splits "<block>__<well>.csv" into {block, well}. Throws FormatError.
std::pair<std::string, std::string> parse_well_filename(const std::filesystem::path& path);

/// Reads one CSV. Rows may be depth-ascending or depth-descending; the result
/// is ascending. Errors name the offending column, row or depth.
WellLogSeries load_well_log(const std::filesystem::path& path, const WellLogSchema& schema);

/// Writes the series with full round-trip precision. Columns follow the schema.
void save_well_log(const WellLogSeries& series, const std::filesystem::path& path,
                   const WellLogSchema& schema);

/// File name used by save/load for a series: "<block>__<well>.csv".
std::string well_filename(const WellLogSeries& series);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// Loads every *.csv in dir, sorted by file name.
std::vector<WellLogSeries> load_well_directory(const std::filesystem::path& dir,
                                               const WellLogSchema& schema);

}  // namespace owlfed
