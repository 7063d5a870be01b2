// SPDX-License-Identifier: Apache-2.0
#include "owlfed/well_log_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "owlfed/errors.hpp"

namespace owlfed {

void to_json(nlohmann::json& j, const WellLogSchema& s) {
  j = nlohmann::json{{"depth_column", s.depth_column},
                     {"feature_columns", s.feature_columns},
                     {"class_column", s.class_column},
                     {"spacing", s.spacing},
                     {"spacing_tolerance", s.spacing_tolerance},
                     {"classes", s.classes}};
  j["reservoir_flag_column"] =
      s.reservoir_flag_column ? nlohmann::json(*s.reservoir_flag_column) : nlohmann::json();
}

void from_json(const nlohmann::json& j, WellLogSchema& s) {
  s = WellLogSchema{};
  s.depth_column = j.value("depth_column", s.depth_column);
  s.feature_columns = j.value("feature_columns", s.feature_columns);
  s.class_column = j.value("class_column", s.class_column);
  s.spacing = j.value("spacing", s.spacing);
  s.spacing_tolerance = j.value("spacing_tolerance", s.spacing_tolerance);
  s.classes = j.value("classes", s.classes);
  if (j.contains("reservoir_flag_column") && !j["reservoir_flag_column"].is_null())
    s.reservoir_flag_column = j["reservoir_flag_column"].get<std::string>();
}

std::pair<std::string, std::string> parse_well_filename(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const auto pos = stem.find("__");
  if (pos == std::string::npos || pos == 0 || pos + 2 >= stem.size()) {
    throw FormatError("well file name '" + path.filename().string() +
                      "' does not match <block>__<well>.csv");
  }
  return {stem.substr(0, pos), stem.substr(pos + 2)};
}

std::string well_filename(const WellLogSeries& series) {
  return series.block_id + "__" + series.well_id + ".csv";
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest = line;
  while (true) {
    const auto comma = rest.find(',');
    cells.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return cells;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw SchemaError(path.string() + ": missing column '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column,
                    const std::filesystem::path& path) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (cell.empty() || end != begin + cell.size()) {
    throw FormatError(path.string() + ": row " + std::to_string(row) + ", column " + column +
                      ": cannot parse '" + cell + "'");
  }
  if (!std::isfinite(v)) {
    throw FormatError(path.string() + ": row " + std::to_string(row) + ", column " + column +
                      ": non-finite value '" + cell + "'");
  }
  return v;
}

std::string format_depth(double depth) {
  std::ostringstream os;
  os << depth;
  return os.str();
}

}  // namespace

WellLogSeries load_well_log(const std::filesystem::path& path, const WellLogSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  const std::size_t depth_col = column_index(header, schema.depth_column, path);
  const std::size_t class_col = column_index(header, schema.class_column, path);
  std::vector<std::size_t> feature_cols;
  for (const auto& name : schema.feature_columns)
    feature_cols.push_back(column_index(header, name, path));
  std::optional<std::size_t> flag_col;
  if (schema.reservoir_flag_column)
    flag_col = column_index(header, *schema.reservoir_flag_column, path);

  WellLogSeries series;
  try {
    auto [block, well] = parse_well_filename(path);
    series.block_id = std::move(block);
    series.well_id = std::move(well);
  } catch (const FormatError&) {
    series.block_id = "";
    series.well_id = path.stem().string();
  }
  series.spacing = schema.spacing;
  series.feature_names = schema.feature_columns;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ": row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header.size()));
    }
    WellLogRecord rec;
    rec.depth = parse_number(cells[depth_col], row, schema.depth_column, path);
    for (std::size_t f = 0; f < feature_cols.size(); ++f)
      rec.features.push_back(
          parse_number(cells[feature_cols[f]], row, schema.feature_columns[f], path));
    const double label = parse_number(cells[class_col], row, schema.class_column, path);
    if (label != std::floor(label) || label < 0 || label >= schema.classes) {
      throw FormatError(path.string() + ": row " + std::to_string(row) + ", column " +
                        schema.class_column + ": class '" + cells[class_col] +
                        "' is not an integer in 0.." + std::to_string(schema.classes - 1));
    }
    rec.label = static_cast<int>(label);
    if (flag_col) {
      const double flag = parse_number(cells[*flag_col], row, *schema.reservoir_flag_column, path);
      rec.non_reservoir_flag = flag != 0.0;
    }
    series.records.push_back(std::move(rec));
  }

  auto& recs = series.records;
  if (recs.size() >= 2 && recs.front().depth > recs.back().depth)
    std::reverse(recs.begin(), recs.end());
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (recs[i].depth == recs[i - 1].depth) {
      throw FormatError(path.string() + ": duplicated depth " + format_depth(recs[i].depth));
    }
    if (recs[i].depth < recs[i - 1].depth) {
      throw FormatError(path.string() + ": depth is not monotone at " +
                        format_depth(recs[i].depth));
    }
  }
  try {
    series.validate(schema.classes, schema.spacing_tolerance);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return series;
}

void save_well_log(const WellLogSeries& series, const std::filesystem::path& path,
                   const WellLogSchema& schema) {
  if (series.feature_count() != schema.feature_columns.size()) {
    throw SchemaError("save_well_log: series has " + std::to_string(series.feature_count()) +
                      " features, schema lists " +
                      std::to_string(schema.feature_columns.size()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());

  std::vector<std::string> header{schema.depth_column};
  for (const auto& f : schema.feature_columns)
    if (f != schema.depth_column) header.push_back(f);
  header.push_back(schema.class_column);
  if (schema.reservoir_flag_column) header.push_back(*schema.reservoir_flag_column);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';

  for (const auto& r : series.records) {
    out << format_number(r.depth);
    for (std::size_t f = 0; f < r.features.size(); ++f)
      if (schema.feature_columns[f] != schema.depth_column) out << ',' << format_number(r.features[f]);
    out << ',' << r.label;
    if (schema.reservoir_flag_column) out << ',' << (r.non_reservoir_flag.value_or(false) ? 1 : 0);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<WellLogSeries> load_well_directory(const std::filesystem::path& dir,
                                               const WellLogSchema& schema) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<WellLogSeries> out;
  for (const auto& f : files) out.push_back(load_well_log(f, schema));
  return out;
}

}  // namespace owlfed
