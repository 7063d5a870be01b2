// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "owlfed/errors.hpp"
#include "owlfed/well_log_io.hpp"
#include "test_support.hpp"

using namespace owlfed;
using owlfed::testing::make_series;
using owlfed::testing::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string error_of(const std::filesystem::path& p) {
  try {
    load_well_log(p, WellLogSchema{});
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(WellLogIo, RoundTripIsExact) {
  TempDir dir("io");
  auto s = make_series("W7", "B2", {0, 1, 2, 3, 4, 0});
  s.records[2].features[0] = 0.1 + 0.2;  // not representable in short decimal
  const auto path = dir.path() / well_filename(s);
  EXPECT_EQ(path.filename(), "B2__W7.csv");
  save_well_log(s, path, WellLogSchema{});
  const auto back = load_well_log(path, WellLogSchema{});
  EXPECT_EQ(back.well_id, "W7");
  EXPECT_EQ(back.block_id, "B2");
  ASSERT_EQ(back.records.size(), s.records.size());
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    EXPECT_EQ(back.records[i].depth, s.records[i].depth);
    EXPECT_EQ(back.records[i].features, s.records[i].features);
    EXPECT_EQ(back.records[i].label, s.records[i].label);
  }
}

TEST(WellLogIo, DescendingFilesAreReversed) {
  TempDir dir("io");
  const auto p = dir.path() / "B__W.csv";
  write_file(p,
             "DEPTH,SP,CAL,AC,RA25,CLASS\n"
             "1000.25,1,2,3,4,0\n"
             "1000.125,1,2,3,4,1\n"
             "1000,1,2,3,4,2\n");
  const auto s = load_well_log(p, WellLogSchema{});
  EXPECT_DOUBLE_EQ(s.records.front().depth, 1000.0);
  EXPECT_EQ(s.records.front().label, 2);
  EXPECT_EQ(s.records.back().label, 0);
}

TEST(WellLogIo, DuplicatedDepthNamesTheDepth) {
  TempDir dir("io");
  const auto p = dir.path() / "B__W.csv";
  write_file(p,
             "DEPTH,SP,CAL,AC,RA25,CLASS\n"
             "1000,1,2,3,4,0\n"
             "1000.125,1,2,3,4,0\n"
             "1000.125,1,2,3,4,0\n");
  EXPECT_THROW(load_well_log(p, WellLogSchema{}), FormatError);
  EXPECT_NE(error_of(p).find("duplicated depth 1000.12"), std::string::npos) << error_of(p);
}

TEST(WellLogIo, MissingColumnIsSchemaError) {
  TempDir dir("io");
  const auto p = dir.path() / "B__W.csv";
  write_file(p, "DEPTH,SP,CAL,AC,CLASS\n1000,1,2,3,0\n");
  EXPECT_THROW(load_well_log(p, WellLogSchema{}), SchemaError);
  EXPECT_NE(error_of(p).find("RA25"), std::string::npos);
}

TEST(WellLogIo, BadCellNamesRowAndColumn) {
  TempDir dir("io");
  const auto p = dir.path() / "B__W.csv";
  write_file(p,
             "DEPTH,SP,CAL,AC,RA25,CLASS\n"
             "1000,1,2,3,4,0\n"
             "1000.125,1,oops,3,4,0\n");
  EXPECT_THROW(load_well_log(p, WellLogSchema{}), FormatError);
  const std::string msg = error_of(p);
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("CAL"), std::string::npos) << msg;
}

TEST(WellLogIo, IrregularSpacingIsRejected) {
  TempDir dir("io");
  const auto p = dir.path() / "B__W.csv";
  write_file(p,
             "DEPTH,SP,CAL,AC,RA25,CLASS\n"
             "1000,1,2,3,4,0\n"
             "1000.5,1,2,3,4,0\n");
  EXPECT_THROW(load_well_log(p, WellLogSchema{}), FormatError);
}

TEST(WellLogIo, FilenameParsing) {
  EXPECT_EQ(parse_well_filename("dir/B3__W12.csv"), (std::pair<std::string, std::string>{"B3", "W12"}));
  EXPECT_THROW(parse_well_filename("plain.csv"), FormatError);
}

TEST(WellLogIo, DirectoryLoadIsSorted) {
  TempDir dir("io");
  save_well_log(make_series("W2", "B1", {0, 0, 0}), dir.path() / "B1__W2.csv", WellLogSchema{});
  save_well_log(make_series("W1", "B1", {1, 1, 1}), dir.path() / "B1__W1.csv", WellLogSchema{});
  const auto all = load_well_directory(dir.path(), WellLogSchema{});
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].well_id, "W1");
  EXPECT_EQ(all[1].well_id, "W2");
}

TEST(WellLogIo, SchemaJsonRoundTrip) {
  WellLogSchema s;
  s.reservoir_flag_column = "NONRES";
  s.classes = 4;
  const nlohmann::json j = s;
  const auto back = j.get<WellLogSchema>();
  EXPECT_EQ(back.reservoir_flag_column, s.reservoir_flag_column);
  EXPECT_EQ(back.classes, 4);
  EXPECT_EQ(back.feature_columns, s.feature_columns);
}
