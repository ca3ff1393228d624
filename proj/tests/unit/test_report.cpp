// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tempadapt/error.hpp"
#include "tempadapt/report.hpp"
#include "tempadapt/util.hpp"

using namespace tempadapt;
using namespace tempadapt::report;

namespace {

Table three_by_three(double fill) {
  Table t;
  t.rows = t.cols = {"2020-01", "2020-02", "2020-03"};
  t.values.assign(3, std::vector<double>(3, fill));
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("table CSV layout and round trip") {
  auto t = three_by_three(0);
  t.values[1][2] = -12.5;
  const auto csv = t.to_csv();
  std::istringstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 3);
  }
  CHECK(lines == 4);
  CHECK(csv != three_by_three(0).to_csv());
  const auto back = Table::from_csv(csv);
  CHECK(back.rows == t.rows);
  CHECK(back.cols == t.cols);
  CHECK(back.values == t.values);
  CHECK(back.to_csv() == csv);
}

TEST_CASE("empty or ragged tables are rejected") {
  Table empty;
  CHECK_THROWS_AS(empty.check(), DataError);
  auto ragged = three_by_three(1);
  ragged.values[2].pop_back();
  CHECK_THROWS_AS(ragged.check(), DataError);
}

TEST_CASE("diverging scale is anchored at zero") {
  const Rgb mid = diverging_color(0, 10);
  CHECK(mid == Rgb{255, 255, 255});
  const Rgb lo = diverging_color(-10, 10), hi = diverging_color(10, 10);
  CHECK_FALSE(lo == hi);
  CHECK(diverging_color(-50, 10) == lo);  // clamps
  CHECK(diverging_color(50, 10) == hi);
}

TEST_CASE("all-zero percent heatmap is uniformly the midpoint colour") {
  HeatmapGeometry g;
  const auto img = render_heatmap(three_by_three(0), true, &g);
  CHECK(img.width > 3 * g.cell);
  CHECK(img.height > 3 * g.cell);
  const Rgb mid = diverging_color(0, 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      // Sample the cell corners, clear of any value text in the middle.
      for (int dy : {2, g.cell - 3}) {
        for (int dx : {2, g.cell - 3}) CHECK(img.at(g.left + c * g.cell + dx, g.top + r * g.cell + dy) == mid);
      }
    }
  }
}

TEST_CASE("report writes stable CSV bytes and a PNG") {
  const auto dir = std::filesystem::temp_directory_path() / "tempadapt_report_test";
  std::filesystem::remove_all(dir);
  auto t = three_by_three(1.5);
  t.values[0][0] = -3;
  report::report(t, dir / "a", "grid", true);
  report::report(t, dir / "b", "grid", true);
  CHECK(slurp(dir / "a" / "grid.csv") == slurp(dir / "b" / "grid.csv"));
  const auto png = slurp(dir / "a" / "grid.png");
  REQUIRE(png.size() > 8);
  CHECK(png.substr(1, 3) == "PNG");
  std::filesystem::remove_all(dir);
}

TEST_CASE("matrix table selects raw or percent values") {
  eval::CrossTemporalMatrix m;
  m.rows = m.cols = {"a", "b"};
  m.values = {{2, 4}, {3, 6}};
  m.control = {2, 4};
  const auto raw = matrix_table(m, false);
  CHECK(raw.values == m.values);
  const auto pct = matrix_table(m, true);
  CHECK(pct.values[0][0] == 0.0);
  CHECK(pct.values[1][0] == 50.0);
  CHECK(pct.values[1][1] == 50.0);
}
