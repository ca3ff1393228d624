// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tempadapt/evaluation.hpp"

namespace tempadapt::report {

/// Labelled grid of values: a matrix, a scale sweep or a strategy table.
struct Table {
  std::string corner = "period";
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<double>> values;

  void check() const;
  std::string to_csv(int digits = 6) const;
  static Table from_csv(const std::string& text);
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Diverging blue-white-red colour for v in [-limit, limit]; 0 maps to white.
Rgb diverging_color(double v, double limit);
/// Sequential white-to-blue colour for v in [lo, hi].
Rgb sequential_color(double v, double lo, double hi);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;  // row-major

  Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
};

struct HeatmapGeometry {
  int cell = 44;
  int left = 0;  // first cell column in pixels
  int top = 0;   // first cell row in pixels
};

/// Renders the table with row/column labels and a colour bar. With
/// `centered`, the scale is symmetric around 0 so zero is the midpoint
/// colour; otherwise it spans the value range.
Image render_heatmap(const Table& table, bool centered, HeatmapGeometry* geometry = nullptr);

void write_png(const std::filesystem::path& path, const Image& image);

/// Table from matrix raw values or percent differences.
Table matrix_table(const eval::CrossTemporalMatrix& m, bool percent);

/// Writes <name>.csv and <name>.png into dir. An empty table is a DataError.
void report(const Table& table, const std::filesystem::path& dir, const std::string& name, bool centered);

/// Raw and percent views of a matrix plus its control column:
/// <name>_raw.{csv,png}, <name>_percent.{csv,png}, <name>_control.csv.
void report(const eval::CrossTemporalMatrix& m, const std::filesystem::path& dir, const std::string& name);

}  // namespace tempadapt::report
