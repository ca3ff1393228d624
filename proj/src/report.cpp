// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "tempadapt/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <sstream>

#include "tempadapt/error.hpp"
#include "tempadapt/util.hpp"

namespace tempadapt::report {

void Table::check() const {
  if (rows.empty() || cols.empty()) throw DataError("empty table");
  if (values.size() != rows.size()) throw DataError("table row count mismatch");
  for (const auto& r : values) {
    if (r.size() != cols.size()) throw DataError("table column count mismatch");
  }
}

std::string Table::to_csv(int digits) const {
  check();
  std::ostringstream out;
  out << corner;
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (double v : values[r]) out << ',' << format_fixed(v, digits);
    out << '\n';
  }
  return out.str();
}

Table Table::from_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV");
  auto header = split(line, ',');
  t.corner = header.at(0);
  t.cols.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != t.cols.size() + 1) throw DataError("ragged CSV row");
    t.rows.push_back(f[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < f.size(); ++i) {
      try {
        row.push_back(std::stod(f[i]));
      } catch (const std::exception&) {
        throw DataError("not a number in CSV: '" + f[i] + "'");
      }
    }
    t.values.push_back(std::move(row));
  }
  t.check();
  return t;
}

namespace {

std::uint8_t lerp(double a, double b, double t) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * t)); }

// 3x5 glyphs, one row per string, '#' = ink.
const std::map<char, std::array<const char*, 5>>& font() {
  static const std::map<char, std::array<const char*, 5>> f = {
      {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
      {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
      {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
      {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", "..#", "..#", "..#"}},
      {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
      {'-', {"...", "...", "###", "...", "..."}}, {'.', {"...", "...", "...", "...", ".#."}},
      {'+', {"...", ".#.", "###", ".#.", "..."}}, {'%', {"#.#", "..#", ".#.", "#..", "#.#"}},
      {'k', {"#..", "#.#", "##.", "#.#", "#.#"}}, {'m', {"...", "##.", "###", "#.#", "#.#"}},
  };
  return f;
}

constexpr int kScale = 2;
constexpr int kGlyphW = 4 * kScale;  // 3 columns plus spacing
constexpr int kGlyphH = 5 * kScale;

int text_width(const std::string& s) { return static_cast<int>(s.size()) * kGlyphW; }

void draw_text(Image& img, int x, int y, const std::string& s, Rgb ink) {
  for (char ch : s) {
    const auto it = font().find(ch);
    if (it != font().end()) {
      for (int gy = 0; gy < 5; ++gy) {
        for (int gx = 0; gx < 3; ++gx) {
          if (it->second[static_cast<std::size_t>(gy)][gx] != '#') continue;
          for (int dy = 0; dy < kScale; ++dy) {
            for (int dx = 0; dx < kScale; ++dx) {
              const int px = x + gx * kScale + dx, py = y + gy * kScale + dy;
              if (px >= 0 && py >= 0 && px < img.width && py < img.height) {
                img.pixels[static_cast<std::size_t>(py) * static_cast<std::size_t>(img.width) +
                           static_cast<std::size_t>(px)] = ink;
              }
            }
          }
        }
      }
    }
    x += kGlyphW;
  }
}

void fill(Image& img, int x0, int y0, int w, int h, Rgb c) {
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      img.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) + static_cast<std::size_t>(x)] = c;
    }
  }
}

// Period ids "2017-03" are shortened to "17-03" so they fit a cell.
std::string short_label(const std::string& s) {
  if (s.size() == 7 && s[4] == '-') return s.substr(2);
  return s;
}

}  // namespace

Rgb diverging_color(double v, double limit) {
  if (limit <= 0.0 || !std::isfinite(v)) return {255, 255, 255};
  const double t = std::clamp(v / limit, -1.0, 1.0);
  if (t >= 0) return {lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t)};
  return {lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t)};
}

Rgb sequential_color(double v, double lo, double hi) {
  const double t = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0;
  return {lerp(247, 8, t), lerp(251, 48, t), lerp(255, 107, t)};
}

Image render_heatmap(const Table& table, bool centered, HeatmapGeometry* geometry) {
  table.check();
  HeatmapGeometry g;
  int label_w = 0;
  for (const auto& r : table.rows) label_w = std::max(label_w, text_width(short_label(r)));
  g.left = label_w + 12;
  g.top = kGlyphH + 12;
  const int nr = static_cast<int>(table.rows.size()), nc = static_cast<int>(table.cols.size());
  const int bar_h = 14;
  Image img;
  img.width = std::max(g.left + nc * g.cell + 8, g.left + 2 * 80);
  img.height = g.top + nr * g.cell + 8 + bar_h + kGlyphH + 12;
  img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), Rgb{255, 255, 255});

  double lo = table.values[0][0], hi = lo, mag = 0.0;
  for (const auto& row : table.values) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mag = std::max(mag, std::abs(v));
    }
  }
  auto color = [&](double v) { return centered ? diverging_color(v, mag) : sequential_color(v, lo, hi); };
  const Rgb ink{0, 0, 0};
  for (int r = 0; r < nr; ++r) {
    draw_text(img, 4, g.top + r * g.cell + (g.cell - kGlyphH) / 2, short_label(table.rows[static_cast<std::size_t>(r)]),
              ink);
    for (int c = 0; c < nc; ++c) {
      fill(img, g.left + c * g.cell, g.top + r * g.cell, g.cell, g.cell,
           color(table.values[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
    }
  }
  for (int c = 0; c < nc; ++c) {
    const auto label = short_label(table.cols[static_cast<std::size_t>(c)]);
    draw_text(img, g.left + c * g.cell + std::max(0, (g.cell - text_width(label)) / 2), 4, label, ink);
  }
  // Colour bar with its end values.
  const int bar_y = g.top + nr * g.cell + 8;
  const int bar_w = img.width - g.left - 8;
  const double bar_lo = centered ? -mag : lo, bar_hi = centered ? mag : hi;
  for (int x = 0; x < bar_w; ++x) {
    const double v = bar_lo + (bar_hi - bar_lo) * (bar_w > 1 ? x / static_cast<double>(bar_w - 1) : 0.0);
    fill(img, g.left + x, bar_y, 1, bar_h, color(v));
  }
  const auto lo_text = format_fixed(bar_lo, 2), hi_text = format_fixed(bar_hi, 2);
  draw_text(img, g.left, bar_y + bar_h + 4, lo_text, ink);
  draw_text(img, img.width - 8 - text_width(hi_text), bar_y + bar_h + 4, hi_text, ink);
  if (geometry) *geometry = g;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  std::FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + tmp);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::filesystem::remove(tmp);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto c = image.at(x, y);
      row[static_cast<std::size_t>(x) * 3] = c.r;
      row[static_cast<std::size_t>(x) * 3 + 1] = c.g;
      row[static_cast<std::size_t>(x) * 3 + 2] = c.b;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  std::filesystem::rename(tmp, path);
}

Table matrix_table(const eval::CrossTemporalMatrix& m, bool percent) {
  Table t;
  t.rows = m.rows;
  t.cols = m.cols;
  t.values = percent ? m.percent_matrix() : m.values;
  return t;
}

void report(const Table& table, const std::filesystem::path& dir, const std::string& name, bool centered) {
  table.check();
  write_file_atomic(dir / (name + ".csv"), table.to_csv());
  write_png(dir / (name + ".png"), render_heatmap(table, centered));
}

void report(const eval::CrossTemporalMatrix& m, const std::filesystem::path& dir, const std::string& name) {
  if (m.rows.empty() || m.cols.empty()) throw DataError("empty matrix");
  report(matrix_table(m, false), dir, name + "_raw", false);
  report(matrix_table(m, true), dir, name + "_percent", true);
  write_file_atomic(dir / (name + "_control.csv"), m.control_csv());
}

}  // namespace tempadapt::report
