// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tempadapt {

/// Seeded random source with portable sampling helpers.
///
/// The standard distributions are implementation-defined, so every draw that
/// ends up in a corpus, a masking or a weight initialisation goes through the
/// helpers below, which only depend on the raw mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Poisson draw by sequential inversion; intended for small means.
  int poisson(double mean);

  /// Standard normal draw (Box-Muller, one value per call).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a textual tag into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// SHA-256 over an incrementally fed byte stream.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  Sha256& update(std::span<const std::byte> bytes);
  /// Hex digest. The object cannot be fed afterwards.
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place, so
/// concurrent readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Round-trip-exact text form of a double ("%.17g").
std::string format_double(double value);

/// Fixed-precision text form used in CSV reports.
std::string format_fixed(double value, int digits);

std::vector<std::string> split(std::string_view text, char sep);

std::string trim(std::string_view text);

}  // namespace tempadapt
