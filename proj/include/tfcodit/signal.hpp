#pragma once

#include "tfcodit/series.hpp"

#include <numbers>
#include <vector>

namespace tfcodit::signal {

/// Orthonormal Haar analysis/synthesis pair applied `level` times.
struct DecompositionConfig {
  int level = 3;
  std::array<double, 2> low_pass{std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2};
  std::array<double, 2> high_pass{std::numbers::sqrt2 / 2, -std::numbers::sqrt2 / 2};

  int rows() const { return level + 1; }
};

/// Throws InvalidConfig unless the filters are the orthonormal Haar pair and
/// 1 <= level <= log2(steps).
void check_config(const DecompositionConfig& cfg, int steps);

/// Per-channel time-frequency map: row 0 holds a_J, rows 1..J hold d_J..d_1,
/// each coefficient repeated so every row spans all T columns.
struct WaveletGrid {
  std::vector<Mat> maps;        // one (J+1) x T matrix per channel
  std::vector<int> row_scales;  // repeat factor per row

  int channels() const { return static_cast<int>(maps.size()); }
  int rows() const { return maps.empty() ? 0 : static_cast<int>(maps.front().rows()); }
  int steps() const { return maps.empty() ? 0 : static_cast<int>(maps.front().cols()); }
};

/// Repeat factors for a level-J grid: {2^J, 2^J, 2^(J-1), ..., 2}.
std::vector<int> row_scales(int level);

WaveletGrid dwt_decompose(const TimeSeries& series, const DecompositionConfig& cfg);

/// Block-averages each row back to native length, then runs J synthesis steps.
/// Output is flagged with the same contract; `normalized` is set to true since
/// grids are produced from normalized series in the pipeline.
TimeSeries idwt_reconstruct(const WaveletGrid& grid, const DecompositionConfig& cfg);

/// Native (unexpanded) coefficients of one channel: [a_J, d_J, ..., d_1].
std::vector<std::vector<double>> native_coefficients(const WaveletGrid& grid, int channel);

/// Single-channel transforms on native coefficient lists.
std::vector<std::vector<double>> haar_analysis(const std::vector<double>& x,
                                               const DecompositionConfig& cfg);
std::vector<double> haar_synthesis(const std::vector<std::vector<double>>& coeffs,
                                   const DecompositionConfig& cfg);

}  // namespace tfcodit::signal
