#include "tfcodit/signal.hpp"

#include "tfcodit/errors.hpp"

#include <cmath>

namespace tfcodit::signal {

void check_config(const DecompositionConfig& cfg, int steps) {
  const auto& lo = cfg.low_pass;
  const auto& hi = cfg.high_pass;
  const double ll = lo[0] * lo[0] + lo[1] * lo[1];
  const double hh = hi[0] * hi[0] + hi[1] * hi[1];
  const double lh = lo[0] * hi[0] + lo[1] * hi[1];
  if (std::abs(ll - 1.0) > 1e-12 || std::abs(hh - 1.0) > 1e-12 || std::abs(lh) > 1e-12) {
    throw Error(ErrorCode::InvalidConfig, "filters are not an orthonormal Haar pair");
  }
  if (cfg.level < 1 || (1 << cfg.level) > steps) {
    throw Error(ErrorCode::InvalidConfig,
                "level " + std::to_string(cfg.level) + " outside [1, log2(" +
                    std::to_string(steps) + ")]");
  }
}

std::vector<int> row_scales(int level) {
  std::vector<int> scales;
  scales.push_back(1 << level);
  for (int j = level; j >= 1; --j) scales.push_back(1 << j);
  return scales;
}

std::vector<std::vector<double>> haar_analysis(const std::vector<double>& x,
                                               const DecompositionConfig& cfg) {
  const auto& lo = cfg.low_pass;
  const auto& hi = cfg.high_pass;
  std::vector<double> approx = x;
  std::vector<std::vector<double>> details;  // d_1 first
  for (int j = 0; j < cfg.level; ++j) {
    const std::size_t half = approx.size() / 2;
    std::vector<double> a(half), d(half);
    for (std::size_t k = 0; k < half; ++k) {
      a[k] = lo[0] * approx[2 * k] + lo[1] * approx[2 * k + 1];
      d[k] = hi[0] * approx[2 * k] + hi[1] * approx[2 * k + 1];
    }
    details.push_back(std::move(d));
    approx = std::move(a);
  }
  std::vector<std::vector<double>> out;
  out.push_back(std::move(approx));
  for (auto it = details.rbegin(); it != details.rend(); ++it) out.push_back(std::move(*it));
  return out;
}

std::vector<double> haar_synthesis(const std::vector<std::vector<double>>& coeffs,
                                   const DecompositionConfig& cfg) {
  const auto& lo = cfg.low_pass;
  const auto& hi = cfg.high_pass;
  std::vector<double> approx = coeffs.at(0);
  for (int r = 1; r <= cfg.level; ++r) {
    const auto& d = coeffs.at(r);
    if (d.size() != approx.size()) {
      throw Error(ErrorCode::ShapeMismatch, "detail/approximation length mismatch");
    }
    std::vector<double> next(2 * approx.size());
    for (std::size_t k = 0; k < approx.size(); ++k) {
      // Transpose of the orthonormal analysis step.
      next[2 * k] = lo[0] * approx[k] + hi[0] * d[k];
      next[2 * k + 1] = lo[1] * approx[k] + hi[1] * d[k];
    }
    approx = std::move(next);
  }
  return approx;
}

WaveletGrid dwt_decompose(const TimeSeries& series, const DecompositionConfig& cfg) {
  check_series(series);
  const int steps = series.steps();
  if (steps < 2 || steps % (1 << cfg.level) != 0) {
    throw Error(ErrorCode::LengthNotDivisible,
                "T=" + std::to_string(steps) + " not divisible by 2^" + std::to_string(cfg.level));
  }
  check_config(cfg, steps);

  WaveletGrid grid;
  grid.row_scales = row_scales(cfg.level);
  grid.maps.reserve(series.channels());
  std::vector<double> x(steps);
  for (int c = 0; c < series.channels(); ++c) {
    for (int t = 0; t < steps; ++t) x[t] = series.values(c, t);
    const auto coeffs = haar_analysis(x, cfg);
    Mat map(cfg.rows(), steps);
    for (int r = 0; r < cfg.rows(); ++r) {
      const int rep = grid.row_scales[r];
      for (int t = 0; t < steps; ++t) map(r, t) = coeffs[r][t / rep];
    }
    grid.maps.push_back(std::move(map));
  }
  return grid;
}

std::vector<std::vector<double>> native_coefficients(const WaveletGrid& grid, int channel) {
  const Mat& map = grid.maps.at(channel);
  std::vector<std::vector<double>> out;
  for (int r = 0; r < map.rows(); ++r) {
    const int rep = grid.row_scales.at(r);
    const int n = static_cast<int>(map.cols()) / rep;
    std::vector<double> row(n);
    for (int k = 0; k < n; ++k) row[k] = map.row(r).segment(k * rep, rep).mean();
    out.push_back(std::move(row));
  }
  return out;
}

TimeSeries idwt_reconstruct(const WaveletGrid& grid, const DecompositionConfig& cfg) {
  if (grid.maps.empty()) throw Error(ErrorCode::ShapeMismatch, "empty grid");
  const int steps = grid.steps();
  if (grid.rows() != cfg.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "grid has " + std::to_string(grid.rows()) +
                                              " rows, expected " + std::to_string(cfg.rows()));
  }
  if (steps % (1 << cfg.level) != 0) {
    throw Error(ErrorCode::ShapeMismatch, "grid width not divisible by 2^J");
  }
  for (const auto& m : grid.maps) {
    if (m.rows() != cfg.rows() || m.cols() != steps) {
      throw Error(ErrorCode::ShapeMismatch, "channel maps differ in shape");
    }
  }
  check_config(cfg, steps);

  WaveletGrid aligned{grid.maps, row_scales(cfg.level)};
  TimeSeries out;
  out.values.resize(grid.channels(), steps);
  out.normalized = true;
  for (int c = 0; c < grid.channels(); ++c) {
    const auto x = haar_synthesis(native_coefficients(aligned, c), cfg);
    for (int t = 0; t < steps; ++t) out.values(c, t) = x[t];
  }
  return out;
}

}  // namespace tfcodit::signal
