#include "doctest.h"

#include "tfcodit/errors.hpp"
#include "tfcodit/signal.hpp"

#include <cmath>
#include <random>

using namespace tfcodit;
using signal::DecompositionConfig;

namespace {

TimeSeries random_series(std::mt19937_64& rng, int steps) {
  std::normal_distribution<double> n(0.0, 3.0);
  TimeSeries s;
  s.values.resize(kNumChannels, steps);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = n(rng);
  return s;
}

TimeSeries single_channel(const std::vector<double>& x) {
  TimeSeries s;
  s.values = Mat::Zero(kNumChannels, static_cast<Eigen::Index>(x.size()));
  for (std::size_t t = 0; t < x.size(); ++t) s.values(0, static_cast<Eigen::Index>(t)) = x[t];
  return s;
}

}  // namespace

TEST_SUITE("signal") {

TEST_CASE("constant channel has zero detail and sqrt2-scaled approximation") {
  DecompositionConfig cfg{.level = 1};
  auto grid = signal::dwt_decompose(single_channel({1, 1, 1, 1}), cfg);
  for (int t = 0; t < 4; ++t) {
    CHECK(grid.maps[0](0, t) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(grid.maps[0](1, t) == 0.0);
  }
}

TEST_CASE("hand-evaluated two-tap filter bank on [1,2,3,4]") {
  DecompositionConfig cfg{.level = 1};
  auto grid = signal::dwt_decompose(single_channel({1, 2, 3, 4}), cfg);
  auto native = signal::native_coefficients(grid, 0);
  const double r2 = std::sqrt(2.0);
  REQUIRE(native.size() == 2);
  CHECK(native[0][0] == doctest::Approx(3 / r2).epsilon(1e-14));
  CHECK(native[0][1] == doctest::Approx(7 / r2).epsilon(1e-14));
  CHECK(native[1][0] == doctest::Approx(-1 / r2).epsilon(1e-14));
  CHECK(native[1][1] == doctest::Approx(-1 / r2).epsilon(1e-14));
  // Expanded rows repeat each native coefficient twice.
  CHECK(grid.maps[0](0, 0) == grid.maps[0](0, 1));
  CHECK(grid.maps[0](1, 2) == grid.maps[0](1, 3));
  auto back = signal::idwt_reconstruct(grid, cfg);
  for (int t = 0; t < 4; ++t) CHECK(back.values(0, t) == doctest::Approx(t + 1.0).epsilon(1e-14));
}

TEST_CASE("grid shape is (8, J+1, T) with the documented row scales") {
  std::mt19937_64 rng(3);
  for (int level : {1, 2, 3}) {
    DecompositionConfig cfg{.level = level};
    auto grid = signal::dwt_decompose(random_series(rng, 32), cfg);
    CHECK(grid.channels() == 8);
    CHECK(grid.rows() == level + 1);
    CHECK(grid.steps() == 32);
    REQUIRE(grid.row_scales.size() == static_cast<std::size_t>(level + 1));
    CHECK(grid.row_scales[0] == (1 << level));
    CHECK(grid.row_scales.back() == 2);
  }
}

TEST_CASE("rows are piecewise constant in runs of row_scales") {
  std::mt19937_64 rng(4);
  DecompositionConfig cfg{.level = 3};
  auto grid = signal::dwt_decompose(random_series(rng, 64), cfg);
  for (const auto& m : grid.maps) {
    for (int r = 0; r < m.rows(); ++r) {
      const int rep = grid.row_scales[r];
      for (int t = 0; t < m.cols(); ++t) CHECK(m(r, t) == m(r, (t / rep) * rep));
    }
  }
}

TEST_CASE("round trip, Parseval energy and linearity over random inputs") {
  std::mt19937_64 rng(5);
  for (int steps : {8, 16, 32, 64, 128}) {
    for (int level : {1, 2, 3}) {
      DecompositionConfig cfg{.level = level};
      auto x = random_series(rng, steps);
      auto y = random_series(rng, steps);
      auto gx = signal::dwt_decompose(x, cfg);
      auto back = signal::idwt_reconstruct(gx, cfg);
      CHECK((back.values - x.values).cwiseAbs().maxCoeff() < 1e-9);

      for (int c = 0; c < kNumChannels; ++c) {
        double energy = 0;
        for (const auto& row : signal::native_coefficients(gx, c)) {
          for (double v : row) energy += v * v;
        }
        const double expected = x.values.row(c).squaredNorm();
        CHECK(std::abs(energy - expected) <= 1e-9 * expected);
      }

      const double a = 1.7, b = -0.3;
      TimeSeries combo;
      combo.values = a * x.values + b * y.values;
      auto gc = signal::dwt_decompose(combo, cfg);
      auto gy = signal::dwt_decompose(y, cfg);
      for (int c = 0; c < kNumChannels; ++c) {
        CHECK((gc.maps[c] - (a * gx.maps[c] + b * gy.maps[c])).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
}

TEST_CASE("all-zero grid reconstructs to zeros") {
  DecompositionConfig cfg{.level = 2};
  signal::WaveletGrid grid{std::vector<Mat>(8, Mat::Zero(3, 16)), signal::row_scales(2)};
  auto s = signal::idwt_reconstruct(grid, cfg);
  CHECK(s.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("perturbation inside a repetition run equals the run-mean grid") {
  std::mt19937_64 rng(6);
  DecompositionConfig cfg{.level = 2};
  auto grid = signal::dwt_decompose(random_series(rng, 16), cfg);
  auto perturbed = grid;
  // row 1 (d_2) has runs of 4: push +0.5 / -0.1 into the run starting at column 4
  perturbed.maps[2](1, 4) += 0.5;
  perturbed.maps[2](1, 6) -= 0.1;
  auto averaged = perturbed;
  const double run_mean = perturbed.maps[2].row(1).segment(4, 4).mean();
  averaged.maps[2].row(1).segment(4, 4).setConstant(run_mean);
  auto a = signal::idwt_reconstruct(perturbed, cfg);
  auto b = signal::idwt_reconstruct(averaged, cfg);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("error paths") {
  DecompositionConfig cfg{.level = 3};
  TimeSeries s;
  s.values = Mat::Zero(8, 12);
  CHECK_THROWS_AS(signal::dwt_decompose(s, cfg), Error);
  try {
    signal::dwt_decompose(s, cfg);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthNotDivisible);
  }
  s.values = Mat::Zero(8, 16);
  s.values(2, 3) = std::nan("");
  try {
    signal::dwt_decompose(s, cfg);
    FAIL("expected NonFiniteInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteInput);
  }
  signal::WaveletGrid bad{std::vector<Mat>(8, Mat::Zero(3, 16)), signal::row_scales(2)};
  try {
    signal::idwt_reconstruct(bad, cfg);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  DecompositionConfig skewed{.level = 1, .low_pass = {0.6, 0.8}};
  s.values = Mat::Zero(8, 16);
  CHECK_THROWS_AS(signal::dwt_decompose(s, skewed), Error);
}

}  // TEST_SUITE
