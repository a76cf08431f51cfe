#include "doctest.h"

#include "tfcodit/errors.hpp"
#include "tfcodit/evalharness.hpp"
#include "tfcodit/preprocess.hpp"

#include <filesystem>
#include <random>
#include <sstream>

using namespace tfcodit;
using namespace tfcodit::evalharness;
namespace fs = std::filesystem;

namespace {

TimeSeries random_series(std::mt19937_64& rng, int steps) {
  std::normal_distribution<double> n(0.0, 1.0);
  TimeSeries s;
  s.normalized = true;
  s.values.resize(kNumChannels, steps);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = n(rng);
  Date d = parse_date("2024-01-02");
  for (int t = 0; t < steps; ++t) {
    s.dates.push_back(d);
    d = next_business_day(d);
  }
  return s;
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("evalharness") {

TEST_CASE("score hand cases") {
  std::mt19937_64 rng(1);
  const auto truth = random_series(rng, 16);
  auto s = score(truth, truth);
  CHECK(s.mse == 0.0);
  CHECK(s.mae == 0.0);

  TimeSeries shifted = truth;
  shifted.values.array() += 1.0;
  s = score(shifted, truth);
  CHECK(s.mse == doctest::Approx(1.0));
  CHECK(s.mae == doctest::Approx(1.0));

  TimeSeries alt = truth;
  for (int t = 0; t < 16; ++t) alt.values.col(t).array() += (t % 2 == 0 ? 2.0 : -2.0);
  s = score(alt, truth);
  CHECK(s.mse == doctest::Approx(4.0));
  CHECK(s.mae == doctest::Approx(2.0));
}

TEST_CASE("headline metrics use OHLC only") {
  std::mt19937_64 rng(2);
  const auto truth = random_series(rng, 8);
  TimeSeries p = truth;
  p.values.row(kVolume).array() += 10.0;
  const auto s = score(p, truth);
  CHECK(s.mse == 0.0);
  CHECK(s.channel_mse[kVolume] == doctest::Approx(100.0));
  CHECK(s.channel_mae[kVolume] == doctest::Approx(10.0));
}

TEST_CASE("score symmetry and scaling") {
  std::mt19937_64 rng(3);
  const auto truth = random_series(rng, 32);
  const auto noise = random_series(rng, 32);
  TimeSeries plus = truth, minus = truth, scaled = truth;
  plus.values += noise.values;
  minus.values -= noise.values;
  scaled.values += 3.0 * noise.values;
  const auto a = score(plus, truth);
  const auto b = score(minus, truth);
  const auto c = score(scaled, truth);
  CHECK(a.mse == doctest::Approx(b.mse));
  CHECK(a.mae == doctest::Approx(b.mae));
  CHECK(c.mse == doctest::Approx(9.0 * a.mse));
  CHECK(c.mae == doctest::Approx(3.0 * a.mae));
}

TEST_CASE("shape mismatch") {
  std::mt19937_64 rng(4);
  try {
    score(random_series(rng, 8), random_series(rng, 9));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("error band hand cases") {
  std::mt19937_64 rng(5);
  const auto truth = random_series(rng, 12);
  auto band = error_band({truth, truth, truth}, truth);
  CHECK(band.cumulative_abs_error == 0.0);
  for (std::size_t t = 0; t < 12; ++t) CHECK(band.max[t] - band.min[t] == 0.0);

  TimeSeries up = truth, down = truth;
  up.values.array() += 1.0;
  down.values.array() -= 1.0;
  band = error_band({up, down}, truth);
  CHECK(band.cumulative_abs_error == doctest::Approx(2.0 * 12));
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(band.max[t] - band.min[t] == doctest::Approx(2.0));
    CHECK(band.mean[t] == doctest::Approx(band.truth[t]));
  }
  CHECK_THROWS_AS(error_band({truth}, truth), Error);
}

TEST_CASE("envelope contains every trajectory") {
  std::mt19937_64 rng(6);
  const auto truth = random_series(rng, 20);
  std::vector<TimeSeries> k;
  for (int i = 0; i < 7; ++i) k.push_back(random_series(rng, 20));
  const auto band = error_band(k, truth);
  for (const auto& tr : k) {
    for (int t = 0; t < 20; ++t) {
      CHECK(tr.values(kClose, t) >= band.min[static_cast<std::size_t>(t)]);
      CHECK(tr.values(kClose, t) <= band.max[static_cast<std::size_t>(t)]);
    }
  }
  std::ostringstream csv;
  write_band_csv(csv, band);
  CHECK(csv.str().rfind("step,truth,min,mean,max\n", 0) == 0);
}

TEST_CASE("directory evaluation: identity predictions and row counts") {
  std::mt19937_64 rng(7);
  const auto pred = fresh_dir("tfcodit_eval_pred");
  const auto truth = fresh_dir("tfcodit_eval_truth");
  for (const char* stem : {"T_a", "T_b", "TF_a"}) {
    const auto s = random_series(rng, 8);
    preprocess::write_series_csv(truth / (std::string(stem) + ".csv"), s);
    preprocess::write_series_csv(pred / (std::string(stem) + "__k0.csv"), s);
    preprocess::write_series_csv(pred / (std::string(stem) + "__k1.csv"), s);
  }
  const auto l16 = random_series(rng, 16);
  preprocess::write_series_csv(truth / "T_long.csv", l16);
  preprocess::write_series_csv(pred / "T_long.csv", l16);
  const auto report = evaluate_directories(pred, truth, pred / "bands");
  CHECK(report.rows.size() == 3);  // (TF,8), (T,8), (T,16)
  for (const auto& r : report.rows) {
    CHECK(r.mse == 0.0);
    CHECK(r.mae == 0.0);
  }
  CHECK(report.bands.size() == 3);
  CHECK(fs::exists(pred / "bands" / "T_a.band.csv"));

  // JSON and table agree
  const auto j = to_json(report);
  const auto table = format_table(report);
  CHECK(j["rows"].size() == report.rows.size());
  CHECK(table.find("0.000000") != std::string::npos);

  fs::remove(truth / "T_b.csv");
  try {
    evaluate_directories(pred, truth);
    FAIL("expected UnmatchedFiles");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnmatchedFiles);
  }
  fs::remove_all(pred);
  fs::remove_all(truth);
}

TEST_CASE("report table numbers match the JSON") {
  ReportBuilder b;
  Score s;
  s.mse = 0.123456789;
  s.mae = 0.3;
  b.add(Contract::T, 32, s);
  s.mse = 0.2;
  b.add(Contract::T, 32, s);
  const auto r = b.build();
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].n_samples == 2);
  const double mse = to_json(r)["rows"][0]["mse"].get<double>();
  std::istringstream table(format_table(r));
  std::string header, contract;
  int horizon = 0, n = 0;
  double tmse = 0, tmae = 0;
  std::getline(table, header);
  table >> contract >> horizon >> n >> tmse >> tmae;
  CHECK(contract == "T");
  CHECK(horizon == 32);
  CHECK(n == 2);
  CHECK(tmse == doctest::Approx(mse).epsilon(1e-6));
  CHECK(tmae == doctest::Approx(0.3));
}

}  // TEST_SUITE
