#pragma once

// Synthetic treasury-futures-like corpus: a bounded mean-reverting price
// around 100 whose drift/volatility/volume switch between labeled regimes in
// fixed-length blocks.

#include "tfcodit/preprocess.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tfcodit::synthetic {

struct Regime {
  std::string label;
  double drift = 0.0;        // price units per day
  double volatility = 0.15;  // daily shock stddev, price units
  double volume_level = 50000;
};

struct CorpusSpec {
  int n_days = 600;
  std::vector<Regime> regimes{{"up", 0.12, 0.15, 60000}, {"down", -0.12, 0.15, 40000}};
  int block_days = 40;  // regimes cycle in blocks of this length
  double center = 100.0;
  double lower = 90.0;
  double upper = 110.0;
  double mean_reversion = 0.01;
  double open_interest = 80000;
  std::string start_date = "2015-01-05";
  Contract contract = Contract::T;
  std::uint64_t seed = 7;

  /// Throws InvalidSpec.
  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusSpec& s);
void from_json(const nlohmann::json& j, CorpusSpec& s);

struct Corpus {
  std::vector<preprocess::RawDailyRecord> records;
  std::vector<int> regime;  // regime index per record
};

Corpus generate(const CorpusSpec& spec);

/// Least-squares slope of y against 0..n-1.
double trend_slope(const std::vector<double>& y);

}  // namespace tfcodit::synthetic
