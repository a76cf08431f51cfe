#pragma once

// Evaluation: OHLC MSE/MAE per (contract, horizon), multi-trajectory error
// bands and report tables.

#include "tfcodit/series.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace tfcodit::evalharness {

inline constexpr int kHeadlineChannels = 4;  // open, high, low, close

struct Score {
  double mse = 0;
  double mae = 0;
  std::array<double, kNumChannels> channel_mse{};
  std::array<double, kNumChannels> channel_mae{};
};

/// Headline metrics over the OHLC rows; every channel in the breakdown.
Score score(const TimeSeries& pred, const TimeSeries& truth);

struct ErrorBand {
  int channel = kClose;
  std::vector<double> truth, min, mean, max;  // per step
  double cumulative_abs_error = 0;            // sum over trajectories and steps
  int trajectories = 0;
};

ErrorBand error_band(const std::vector<TimeSeries>& trajectories, const TimeSeries& truth,
                     int channel = kClose);

/// step,truth,min,mean,max
void write_band_csv(std::ostream& out, const ErrorBand& band);

struct ReportRow {
  Contract contract = Contract::T;
  int horizon = 0;
  int n_samples = 0;
  double mse = 0;
  double mae = 0;
  std::array<double, kNumChannels> channel_mse{};
  std::array<double, kNumChannels> channel_mae{};
};

struct BandSummary {
  std::string name;
  int trajectories = 0;
  double cumulative_abs_error = 0;
  double mean_width = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;  // sorted by (contract, horizon)
  std::vector<BandSummary> bands;
};

/// Accumulates per-sample scores into (contract, horizon) rows.
class ReportBuilder {
 public:
  void add(Contract contract, int horizon, const Score& s);
  void add_band(const std::string& name, const ErrorBand& band);
  EvalReport build() const;

 private:
  struct Acc {
    int n = 0;
    Score sum;
  };
  std::map<std::pair<int, int>, Acc> acc_;
  std::vector<BandSummary> bands_;
};

nlohmann::json to_json(const EvalReport& r);
/// Aligned columns: contract, horizon, n, mse, mae.
std::string format_table(const EvalReport& r);

/// Scores every prediction CSV against the truth CSV of the same stem.
/// Predictions named "<stem>__k<i>.csv" are trajectories of one truth file;
/// groups of two or more also get a close-channel band CSV in `band_dir`
/// when it is non-empty. File stems start with the contract code
/// ("T_..."). Throws UnmatchedFiles.
EvalReport evaluate_directories(const std::filesystem::path& predictions,
                                const std::filesystem::path& truth,
                                const std::filesystem::path& band_dir = {});

/// report.json + report.txt in `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& r);

}  // namespace tfcodit::evalharness
