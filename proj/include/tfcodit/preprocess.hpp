#pragma once

#include "tfcodit/series.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tfcodit::preprocess {

struct RawDailyRecord {
  Date date{};
  double open = 0, high = 0, low = 0, close = 0, settle = 0;
  double value = 0;          // turnover, millions CNY
  double volume = 0;         // contracts
  double open_interest = 0;  // contracts
};

/// Empty when the record satisfies price ordering and non-negativity rules,
/// otherwise a description of the first violation.
std::optional<std::string> record_violation(const RawDailyRecord& r);

/// Anchors for undoing the stratified normalization. Denormalization chains
/// forward from `open` / `open_interest` of the anchor day; the per-step
/// anchor series is kept for inspection.
struct NormalizationState {
  Date anchor_date{};
  double anchor_open = 0;
  double anchor_open_interest = 0;
  std::vector<double> prev_open;           // Open_{t-1} per emitted step
  std::vector<double> prev_open_interest;  // X_{t-1} per emitted step
  std::vector<Date> dates;                 // dates of emitted steps (may be empty)
};

struct Normalized {
  TimeSeries series;
  NormalizationState state;
};

/// Prices -> percent change vs previous open, value/volume -> log10(x+1),
/// open interest -> growth rate. The first record is consumed as the anchor.
Normalized normalize(const std::vector<RawDailyRecord>& records, Contract contract = Contract::T);

/// Exact inverse of normalize(); dates come from state.dates when present,
/// otherwise business days following the anchor date.
std::vector<RawDailyRecord> denormalize(const TimeSeries& series, const NormalizationState& state);

struct WindowedSample {
  TimeSeries series;
  std::string prompt_ref;
  Contract contract = Contract::T;
  std::optional<Date> start_date;
  int start_index = 0;
};

/// Identifier pairing a window with its prompt: "<contract>:<start-date|index>:<L>".
std::string prompt_ref(Contract contract, const std::optional<Date>& start, int start_index,
                       int horizon);

std::vector<WindowedSample> make_windows(const TimeSeries& series, int horizon, int stride = 1);

inline constexpr int kTestDays = 200;

struct Split {
  TimeSeries train;
  TimeSeries test;
};

/// Last 200 steps become the test set; windows built separately on each side
/// never straddle the boundary.
Split split_train_test(const TimeSeries& series, int test_days = kTestDays);

// CSV ingestion: date,open,high,low,close,settle,value,volume,open_interest
inline constexpr const char* kCsvHeader =
    "date,open,high,low,close,settle,value,volume,open_interest";

std::vector<RawDailyRecord> read_records_csv(std::istream& in);
std::vector<RawDailyRecord> read_records_csv(const std::filesystem::path& path);
void write_records_csv(std::ostream& out, const std::vector<RawDailyRecord>& records);
void write_records_csv(const std::filesystem::path& path,
                       const std::vector<RawDailyRecord>& records);

/// Same column layout with normalized values; dates required.
void write_series_csv(std::ostream& out, const TimeSeries& series);
void write_series_csv(const std::filesystem::path& path, const TimeSeries& series);
TimeSeries read_series_csv(const std::filesystem::path& path, Contract contract, bool normalized);

std::string format_number(double v);

}  // namespace tfcodit::preprocess
