#pragma once

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <string>
#include <string_view>
#include <vector>

namespace tfcodit {

/// Row-major dense matrix used throughout the library.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Date = std::chrono::year_month_day;

Date parse_date(std::string_view iso);
std::string format_date(const Date& d);
/// Next Monday..Friday after `d`.
Date next_business_day(const Date& d);

enum class Contract { TS, TF, T, TL };

std::string_view to_string(Contract c);
Contract parse_contract(std::string_view s);

inline constexpr int kNumChannels = 8;

enum Channel : int {
  kOpen = 0,
  kHigh = 1,
  kLow = 2,
  kClose = 3,
  kSettle = 4,
  kValue = 5,
  kVolume = 6,
  kOpenInterest = 7,
};

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "open", "high", "low", "close", "settle", "value", "volume", "open_interest"};

/// An 8-channel daily market sequence, channels x steps.
struct TimeSeries {
  Mat values;  // kNumChannels x T
  Contract contract = Contract::T;
  bool normalized = false;
  std::vector<Date> dates;  // optional; empty or one per step

  int steps() const { return static_cast<int>(values.cols()); }
  int channels() const { return static_cast<int>(values.rows()); }

  /// Columns [start, start + length) with matching dates.
  TimeSeries slice(int start, int length) const;
};

/// Throws NonFiniteInput / ShapeMismatch when the series breaks its invariants.
void check_series(const TimeSeries& s);

}  // namespace tfcodit
