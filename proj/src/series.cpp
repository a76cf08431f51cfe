#include "tfcodit/series.hpp"

#include "tfcodit/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace tfcodit {

namespace {

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::Parse, "bad date '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

Date parse_date(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw Error(ErrorCode::Parse, "bad date '" + std::string(iso) + "'");
  }
  Date d{std::chrono::year{parse_int(iso.substr(0, 4), iso)},
         std::chrono::month{static_cast<unsigned>(parse_int(iso.substr(5, 2), iso))},
         std::chrono::day{static_cast<unsigned>(parse_int(iso.substr(8, 2), iso))}};
  if (!d.ok()) throw Error(ErrorCode::Parse, "invalid date '" + std::string(iso) + "'");
  return d;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Date next_business_day(const Date& d) {
  std::chrono::sys_days day{d};
  do {
    day += std::chrono::days{1};
  } while (std::chrono::weekday{day} == std::chrono::Saturday ||
           std::chrono::weekday{day} == std::chrono::Sunday);
  return Date{day};
}

std::string_view to_string(Contract c) {
  switch (c) {
    case Contract::TS: return "TS";
    case Contract::TF: return "TF";
    case Contract::T: return "T";
    case Contract::TL: return "TL";
  }
  return "?";
}

Contract parse_contract(std::string_view s) {
  if (s == "TS") return Contract::TS;
  if (s == "TF") return Contract::TF;
  if (s == "T") return Contract::T;
  if (s == "TL") return Contract::TL;
  throw Error(ErrorCode::Parse, "unknown contract '" + std::string(s) + "'");
}

TimeSeries TimeSeries::slice(int start, int length) const {
  if (start < 0 || length < 0 || start + length > steps()) {
    throw Error(ErrorCode::ShapeMismatch, "slice out of range");
  }
  TimeSeries out;
  out.values = values.middleCols(start, length);
  out.contract = contract;
  out.normalized = normalized;
  if (!dates.empty()) out.dates.assign(dates.begin() + start, dates.begin() + start + length);
  return out;
}

void check_series(const TimeSeries& s) {
  if (s.channels() != kNumChannels) {
    throw Error(ErrorCode::ShapeMismatch,
                "expected 8 channels, got " + std::to_string(s.channels()));
  }
  if (!s.dates.empty() && static_cast<int>(s.dates.size()) != s.steps()) {
    throw Error(ErrorCode::ShapeMismatch, "date count does not match steps");
  }
  if (!s.values.allFinite()) throw Error(ErrorCode::NonFiniteInput, "series has NaN/inf");
}

}  // namespace tfcodit
