#include "tfcodit/preprocess.hpp"

#include "tfcodit/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tfcodit::preprocess {

std::optional<std::string> record_violation(const RawDailyRecord& r) {
  for (double p : {r.open, r.high, r.low, r.close, r.settle}) {
    if (!(p > 0) || !std::isfinite(p)) return "non-positive price";
  }
  const double lo = std::min(r.open, r.close);
  const double hi = std::max(r.open, r.close);
  if (r.low > lo || hi > r.high) return "price ordering low <= open,close <= high violated";
  if (!(r.volume >= 0) || !(r.value >= 0) || !(r.open_interest >= 0)) {
    return "negative volume/value/open interest";
  }
  return std::nullopt;
}

Normalized normalize(const std::vector<RawDailyRecord>& records, Contract contract) {
  if (records.size() < 2) {
    throw Error(ErrorCode::TooShort, "normalization needs at least 2 records");
  }
  const int steps = static_cast<int>(records.size()) - 1;
  Normalized out;
  out.series.values.resize(kNumChannels, steps);
  out.series.contract = contract;
  out.series.normalized = true;
  auto& st = out.state;
  st.anchor_date = records.front().date;
  st.anchor_open = records.front().open;
  st.anchor_open_interest = records.front().open_interest;

  for (int t = 0; t < steps; ++t) {
    const auto& prev = records[t];
    const auto& cur = records[t + 1];
    if (!(prev.open > 0)) {
      throw Error(ErrorCode::NonPositiveAnchor, "Open_{t-1} <= 0 at " + format_date(prev.date));
    }
    if (!(prev.open_interest > 0)) {
      throw Error(ErrorCode::NonPositiveAnchor,
                  "open interest X_{t-1} <= 0 at " + format_date(prev.date));
    }
    const double base = prev.open;
    auto& v = out.series.values;
    v(kOpen, t) = (cur.open - base) / base * 100.0;
    v(kHigh, t) = (cur.high - base) / base * 100.0;
    v(kLow, t) = (cur.low - base) / base * 100.0;
    v(kClose, t) = (cur.close - base) / base * 100.0;
    v(kSettle, t) = (cur.settle - base) / base * 100.0;
    v(kValue, t) = std::log10(cur.value + 1.0);
    v(kVolume, t) = std::log10(cur.volume + 1.0);
    v(kOpenInterest, t) = (cur.open_interest - prev.open_interest) / prev.open_interest;
    st.prev_open.push_back(base);
    st.prev_open_interest.push_back(prev.open_interest);
    st.dates.push_back(cur.date);
  }
  out.series.dates = st.dates;
  check_series(out.series);
  return out;
}

std::vector<RawDailyRecord> denormalize(const TimeSeries& series, const NormalizationState& state) {
  check_series(series);
  if (!(state.anchor_open > 0) || !(state.anchor_open_interest > 0)) {
    throw Error(ErrorCode::MissingAnchor, "normalization state has no positive anchors");
  }
  const int steps = series.steps();
  std::vector<RawDailyRecord> out;
  out.reserve(steps);
  double prev_open = state.anchor_open;
  double prev_oi = state.anchor_open_interest;
  Date date = state.anchor_date;
  const auto& v = series.values;
  for (int t = 0; t < steps; ++t) {
    RawDailyRecord r;
    if (static_cast<int>(state.dates.size()) == steps) {
      r.date = state.dates[t];
    } else if (static_cast<int>(series.dates.size()) == steps) {
      r.date = series.dates[t];
    } else {
      date = next_business_day(date);
      r.date = date;
    }
    auto price = [&](int ch) { return prev_open * (1.0 + v(ch, t) / 100.0); };
    r.open = price(kOpen);
    r.high = price(kHigh);
    r.low = price(kLow);
    r.close = price(kClose);
    r.settle = price(kSettle);
    r.value = std::pow(10.0, v(kValue, t)) - 1.0;
    r.volume = std::pow(10.0, v(kVolume, t)) - 1.0;
    r.open_interest = prev_oi * (1.0 + v(kOpenInterest, t));
    prev_open = r.open;
    prev_oi = r.open_interest;
    out.push_back(r);
  }
  return out;
}

std::string prompt_ref(Contract contract, const std::optional<Date>& start, int start_index,
                       int horizon) {
  std::string where = start ? format_date(*start) : "#" + std::to_string(start_index);
  return std::string(to_string(contract)) + ":" + where + ":" + std::to_string(horizon);
}

std::vector<WindowedSample> make_windows(const TimeSeries& series, int horizon, int stride) {
  if (horizon < 1 || stride < 1) throw Error(ErrorCode::InvalidConfig, "horizon/stride < 1");
  if (series.steps() < horizon) {
    throw Error(ErrorCode::HorizonTooLong, "horizon " + std::to_string(horizon) +
                                               " exceeds series length " +
                                               std::to_string(series.steps()));
  }
  std::vector<WindowedSample> out;
  for (int s = 0; s + horizon <= series.steps(); s += stride) {
    WindowedSample w;
    w.series = series.slice(s, horizon);
    w.contract = series.contract;
    w.start_index = s;
    if (!series.dates.empty()) w.start_date = series.dates[s];
    w.prompt_ref = prompt_ref(series.contract, w.start_date, s, horizon);
    out.push_back(std::move(w));
  }
  return out;
}

Split split_train_test(const TimeSeries& series, int test_days) {
  if (series.steps() <= test_days) {
    throw Error(ErrorCode::TooShort, "series of length " + std::to_string(series.steps()) +
                                         " cannot hold a " + std::to_string(test_days) +
                                         "-day test tail");
  }
  const int n_train = series.steps() - test_days;
  return {series.slice(0, n_train), series.slice(n_train, test_days)};
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error(ErrorCode::Io, "number formatting failed");
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

double parse_double(const std::string& s, int line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

void check_header(const std::string& header) {
  std::string h = header;
  if (h.size() >= 3 && static_cast<unsigned char>(h[0]) == 0xEF) h = h.substr(3);  // UTF-8 BOM
  while (!h.empty() && (h.back() == '\r' || h.back() == ' ')) h.pop_back();
  if (h != kCsvHeader) throw Error(ErrorCode::Parse, "unexpected CSV header '" + h + "'");
}

}  // namespace

std::vector<RawDailyRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Parse, "empty CSV");
  check_header(line);
  std::vector<RawDailyRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 9) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected 9 columns");
    }
    RawDailyRecord r;
    r.date = parse_date(cells[0]);
    r.open = parse_double(cells[1], line_no);
    r.high = parse_double(cells[2], line_no);
    r.low = parse_double(cells[3], line_no);
    r.close = parse_double(cells[4], line_no);
    r.settle = parse_double(cells[5], line_no);
    r.value = parse_double(cells[6], line_no);
    r.volume = parse_double(cells[7], line_no);
    r.open_interest = parse_double(cells[8], line_no);
    out.push_back(r);
  }
  return out;
}

std::vector<RawDailyRecord> read_records_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_records_csv(in);
}

void write_records_csv(std::ostream& out, const std::vector<RawDailyRecord>& records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << format_date(r.date);
    for (double v : {r.open, r.high, r.low, r.close, r.settle, r.value, r.volume,
                     r.open_interest}) {
      out << ',' << format_number(v);
    }
    out << '\n';
  }
}

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<RawDailyRecord>& records) {
  auto out = open_out(path);
  write_records_csv(out, records);
}

void write_series_csv(std::ostream& out, const TimeSeries& series) {
  check_series(series);
  out << kCsvHeader << '\n';
  for (int t = 0; t < series.steps(); ++t) {
    out << (series.dates.empty() ? std::to_string(t) : format_date(series.dates[t]));
    for (int c = 0; c < kNumChannels; ++c) out << ',' << format_number(series.values(c, t));
    out << '\n';
  }
}

void write_series_csv(const std::filesystem::path& path, const TimeSeries& series) {
  auto out = open_out(path);
  write_series_csv(out, series);
}

TimeSeries read_series_csv(const std::filesystem::path& path, Contract contract,
                           bool normalized) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Parse, "empty CSV " + path.string());
  check_header(line);
  std::vector<std::array<double, kNumChannels>> rows;
  std::vector<Date> dates;
  bool dated = true;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 9) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) +
                                        ": expected 9 columns");
    }
    if (cells[0].size() == 10 && cells[0][4] == '-') {
      dates.push_back(parse_date(cells[0]));
    } else {
      dated = false;
    }
    std::array<double, kNumChannels> row{};
    for (int c = 0; c < kNumChannels; ++c) row[c] = parse_double(cells[c + 1], line_no);
    rows.push_back(row);
  }
  TimeSeries s;
  s.contract = contract;
  s.normalized = normalized;
  s.values.resize(kNumChannels, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (int c = 0; c < kNumChannels; ++c) s.values(c, static_cast<Eigen::Index>(t)) = rows[t][c];
  }
  if (dated) s.dates = std::move(dates);
  return s;
}

}  // namespace tfcodit::preprocess
