#include "tfcodit/evalharness.hpp"

#include "tfcodit/errors.hpp"
#include "tfcodit/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace tfcodit::evalharness {

namespace fs = std::filesystem;

namespace {

void check_shapes(const TimeSeries& a, const TimeSeries& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw Error(ErrorCode::ShapeMismatch,
                "series shapes differ: " + std::to_string(a.values.rows()) + "x" +
                    std::to_string(a.values.cols()) + " vs " + std::to_string(b.values.rows()) +
                    "x" + std::to_string(b.values.cols()));
  }
  if (a.values.rows() != kNumChannels || a.values.cols() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "expected 8 channels and at least one step");
  }
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Score score(const TimeSeries& pred, const TimeSeries& truth) {
  check_shapes(pred, truth);
  Score s;
  const Mat diff = pred.values - truth.values;
  for (int c = 0; c < kNumChannels; ++c) {
    s.channel_mse[c] = diff.row(c).squaredNorm() / static_cast<double>(diff.cols());
    s.channel_mae[c] = diff.row(c).cwiseAbs().mean();
  }
  const auto ohlc = diff.topRows(kHeadlineChannels);
  s.mse = ohlc.squaredNorm() / static_cast<double>(ohlc.size());
  s.mae = ohlc.cwiseAbs().mean();
  return s;
}

ErrorBand error_band(const std::vector<TimeSeries>& trajectories, const TimeSeries& truth,
                     int channel) {
  if (trajectories.size() < 2) throw Error(ErrorCode::ShapeMismatch, "error band needs K >= 2");
  if (channel < 0 || channel >= kNumChannels) throw Error(ErrorCode::ShapeMismatch, "bad channel");
  for (const auto& t : trajectories) check_shapes(t, truth);
  const auto steps = static_cast<std::size_t>(truth.steps());
  ErrorBand b;
  b.channel = channel;
  b.trajectories = static_cast<int>(trajectories.size());
  b.truth.resize(steps);
  b.min.assign(steps, 0);
  b.mean.assign(steps, 0);
  b.max.assign(steps, 0);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    b.truth[t] = truth.values(channel, col);
    double lo = trajectories.front().values(channel, col);
    double hi = lo;
    double sum = 0;
    for (const auto& tr : trajectories) {
      const double v = tr.values(channel, col);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
      b.cumulative_abs_error += std::abs(v - b.truth[t]);
    }
    b.min[t] = lo;
    b.max[t] = hi;
    b.mean[t] = sum / static_cast<double>(trajectories.size());
  }
  return b;
}

void write_band_csv(std::ostream& out, const ErrorBand& band) {
  out << "step,truth,min,mean,max\n";
  for (std::size_t t = 0; t < band.truth.size(); ++t) {
    out << t << ',' << preprocess::format_number(band.truth[t]) << ','
        << preprocess::format_number(band.min[t]) << ',' << preprocess::format_number(band.mean[t])
        << ',' << preprocess::format_number(band.max[t]) << '\n';
  }
}

void ReportBuilder::add(Contract contract, int horizon, const Score& s) {
  auto& a = acc_[{static_cast<int>(contract), horizon}];
  ++a.n;
  a.sum.mse += s.mse;
  a.sum.mae += s.mae;
  for (int c = 0; c < kNumChannels; ++c) {
    a.sum.channel_mse[c] += s.channel_mse[c];
    a.sum.channel_mae[c] += s.channel_mae[c];
  }
}

void ReportBuilder::add_band(const std::string& name, const ErrorBand& band) {
  BandSummary s;
  s.name = name;
  s.trajectories = band.trajectories;
  s.cumulative_abs_error = band.cumulative_abs_error;
  double width = 0;
  for (std::size_t t = 0; t < band.min.size(); ++t) width += band.max[t] - band.min[t];
  s.mean_width = band.min.empty() ? 0 : width / static_cast<double>(band.min.size());
  bands_.push_back(s);
}

EvalReport ReportBuilder::build() const {
  EvalReport r;
  for (const auto& [key, a] : acc_) {
    ReportRow row;
    row.contract = static_cast<Contract>(key.first);
    row.horizon = key.second;
    row.n_samples = a.n;
    const double n = a.n;
    row.mse = a.sum.mse / n;
    row.mae = a.sum.mae / n;
    for (int c = 0; c < kNumChannels; ++c) {
      row.channel_mse[c] = a.sum.channel_mse[c] / n;
      row.channel_mae[c] = a.sum.channel_mae[c] / n;
    }
    r.rows.push_back(row);
  }
  r.bands = bands_;
  std::sort(r.bands.begin(), r.bands.end(),
            [](const BandSummary& a, const BandSummary& b) { return a.name < b.name; });
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json channels = nlohmann::json::object();
    for (int c = 0; c < kNumChannels; ++c) {
      channels[std::string(kChannelNames[c])] = {{"mse", row.channel_mse[c]},
                                                 {"mae", row.channel_mae[c]}};
    }
    rows.push_back({{"contract", std::string(to_string(row.contract))},
                    {"horizon", row.horizon},
                    {"n_samples", row.n_samples},
                    {"mse", row.mse},
                    {"mae", row.mae},
                    {"channels", channels}});
  }
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : r.bands) {
    bands.push_back({{"name", b.name},
                     {"trajectories", b.trajectories},
                     {"cumulative_abs_error", b.cumulative_abs_error},
                     {"mean_width", b.mean_width}});
  }
  return {{"rows", rows}, {"bands", bands}};
}

std::string format_table(const EvalReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %7s %6s %12s %12s\n", "contract", "horizon", "n", "mse",
                "mae");
  out << line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-8s %7d %6d %12s %12s\n",
                  std::string(to_string(row.contract)).c_str(), row.horizon, row.n_samples,
                  fixed(row.mse).c_str(), fixed(row.mae).c_str());
    out << line;
  }
  if (!r.bands.empty()) {
    out << "\n";
    std::snprintf(line, sizeof line, "%-32s %4s %14s %12s\n", "band", "K", "cum_abs_err",
                  "mean_width");
    out << line;
    for (const auto& b : r.bands) {
      std::snprintf(line, sizeof line, "%-32s %4d %14s %12s\n", b.name.c_str(), b.trajectories,
                    fixed(b.cumulative_abs_error).c_str(), fixed(b.mean_width).c_str());
      out << line;
    }
  }
  return out.str();
}

EvalReport evaluate_directories(const fs::path& predictions, const fs::path& truth,
                                const fs::path& band_dir) {
  if (!fs::is_directory(predictions)) throw Error(ErrorCode::MissingData, predictions.string());
  if (!fs::is_directory(truth)) throw Error(ErrorCode::MissingData, truth.string());
  std::set<std::string> truth_stems;
  for (const auto& e : fs::directory_iterator(truth)) {
    if (e.path().extension() == ".csv") truth_stems.insert(e.path().stem().string());
  }
  std::map<std::string, std::vector<fs::path>> groups;
  for (const auto& e : fs::directory_iterator(predictions)) {
    if (e.path().extension() != ".csv") continue;
    std::string stem = e.path().stem().string();
    auto k = stem.rfind("__k");
    if (k != std::string::npos) stem = stem.substr(0, k);
    groups[stem].push_back(e.path());
  }
  std::vector<std::string> unmatched;
  for (const auto& [stem, files] : groups) {
    if (!truth_stems.count(stem)) unmatched.push_back("prediction " + stem);
  }
  for (const auto& stem : truth_stems) {
    if (!groups.count(stem)) unmatched.push_back("truth " + stem);
  }
  if (!unmatched.empty()) {
    std::string msg;
    for (const auto& u : unmatched) msg += (msg.empty() ? "" : ", ") + u;
    throw Error(ErrorCode::UnmatchedFiles, msg);
  }

  ReportBuilder builder;
  for (auto& [stem, files] : groups) {
    std::sort(files.begin(), files.end());
    const Contract contract = parse_contract(stem.substr(0, stem.find('_')));
    const TimeSeries t = preprocess::read_series_csv(truth / (stem + ".csv"), contract, true);
    std::vector<TimeSeries> preds;
    for (const auto& f : files) {
      preds.push_back(preprocess::read_series_csv(f, contract, true));
      builder.add(contract, t.steps(), score(preds.back(), t));
    }
    if (preds.size() >= 2) {
      const ErrorBand band = error_band(preds, t);
      builder.add_band(stem, band);
      if (!band_dir.empty()) {
        fs::create_directories(band_dir);
        std::ofstream out(band_dir / (stem + ".band.csv"));
        if (!out) throw Error(ErrorCode::Io, "cannot write band CSV for " + stem);
        write_band_csv(out, band);
      }
    }
  }
  return builder.build();
}

void write_report(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  std::ofstream js(dir / "report.json");
  std::ofstream txt(dir / "report.txt");
  if (!js || !txt) throw Error(ErrorCode::Io, "cannot write report in " + dir.string());
  js << to_json(r).dump(2) << "\n";
  txt << format_table(r);
}

}  // namespace tfcodit::evalharness
