#include "tfcodit/synthetic.hpp"

#include "tfcodit/errors.hpp"
#include "tfcodit/nn.hpp"

#include <algorithm>
#include <cmath>

namespace tfcodit::synthetic {

using nlohmann::json;

void CorpusSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (n_days < 2) bad("n_days must be at least 2");
  if (regimes.empty()) bad("at least one regime is required");
  if (block_days < 1) bad("block_days must be positive");
  if (!(lower < center && center < upper) || !(lower > 0)) bad("need 0 < lower < center < upper");
  if (!(mean_reversion >= 0 && mean_reversion < 1)) bad("mean_reversion must be in [0, 1)");
  if (!(open_interest > 0)) bad("open_interest must be positive");
  for (const auto& r : regimes) {
    if (r.label.empty()) bad("regime label is empty");
    if (!(r.volatility >= 0) || !(r.volume_level > 0)) bad("regime '" + r.label + "' scales");
    if (!std::isfinite(r.drift)) bad("regime '" + r.label + "' drift");
    if (4 * (std::abs(r.drift) + r.volatility) >= upper - lower) {
      bad("regime '" + r.label + "' moves exceed the price band");
    }
  }
  parse_date(start_date);
}

void to_json(json& j, const CorpusSpec& s) {
  json regimes = json::array();
  for (const auto& r : s.regimes) {
    regimes.push_back({{"label", r.label},
                       {"drift", r.drift},
                       {"volatility", r.volatility},
                       {"volume_level", r.volume_level}});
  }
  j = json{{"n_days", s.n_days},         {"regimes", regimes},
           {"block_days", s.block_days}, {"center", s.center},
           {"lower", s.lower},           {"upper", s.upper},
           {"mean_reversion", s.mean_reversion},
           {"open_interest", s.open_interest},
           {"start_date", s.start_date}, {"contract", to_string(s.contract)},
           {"seed", s.seed}};
}

void from_json(const json& j, CorpusSpec& s) {
  CorpusSpec d;
  s.n_days = j.value("n_days", d.n_days);
  if (j.contains("regimes")) {
    s.regimes.clear();
    for (const auto& r : j.at("regimes")) {
      s.regimes.push_back(Regime{r.at("label").get<std::string>(), r.value("drift", 0.0),
                                 r.value("volatility", 0.15), r.value("volume_level", 50000.0)});
    }
  }
  s.block_days = j.value("block_days", d.block_days);
  s.center = j.value("center", d.center);
  s.lower = j.value("lower", d.lower);
  s.upper = j.value("upper", d.upper);
  s.mean_reversion = j.value("mean_reversion", d.mean_reversion);
  s.open_interest = j.value("open_interest", d.open_interest);
  s.start_date = j.value("start_date", d.start_date);
  s.contract = parse_contract(j.value("contract", std::string("T")));
  s.seed = j.value("seed", d.seed);
}

namespace {

double reflect(double x, double lo, double hi) {
  for (int i = 0; i < 8 && (x < lo || x > hi); ++i) {
    if (x > hi) x = 2 * hi - x;
    if (x < lo) x = 2 * lo - x;
  }
  return std::clamp(x, lo, hi);
}

double round_to(double x, double tick) { return std::round(x / tick) * tick; }

}  // namespace

Corpus generate(const CorpusSpec& spec) {
  spec.validate();
  nn::Rng rng = nn::make_rng(spec.seed, 0x5359);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  Corpus c;
  c.records.reserve(spec.n_days);
  Date date = parse_date(spec.start_date);
  double close = spec.center;
  double oi = spec.open_interest;
  const double tick = 0.005;
  for (int t = 0; t < spec.n_days; ++t) {
    const int ri = (t / spec.block_days) % static_cast<int>(spec.regimes.size());
    const Regime& r = spec.regimes[ri];
    preprocess::RawDailyRecord rec;
    rec.date = date;
    const double open = reflect(close + 0.2 * r.volatility * n01(rng), spec.lower, spec.upper);
    const double target =
        open + r.drift + spec.mean_reversion * (spec.center - open) + r.volatility * n01(rng);
    const double next_close = reflect(target, spec.lower, spec.upper);
    rec.open = round_to(open, tick);
    rec.close = round_to(next_close, tick);
    const double hi = std::max(rec.open, rec.close), lo = std::min(rec.open, rec.close);
    rec.high = round_to(std::min(spec.upper, hi + 0.5 * r.volatility * std::abs(n01(rng))), tick);
    rec.low = round_to(std::max(spec.lower, lo - 0.5 * r.volatility * std::abs(n01(rng))), tick);
    rec.high = std::max(rec.high, hi);
    rec.low = std::min(rec.low, lo);
    rec.settle = round_to(rec.low + (rec.high - rec.low) * u01(rng), tick);
    rec.volume = std::round(r.volume_level * std::exp(0.2 * n01(rng)));
    rec.value = std::round(rec.volume * rec.settle * 100.0) / 10000.0;  // millions, 10k face
    oi = std::max(1000.0, oi * (1.0 + 0.01 * n01(rng) + (r.drift > 0 ? 0.001 : -0.001)));
    rec.open_interest = std::round(oi);
    c.records.push_back(rec);
    c.regime.push_back(ri);
    close = next_close;
    date = next_business_day(date);
  }
  return c;
}

double trend_slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) return 0.0;
  const double xm = (n - 1) / 2.0;
  double ym = 0;
  for (double v : y) ym += v;
  ym /= n;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (i - xm) * (y[i] - ym);
    den += (i - xm) * (i - xm);
  }
  return num / den;
}

}  // namespace tfcodit::synthetic
