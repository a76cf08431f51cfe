#include "tfcodit/conditioning.hpp"

#include "tfcodit/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace tfcodit::conditioning {

using nlohmann::json;

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return is_alpha(c) || is_digit(c); }

bool is_iso_date_at(const std::string& s, std::size_t i) {
  if (i + 10 > s.size()) return false;
  for (std::size_t k = 0; k < 10; ++k) {
    char c = s[i + k];
    if (k == 4 || k == 7) {
      if (c != '-') return false;
    } else if (!is_digit(c)) {
      return false;
    }
  }
  return i + 10 == s.size() || !is_digit(s[i + 10]);
}

// Number starting at i (optional sign when not glued to a word); returns the
// end offset or i when there is none.
std::size_t scan_number(const std::string& s, std::size_t i, double& out) {
  std::size_t j = i;
  if (j < s.size() && (s[j] == '-' || s[j] == '+')) {
    if (j > 0 && is_alnum(s[j - 1])) return i;
    ++j;
  }
  if (j >= s.size() || !is_digit(s[j])) return i;
  std::size_t k = j;
  while (k < s.size() && is_digit(s[k])) ++k;
  if (k + 1 < s.size() && s[k] == '.' && is_digit(s[k + 1])) {
    ++k;
    while (k < s.size() && is_digit(s[k])) ++k;
  }
  const char* first = s.data() + (s[i] == '+' ? i + 1 : i);
  auto [ptr, ec] = std::from_chars(first, s.data() + k, out);
  if (ec != std::errc()) return i;
  return k;
}

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string truncate_text(std::string s, std::size_t budget) {
  if (s.size() <= budget) return s;
  std::size_t cut = budget > 3 ? budget - 3 : 0;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
  return s + "...";
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string span_label(const Document& d) {
  if (d.level == Level::Daily) return format_date(d.span.start);
  return format_date(d.span.start) + "~" + format_date(d.span.end);
}

// text folded up from an earlier aggregation keeps its own labels
std::string labeled(const Document& d, const std::string& v) {
  if (!v.empty() && v.front() == '[') return v;
  return "[" + span_label(d) + "] " + v;
}

bool has_item(const std::vector<Category>& t, const std::string& cat, const std::string& item) {
  for (const auto& c : t) {
    if (c.name != cat) continue;
    return std::find(c.items.begin(), c.items.end(), item) != c.items.end();
  }
  return false;
}

bool has_category(const std::vector<Category>& t, const std::string& cat) {
  return std::any_of(t.begin(), t.end(), [&](const Category& c) { return c.name == cat; });
}

std::chrono::sys_days days_of(const Date& d) { return std::chrono::sys_days{d}; }

}  // namespace

std::string to_string(Level l) { return l == Level::Daily ? "daily" : "periodic"; }

const std::vector<Category>& daily_taxonomy() {
  static const std::vector<Category> t = {
      {"Liquidity", {"CBO", "FR", "NCD"}},
      {"Sentiment", {"MS", "EC"}},
      {"RatesBonds", {"CBT", "FP", "DF"}},
      {"CreditBonds", {"OP", "TC"}},
      {"Derivatives", {"IRS", "VOL"}},
      {"External", {"FX", "OR", "PM"}},
      {"Events", {"ME", "EM"}},
  };
  return t;
}

const std::vector<Category>& periodic_taxonomy() {
  static const std::vector<Category> t = {
      {"EconomicTheme", {"MET"}},
      {"EconomicEnvironment", {"EP", "MP", "IE", "ETP"}},
      {"KeyPrices", {"OCP", "SP", "RP"}},
      {"TechnicalTrends", {"MT", "PL"}},
      {"CyclicalFactors", {"HSP", "SE", "CE"}},
      {"EventsTimeline", {"EVT", "ED", "ET", "EI"}},
      {"MarketSentiment", {"IS", "MS", "ES"}},
      {"RiskAnalysis", {"UR", "DR", "OR"}},
  };
  return t;
}

const std::vector<Category>& taxonomy(Level l) {
  return l == Level::Daily ? daily_taxonomy() : periodic_taxonomy();
}

std::size_t item_count(const std::vector<Category>& t) {
  std::size_t n = 0;
  for (const auto& c : t) n += c.items.size();
  return n;
}

std::string canonical_category(const std::string& name) {
  std::string compact;
  for (char c : name) {
    if (c != ' ' && c != '&' && c != '_') compact += c;
  }
  for (Level l : {Level::Daily, Level::Periodic}) {
    for (const auto& c : taxonomy(l)) {
      if (c.name == compact) return compact;
    }
  }
  return name;
}

bool Document::empty() const {
  for (const auto& [cat, items] : attributes) {
    if (!items.empty()) return false;
  }
  return true;
}

const std::string* Document::get(const std::string& category, const std::string& item) const {
  auto c = attributes.find(category);
  if (c == attributes.end()) return nullptr;
  auto i = c->second.find(item);
  return i == c->second.end() ? nullptr : &i->second;
}

void Document::set(const std::string& category, const std::string& item, std::string value) {
  attributes[category][item] = std::move(value);
}

Document daily_document(Date date) {
  Document d;
  d.level = Level::Daily;
  d.span = {date, next_business_day(date)};
  d.days = 1;
  return d;
}

Document document_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "document must be an object");
  if (!j.contains("level") || !j["level"].is_string()) {
    throw Error(ErrorCode::Parse, "missing level");
  }
  Document d;
  const std::string level = j["level"].get<std::string>();
  if (level == "daily") {
    d.level = Level::Daily;
  } else if (level == "periodic") {
    d.level = Level::Periodic;
  } else {
    throw Error(ErrorCode::Parse, "unknown level '" + level + "'");
  }
  try {
    if (j.contains("span")) {
      const auto& s = j["span"];
      if (!s.is_object() || !s.contains("start") || !s.contains("end")) {
        throw Error(ErrorCode::Parse, "span needs start and end");
      }
      d.span = {parse_date(s["start"].get<std::string>()), parse_date(s["end"].get<std::string>())};
    } else if (j.contains("date") && d.level == Level::Daily) {
      Date date = parse_date(j["date"].get<std::string>());
      d.span = {date, next_business_day(date)};
    } else {
      throw Error(ErrorCode::Parse, "missing span");
    }
    if (j.contains("days")) {
      d.days = j["days"].get<int>();
    } else if (d.level == Level::Periodic) {
      // business days in the span
      int n = 0;
      for (auto day = days_of(d.span.start); day < days_of(d.span.end); day += std::chrono::days{1}) {
        auto wd = std::chrono::weekday{day};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) ++n;
      }
      d.days = n;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("bad span: ") + e.what());
  }
  if (j.contains("attributes")) {
    const auto& a = j["attributes"];
    if (!a.is_object()) throw Error(ErrorCode::Parse, "attributes must be an object");
    for (const auto& [cat, items] : a.items()) {
      if (!items.is_object()) throw Error(ErrorCode::Parse, "category '" + cat + "' must be an object");
      auto& dst = d.attributes[canonical_category(cat)];
      for (const auto& [item, value] : items.items()) {
        if (!value.is_string()) {
          throw Error(ErrorCode::Parse, "value of " + cat + "." + item + " must be a string");
        }
        dst[item] = value.get<std::string>();
      }
    }
  }
  return d;
}

json document_to_json(const Document& d) {
  json attrs = json::object();
  for (const auto& [cat, items] : d.attributes) {
    for (const auto& [item, value] : items) attrs[cat][item] = value;
  }
  return {{"level", to_string(d.level)},
          {"span", {{"start", format_date(d.span.start)}, {"end", format_date(d.span.end)}}},
          {"days", d.days},
          {"attributes", attrs}};
}

Document read_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return document_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
}

void write_document(const std::string& path, const Document& d) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << document_to_json(d).dump(2) << "\n";
}

ValidationReport validate(const Document& d) {
  ValidationReport r;
  const auto& t = taxonomy(d.level);
  if (days_of(d.span.end) <= days_of(d.span.start)) r.violations.push_back("span end is not after start");
  if (d.days < 1) r.violations.push_back("days must be positive");
  if (d.level == Level::Daily && d.days != 1) r.violations.push_back("daily document must cover one day");
  std::size_t present = 0;
  for (const auto& [cat, items] : d.attributes) {
    if (!has_category(t, cat)) {
      r.violations.push_back("unknown category " + cat);
      continue;
    }
    for (const auto& [item, value] : items) {
      if (!has_item(t, cat, item)) {
        r.violations.push_back("unknown item " + cat + "." + item);
      } else {
        ++present;
        if (value.empty()) r.warnings.push_back("empty value " + cat + "." + item);
      }
    }
  }
  std::size_t total = item_count(t);
  r.coverage = static_cast<double>(present) / static_cast<double>(total);
  if (present == 0) {
    r.warnings.push_back("empty document");
  } else if (present < total) {
    std::vector<std::string> missing;
    for (const auto& c : t) {
      for (const auto& item : c.items) {
        if (!d.get(c.name, item)) missing.push_back(c.name + "." + item);
      }
    }
    r.warnings.push_back("missing items: " + join(missing, ", "));
  }
  return r;
}

ValidationReport validate_json(const json& j) {
  try {
    return validate(document_from_json(j));
  } catch (const Error& e) {
    ValidationReport r;
    r.violations.push_back(e.what());
    return r;
  }
}

std::vector<double> price_numbers(const std::string& text) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_iso_date_at(text, i)) {
      i += 10;
      continue;
    }
    if (is_alpha(text[i]) || text[i] == '.') {
      while (i < text.size() && (is_alnum(text[i]) || text[i] == '.')) ++i;
      continue;
    }
    double v = 0;
    std::size_t end = scan_number(text, i, v);
    if (end == i) {
      ++i;
      continue;
    }
    std::size_t k = end;
    bool glued = k < text.size() && is_alpha(text[k]);
    while (k < text.size() && text[k] == ' ') ++k;
    bool unit = k < text.size() &&
                (text[k] == '%' || (text.compare(k, 2, "bp") == 0 &&
                                    (k + 2 == text.size() || !is_alpha(text[k + 2]) ||
                                     text.compare(k, 3, "bps") == 0)));
    if (!glued && !unit) out.push_back(v);
    i = end;
  }
  return out;
}

std::optional<double> keyed_number(const std::string& text, const std::string& key) {
  const std::string pat = key + "=";
  std::size_t pos = 0;
  while ((pos = text.find(pat, pos)) != std::string::npos) {
    if (pos == 0 || !is_alnum(text[pos - 1])) {
      double v = 0;
      std::size_t start = pos + pat.size();
      if (scan_number(text, start, v) != start) return v;
    }
    pos += pat.size();
  }
  return std::nullopt;
}

namespace {

// Daily attributes re-expressed in the periodic schema; numbers feeding
// KeyPrices come from the key=value pairs of the futures-performance item.
Document lift_daily(const Document& d, const AggregationOptions& opt) {
  Document p;
  p.level = Level::Periodic;
  p.span = d.span;
  p.days = 1;
  auto pick = [&](std::initializer_list<std::pair<const char*, const char*>> keys) {
    std::vector<std::string> parts;
    for (auto [c, i] : keys) {
      if (const auto* v = d.get(c, i); v && !v->empty()) parts.push_back(*v);
    }
    return join(parts, "; ");
  };
  auto put = [&](const char* cat, const char* item, const std::string& v) {
    if (!v.empty()) p.set(cat, item, truncate_text(v, opt.item_budget));
  };
  put("EconomicTheme", "MET", pick({{"RatesBonds", "DF"}}));
  put("EconomicEnvironment", "EP", pick({{"RatesBonds", "CBT"}}));
  put("EconomicEnvironment", "MP", pick({{"Liquidity", "CBO"}, {"Liquidity", "FR"}, {"Liquidity", "NCD"}}));
  put("EconomicEnvironment", "IE", pick({{"External", "OR"}, {"External", "PM"}}));
  put("EconomicEnvironment", "ETP", pick({{"External", "FX"}}));
  put("TechnicalTrends", "PL", pick({{"RatesBonds", "FP"}}));
  put("RiskAnalysis", "OR", pick({{"Derivatives", "VOL"}, {"CreditBonds", "OP"}, {"CreditBonds", "TC"}}));
  put("RiskAnalysis", "UR", pick({{"Sentiment", "EC"}}));
  put("EventsTimeline", "ET", pick({{"Events", "EM"}, {"Derivatives", "IRS"}}));
  if (const auto* me = d.get("Events", "ME"); me && !me->empty()) {
    put("EventsTimeline", "EVT", "[" + format_date(d.span.start) + "] " + *me);
  }
  if (const auto* fp = d.get("RatesBonds", "FP")) {
    auto open = keyed_number(*fp, "open");
    auto close = keyed_number(*fp, "close");
    auto low = keyed_number(*fp, "low");
    auto high = keyed_number(*fp, "high");
    if (open && close) p.set("KeyPrices", "OCP", "open=" + format_number(*open) + " close=" + format_number(*close));
    if (low) p.set("KeyPrices", "SP", format_number(*low));
    if (high) p.set("KeyPrices", "RP", format_number(*high));
  }
  if (const auto* ms = d.get("Sentiment", "MS"); ms && !ms->empty()) {
    std::string s = truncate_text(*ms, opt.item_budget);
    p.set("MarketSentiment", "IS", s);
    p.set("MarketSentiment", "MS", s);
    p.set("MarketSentiment", "ES", s);
  }
  return p;
}

std::string trend_word(double open, double close) {
  if (close > open) return "up";
  if (close < open) return "down";
  return "flat";
}

Document merge(const std::vector<Document>& kids, const Span& target, const AggregationOptions& opt) {
  Document out;
  out.level = Level::Periodic;
  out.span = target;
  out.days = 0;
  for (const auto& k : kids) out.days += k.days;

  const std::set<std::string> events = {"EVT", "ED", "ET", "EI"};
  for (const auto& cat : periodic_taxonomy()) {
    for (const auto& item : cat.items) {
      if (cat.name == "KeyPrices" || cat.name == "MarketSentiment") continue;
      if (cat.name == "TechnicalTrends" && item == "MT") continue;
      std::vector<std::string> parts;
      bool chrono = cat.name == "EventsTimeline" && events.count(item);
      for (const auto& k : kids) {
        const auto* v = k.get(cat.name, item);
        if (!v || v->empty()) continue;
        parts.push_back(chrono ? *v : labeled(k, *v));
      }
      if (!parts.empty()) out.set(cat.name, item, truncate_text(join(parts, "; "), opt.item_budget));
    }
  }

  std::optional<double> open, close;
  for (const auto& k : kids) {
    if (const auto* v = k.get("KeyPrices", "OCP")) {
      if (!open) open = keyed_number(*v, "open");
      if (auto c = keyed_number(*v, "close")) close = c;
    }
  }
  if (open || close) {
    std::string ocp;
    if (open) ocp = "open=" + format_number(*open);
    if (close) ocp += std::string(ocp.empty() ? "" : " ") + "close=" + format_number(*close);
    out.set("KeyPrices", "OCP", ocp);
  }
  std::optional<double> support, resistance;
  for (const auto& k : kids) {
    if (const auto* v = k.get("KeyPrices", "SP")) {
      for (double x : price_numbers(*v)) support = support ? std::min(*support, x) : x;
    }
    if (const auto* v = k.get("KeyPrices", "RP")) {
      for (double x : price_numbers(*v)) resistance = resistance ? std::max(*resistance, x) : x;
    }
  }
  if (support) out.set("KeyPrices", "SP", format_number(*support));
  if (resistance) out.set("KeyPrices", "RP", format_number(*resistance));

  if (open && close) {
    out.set("TechnicalTrends", "MT", trend_word(*open, *close));
  } else {
    std::vector<std::string> parts;
    for (const auto& k : kids) {
      if (const auto* v = k.get("TechnicalTrends", "MT"); v && !v->empty()) {
        parts.push_back(labeled(k, *v));
      }
    }
    if (!parts.empty()) out.set("TechnicalTrends", "MT", truncate_text(join(parts, "; "), opt.item_budget));
  }

  if (const auto* v = kids.front().get("MarketSentiment", "IS")) out.set("MarketSentiment", "IS", *v);
  if (const auto* v = kids[kids.size() / 2].get("MarketSentiment", "IS")) out.set("MarketSentiment", "MS", *v);
  if (const auto* v = kids.back().get("MarketSentiment", "ES")) out.set("MarketSentiment", "ES", *v);
  return out;
}

}  // namespace

Document aggregate(const std::vector<Document>& children, const Span& target,
                   const AggregationOptions& opt) {
  if (children.empty()) throw Error(ErrorCode::SpanGap, "no children to aggregate");
  const Level level = children.front().level;
  for (const auto& c : children) {
    if (c.level != level) throw Error(ErrorCode::MixedLevels, "daily and periodic children mixed");
    if (level == Level::Periodic && c.days != children.front().days) {
      throw Error(ErrorCode::MixedLevels, "periodic children of different lengths");
    }
  }
  auto check_edge = [](const Date& expected, const Date& actual) {
    if (days_of(actual) > days_of(expected)) {
      throw Error(ErrorCode::SpanGap, "gap between " + format_date(expected) + " and " + format_date(actual));
    }
    if (days_of(actual) < days_of(expected)) {
      throw Error(ErrorCode::SpanOverlap, "overlap at " + format_date(actual));
    }
  };
  check_edge(target.start, children.front().span.start);
  for (std::size_t i = 1; i < children.size(); ++i) {
    check_edge(children[i - 1].span.end, children[i].span.start);
  }
  if (days_of(children.back().span.end) < days_of(target.end)) {
    throw Error(ErrorCode::SpanGap, "children end before " + format_date(target.end));
  }
  if (days_of(children.back().span.end) > days_of(target.end)) {
    throw Error(ErrorCode::SpanOverlap, "children extend past " + format_date(target.end));
  }

  Document out;
  if (children.size() == 1 && level == Level::Periodic) {
    out = children.front();
    out.span = target;
  } else if (level == Level::Daily) {
    std::vector<Document> lifted;
    lifted.reserve(children.size());
    for (const auto& c : children) lifted.push_back(lift_daily(c, opt));
    if (lifted.size() == 1) {
      out = lifted.front();
      out.span = target;
    } else {
      out = merge(lifted, target, opt);
    }
  } else {
    out = merge(children, target, opt);
  }
  if (opt.rewriter) out = opt.rewriter(out);
  return out;
}

Document aggregate(const std::vector<Document>& children, const AggregationOptions& opt) {
  if (children.empty()) throw Error(ErrorCode::SpanGap, "no children to aggregate");
  return aggregate(children, {children.front().span.start, children.back().span.end}, opt);
}

Document window_prompt(const std::vector<Document>& dailies, int block, const AggregationOptions& opt) {
  if (dailies.empty()) throw Error(ErrorCode::SpanGap, "no daily documents");
  if (block < 1) throw Error(ErrorCode::InvalidConfig, "block must be positive");
  const auto n = dailies.size();
  const auto b = static_cast<std::size_t>(block);
  if (n <= b) return aggregate(dailies, opt);
  std::vector<Document> level;
  for (std::size_t i = 0; i < n; i += b) {
    std::vector<Document> chunk(dailies.begin() + static_cast<std::ptrdiff_t>(i),
                                dailies.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + b)));
    level.push_back(aggregate(chunk, opt));
  }
  // a short tail block breaks the equal-length rule; fold it in one pass
  if (n % b != 0) {
    std::vector<Document> all(dailies.begin(), dailies.end());
    return aggregate(all, opt);
  }
  while (level.size() > 1 && level.size() % 2 == 0) {
    std::vector<Document> next;
    for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(aggregate({level[i], level[i + 1]}, opt));
    level = std::move(next);
  }
  return level.size() == 1 ? level.front() : aggregate(level, opt);
}

Rewriter external_rewriter(const std::string& command) {
  return [command](const Document& d) {
    auto path = std::filesystem::temp_directory_path() /
                ("tfcodit-rewrite-" + std::to_string(std::hash<std::string>{}(document_to_json(d).dump())) + ".json");
    write_document(path.string(), d);
    std::string cmd = command + " < '" + path.string() + "'";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw Error(ErrorCode::Io, "cannot run rewriter: " + command);
    std::string output;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
    int status = pclose(pipe);
    std::filesystem::remove(path);
    if (status != 0) throw Error(ErrorCode::Io, "rewriter failed: " + command);
    try {
      return document_from_json(json::parse(output));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::Parse, std::string("rewriter output: ") + e.what());
    }
  };
}

// Tokenization.

std::string number_token(double x) {
  int e = static_cast<int>(std::floor(std::log10(std::abs(x))));
  e = std::clamp(e, -4, 5);
  return std::string("<num") + (x < 0 ? "-" : "+") + std::to_string(e + 4) + ">";
}

std::vector<std::string> value_pieces(const std::string& value) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < value.size()) {
    char c = value[i];
    if (is_iso_date_at(value, i)) {
      // "a~b" spans read as one date token
      if (out.empty() || out.back() != "<date>" || value[i - 1] != '~')
        out.emplace_back("<date>");
      i += 10;
      continue;
    }
    if (is_alpha(c)) {
      std::string w;
      while (i < value.size() && is_alpha(value[i])) {
        w += static_cast<char>(std::tolower(static_cast<unsigned char>(value[i])));
        ++i;
      }
      out.push_back(std::move(w));
      continue;
    }
    double v = 0;
    std::size_t end = scan_number(value, i, v);
    if (end != i) {
      out.push_back(v == 0.0 ? "<zero>" : number_token(v));
      i = end;
      continue;
    }
    if (c == '%') out.emplace_back("%");
    ++i;
  }
  return out;
}

std::string category_tag(const std::string& category) { return "<cat:" + category + ">"; }
std::string item_tag(const std::string& category, const std::string& item) {
  return "<item:" + category + "." + item + ">";
}
std::string level_tag(Level l) { return "<" + to_string(l) + ">"; }

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<null>", "<unk>", "<trunc>", "<date>", "<zero>", "%"}) add(s);
  for (const char* sign : {"+", "-"}) {
    for (int k = 0; k < 10; ++k) add(std::string("<num") + sign + std::to_string(k) + ">");
  }
  add(level_tag(Level::Daily));
  add(level_tag(Level::Periodic));
  for (Level l : {Level::Daily, Level::Periodic}) {
    for (const auto& c : taxonomy(l)) {
      add(category_tag(c.name));
      for (const auto& item : c.items) add(item_tag(c.name, item));
    }
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::build(const std::vector<Document>& docs, std::size_t max_words) {
  Vocabulary v;
  std::size_t words = 0;
  for (const auto& d : docs) {
    for (const auto& [cat, items] : d.attributes) {
      for (const auto& [item, value] : items) {
        for (const auto& p : value_pieces(value)) {
          if (words >= max_words) return v;
          if (v.contains(p)) continue;
          v.add(p);
          ++words;
        }
      }
    }
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  Vocabulary base;
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (v.index_.count(line)) throw Error(ErrorCode::Parse, "duplicate token '" + line + "' in " + path);
    v.add(line);
  }
  for (int i = 0; i < base.size(); ++i) {
    if (i >= v.size() || v.tokens_[static_cast<std::size_t>(i)] != base.tokens_[static_cast<std::size_t>(i)]) {
      throw Error(ErrorCode::Parse, path + ": reserved token block does not match");
    }
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

std::vector<int> tokenize(const Document& d, const Vocabulary& vocab, int max_len) {
  if (max_len < 2) throw Error(ErrorCode::InvalidConfig, "max_len must be at least 2");
  if (d.empty()) return {kNull};
  std::vector<int> ids{vocab.id(level_tag(d.level))};
  for (const auto& cat : taxonomy(d.level)) {
    auto c = d.attributes.find(cat.name);
    if (c == d.attributes.end()) continue;
    bool opened = false;
    for (const auto& item : cat.items) {
      auto it = c->second.find(item);
      if (it == c->second.end()) continue;
      if (!opened) {
        ids.push_back(vocab.id(category_tag(cat.name)));
        opened = true;
      }
      ids.push_back(vocab.id(item_tag(cat.name, item)));
      for (const auto& p : value_pieces(it->second)) ids.push_back(vocab.id(p));
    }
  }
  if (static_cast<int>(ids.size()) > max_len) {
    ids.resize(static_cast<std::size_t>(max_len - 1));
    ids.push_back(kTrunc);
  }
  return ids;
}

Detokenized detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  Detokenized out;
  std::string* current = nullptr;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == kPad) continue;
    if (id == kNull) {
      out.null = true;
      continue;
    }
    if (id == kTrunc) {
      out.truncated = true;
      break;
    }
    if (tok == level_tag(Level::Daily)) {
      out.level = Level::Daily;
    } else if (tok == level_tag(Level::Periodic)) {
      out.level = Level::Periodic;
    } else if (tok.rfind("<cat:", 0) == 0) {
      current = nullptr;
    } else if (tok.rfind("<item:", 0) == 0) {
      std::string key = tok.substr(6, tok.size() - 7);
      auto dot = key.find('.');
      current = &out.attributes[key.substr(0, dot)][key.substr(dot + 1)];
    } else if (current) {
      if (!current->empty()) *current += ' ';
      *current += tok;
    }
  }
  return out;
}

std::string canonical_value(const std::string& value, const Vocabulary& vocab) {
  std::vector<std::string> parts;
  for (const auto& p : value_pieces(value)) parts.push_back(vocab.token(vocab.id(p)));
  return join(parts, " ");
}

}  // namespace tfcodit::conditioning
