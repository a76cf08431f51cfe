#include "doctest.h"

#include "tfcodit/conditioning.hpp"
#include "tfcodit/errors.hpp"

#include <filesystem>
#include <random>
#include <set>

using namespace tfcodit;
using namespace tfcodit::conditioning;

namespace {

const std::string kData = TFCODIT_TEST_DATA;

Document periodic(const std::string& start, const std::string& end, int days) {
  Document d;
  d.level = Level::Periodic;
  d.span = {parse_date(start), parse_date(end)};
  d.days = days;
  return d;
}

// Four consecutive dailies Mon..Thu with prices, sentiment and events.
std::vector<Document> four_dailies() {
  const char* dates[] = {"2024-12-02", "2024-12-03", "2024-12-04", "2024-12-05"};
  const char* tone[] = {"cautious", "optimistic", "wait and see", "improved"};
  const double open[] = {102.85, 102.80, 102.95, 102.70};
  const double close[] = {102.80, 102.95, 102.70, 102.92};
  std::vector<Document> out;
  for (int i = 0; i < 4; ++i) {
    Document d = daily_document(parse_date(dates[i]));
    d.set("Sentiment", "MS", tone[i]);
    d.set("RatesBonds", "FP",
          "open=" + std::to_string(open[i]) + " close=" + std::to_string(close[i]) +
              " low=" + std::to_string(std::min(open[i], close[i]) - 0.05 * (i + 1)) +
              " high=" + std::to_string(std::max(open[i], close[i]) + 0.04 * (i + 1)));
    if (i % 2 == 0) d.set("Events", "ME", "event " + std::to_string(i));
    out.push_back(d);
  }
  return out;
}

}  // namespace

TEST_SUITE("conditioning") {

TEST_CASE("taxonomy cardinalities") {
  CHECK(daily_taxonomy().size() == 7);
  CHECK(item_count(daily_taxonomy()) == 17);
  CHECK(periodic_taxonomy().size() == 8);
  CHECK(item_count(periodic_taxonomy()) == 23);
  CHECK(canonical_category("Events&Timeline") == "EventsTimeline");
  CHECK(canonical_category("Events & Timeline") == "EventsTimeline");
  CHECK(canonical_category("Nope") == "Nope");
}

TEST_CASE("validate known, unknown and empty documents") {
  Document d = daily_document(parse_date("2025-12-26"));
  d.set("Liquidity", "CBO", "net injection 100 billion");
  auto r = validate(d);
  CHECK(r.ok());
  CHECK(r.coverage == doctest::Approx(1.0 / 17));
  CHECK_FALSE(r.warnings.empty());  // missing items flagged

  d.set("Liquidity", "XYZ", "x");
  r = validate(d);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].find("unknown item") != std::string::npos);

  Document e = daily_document(parse_date("2025-12-26"));
  r = validate(e);
  CHECK(r.ok());
  CHECK(r.coverage == 0.0);
  CHECK(r.warnings.front() == "empty document");
}

TEST_CASE("periodic items are not valid in a daily document") {
  Document d = daily_document(parse_date("2025-12-26"));
  d.set("KeyPrices", "OCP", "open=1 close=2");
  CHECK_FALSE(validate(d).ok());
}

TEST_CASE("sample documents validate") {
  for (const char* f : {"daily_2025-12-26.json", "weekly_2024-12-02.json", "monthly_2024-12.json"}) {
    CAPTURE(f);
    const auto d = read_document(kData + "/finmap/" + f);
    const auto r = validate(d);
    CHECK(r.ok());
    CHECK(r.coverage > 0.8);
  }
  const auto w = read_document(kData + "/finmap/weekly_2024-12-02.json");
  CHECK(w.get("EventsTimeline", "EVT") != nullptr);
  CHECK(validate(w).coverage == 1.0);
}

TEST_CASE("json structure errors become violations") {
  CHECK_FALSE(validate_json(nlohmann::json::array()).ok());
  CHECK_FALSE(validate_json({{"level", "weekly"}, {"date", "2024-01-02"}}).ok());
  CHECK_FALSE(validate_json({{"level", "daily"}}).ok());
  nlohmann::json bad = {{"level", "daily"}, {"date", "2024-01-02"},
                        {"attributes", {{"Liquidity", {{"CBO", 3}}}}}};
  CHECK_FALSE(validate_json(bad).ok());
}

TEST_CASE("json round trip") {
  const auto d = read_document(kData + "/finmap/weekly_2024-12-02.json");
  const auto back = document_from_json(document_to_json(d));
  CHECK(back.attributes == d.attributes);
  CHECK(back.days == d.days);
  CHECK(format_date(back.span.start) == "2024-12-02");
}

TEST_CASE("price numbers skip percentages, basis points and labels") {
  auto v = price_numbers("102.70 (20DMA), 102.55 (Nov low); cash 2.65% and 5bp, 3 bps");
  REQUIRE(v.size() == 2);
  CHECK(v[0] == 102.70);
  CHECK(v[1] == 102.55);
  CHECK(price_numbers("[2024-12-04] at -1.5").front() == -1.5);
  CHECK(keyed_number("T2503 open=102.85 close=102.92", "close").value() == 102.92);
  CHECK_FALSE(keyed_number("reopen=3", "open").has_value());
}

TEST_CASE("two 8-day periodics aggregate into one 16-day periodic") {
  Document a = periodic("2024-12-02", "2024-12-12", 8);
  Document b = periodic("2024-12-12", "2024-12-24", 8);
  a.set("KeyPrices", "OCP", "open=102.85 close=102.90");
  b.set("KeyPrices", "OCP", "open=102.90 close=102.60");
  a.set("KeyPrices", "SP", "102.70 (20DMA)");
  b.set("KeyPrices", "SP", "102.55 (Nov low)");
  a.set("KeyPrices", "RP", "103.00");
  b.set("KeyPrices", "RP", "103.15");
  a.set("MarketSentiment", "IS", "optimistic");
  a.set("MarketSentiment", "ES", "cautious");
  b.set("MarketSentiment", "IS", "wait and see");
  b.set("MarketSentiment", "ES", "bearish");
  a.set("EconomicTheme", "MET", "liquidity");
  b.set("EconomicTheme", "MET", "supply");
  const auto out = aggregate({a, b}, {a.span.start, b.span.end});
  CHECK(out.level == Level::Periodic);
  CHECK(out.days == 16);
  CHECK(*out.get("KeyPrices", "SP") == "102.55");
  CHECK(*out.get("KeyPrices", "RP") == "103.15");
  CHECK(*out.get("KeyPrices", "OCP") == "open=102.85 close=102.6");
  CHECK(*out.get("TechnicalTrends", "MT") == "down");
  CHECK(*out.get("MarketSentiment", "IS") == "optimistic");
  CHECK(*out.get("MarketSentiment", "MS") == "wait and see");
  CHECK(*out.get("MarketSentiment", "ES") == "bearish");
  CHECK(*out.get("EconomicTheme", "MET") ==
        "[2024-12-02~2024-12-12] liquidity; [2024-12-12~2024-12-24] supply");
  CHECK(validate(out).ok());
}

TEST_CASE("singleton aggregation relabels the span") {
  Document a = periodic("2024-12-02", "2024-12-09", 5);
  a.set("RiskAnalysis", "UR", "rate cut");
  const Span target{parse_date("2024-12-02"), parse_date("2024-12-09")};
  const auto out = aggregate({a}, target);
  CHECK(out.attributes == a.attributes);
  CHECK(format_date(out.span.end) == "2024-12-09");
}

TEST_CASE("tiling errors") {
  Document a = periodic("2024-12-02", "2024-12-09", 5);
  Document b = periodic("2024-12-10", "2024-12-16", 5);
  CHECK_THROWS_AS_MESSAGE(aggregate({a, b}, {a.span.start, b.span.end}), Error, "gap");
  try {
    aggregate({a, b}, {a.span.start, b.span.end});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpanGap);
  }
  Document c = periodic("2024-12-06", "2024-12-13", 5);
  try {
    aggregate({a, c}, {a.span.start, c.span.end});
    FAIL("expected overlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpanOverlap);
  }
  Document d = daily_document(parse_date("2024-12-09"));
  try {
    aggregate({a, d}, {a.span.start, d.span.end});
    FAIL("expected mixed levels");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MixedLevels);
  }
  try {
    aggregate({a}, {a.span.start, parse_date("2024-12-20")});
    FAIL("expected gap at the end");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpanGap);
  }
}

TEST_CASE("aggregation is associative for the deterministic rules") {
  const auto days = four_dailies();
  const auto direct = aggregate(days);
  const auto left = aggregate({days[0], days[1]});
  const auto right = aggregate({days[2], days[3]});
  const auto nested = aggregate({left, right});
  for (const char* item : {"OCP", "SP", "RP"}) {
    CAPTURE(item);
    REQUIRE(direct.get("KeyPrices", item));
    CHECK(*direct.get("KeyPrices", item) == *nested.get("KeyPrices", item));
  }
  for (const char* item : {"IS", "MS", "ES"}) {
    CAPTURE(item);
    CHECK(*direct.get("MarketSentiment", item) == *nested.get("MarketSentiment", item));
  }
  CHECK(*direct.get("EventsTimeline", "EVT") == *nested.get("EventsTimeline", "EVT"));
  CHECK(*direct.get("EventsTimeline", "EVT") == "[2024-12-02] event 0; [2024-12-04] event 2");
  CHECK(*direct.get("TechnicalTrends", "MT") == *nested.get("TechnicalTrends", "MT"));
  CHECK(direct.days == 4);
  CHECK(nested.days == 4);
}

TEST_CASE("window prompt folds blocks pairwise") {
  std::vector<Document> days;
  Date d = parse_date("2024-01-01");
  for (int i = 0; i < 32; ++i) {
    Document x = daily_document(d);
    x.set("Sentiment", "MS", i < 16 ? "bullish" : "bearish");
    days.push_back(x);
    d = next_business_day(d);
  }
  const auto p = window_prompt(days, 8);
  CHECK(p.days == 32);
  CHECK(*p.get("MarketSentiment", "IS") == "bullish");
  CHECK(*p.get("MarketSentiment", "ES") == "bearish");
  CHECK(format_date(p.span.start) == "2024-01-01");
  CHECK(p.span.end == days.back().span.end);
}

TEST_CASE("free text is truncated to the item budget") {
  std::vector<Document> days;
  Date d = parse_date("2024-01-01");
  for (int i = 0; i < 8; ++i) {
    Document x = daily_document(d);
    x.set("RatesBonds", "DF", std::string(50, 'a'));
    days.push_back(x);
    d = next_business_day(d);
  }
  AggregationOptions opt;
  opt.item_budget = 60;
  const auto p = aggregate(days, opt);
  CHECK(p.get("EconomicTheme", "MET")->size() == 60);
  CHECK(p.get("EconomicTheme", "MET")->ends_with("..."));
}

TEST_CASE("rewriter hook sees every aggregate") {
  AggregationOptions opt;
  int calls = 0;
  opt.rewriter = [&](const Document& doc) {
    ++calls;
    Document out = doc;
    out.set("RiskAnalysis", "DR", "rewritten");
    return out;
  };
  const auto out = aggregate(four_dailies(), opt);
  CHECK(calls == 1);
  CHECK(*out.get("RiskAnalysis", "DR") == "rewritten");
}

TEST_CASE("external rewriter passes documents through a command") {
  AggregationOptions opt;
  opt.rewriter = external_rewriter("cat");
  const auto plain = aggregate(four_dailies());
  const auto piped = aggregate(four_dailies(), opt);
  CHECK(piped.attributes == plain.attributes);
}

TEST_CASE("number tokens bucket by sign and decimal magnitude") {
  CHECK(number_token(102.85) == "<num+6>");
  CHECK(number_token(5.0) == "<num+4>");
  CHECK(number_token(-0.5) == "<num-3>");
  CHECK(number_token(1e9) == "<num+9>");
  CHECK(number_token(1e-9) == "<num+0>");
  auto p = value_pieces("Open=102.85, 2024-12-02: yields -3bp, 0 change 2.5%");
  std::vector<std::string> want = {"open", "<num+6>", "<date>", "yields", "<num-4>",
                                   "bp",   "<zero>",  "change", "<num+4>", "%"};
  CHECK(p == want);
}

TEST_CASE("empty document tokenizes to the null token") {
  Vocabulary v;
  CHECK(tokenize(daily_document(parse_date("2024-01-02")), v, 16) == std::vector<int>{kNull});
  auto back = detokenize({kNull}, v);
  CHECK(back.null);
  CHECK(back.attributes.empty());
}

TEST_CASE("tokenize round trip and determinism") {
  std::vector<Document> docs;
  for (const char* f : {"daily_2025-12-26.json", "weekly_2024-12-02.json", "monthly_2024-12.json"}) {
    docs.push_back(read_document(kData + "/finmap/" + f));
  }
  const auto vocab = Vocabulary::build(docs);
  for (const auto& d : docs) {
    const auto ids = tokenize(d, vocab, 100000);
    CHECK(ids == tokenize(d, vocab, 100000));
    const auto back = detokenize(ids, vocab);
    CHECK_FALSE(back.truncated);
    REQUIRE(back.level.has_value());
    CHECK(*back.level == d.level);
    std::set<std::pair<std::string, std::string>> want, got;
    for (const auto& [c, items] : d.attributes) {
      for (const auto& [i, v] : items) want.insert({c, i});
    }
    for (const auto& [c, items] : back.attributes) {
      for (const auto& [i, v] : items) {
        got.insert({c, i});
        CHECK(v == canonical_value(*d.get(c, i), vocab));
      }
    }
    CHECK(got == want);
  }
}

TEST_CASE("truncation marker at the budget") {
  const auto d = read_document(kData + "/finmap/monthly_2024-12.json");
  const auto vocab = Vocabulary::build({d});
  const auto ids = tokenize(d, vocab, 24);
  CHECK(ids.size() == 24);
  CHECK(ids.back() == kTrunc);
  CHECK(detokenize(ids, vocab).truncated);
  CHECK_THROWS_AS(tokenize(d, vocab, 1), Error);
}

TEST_CASE("distinct canonical documents give distinct sequences") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words = {"bullish", "bearish", "yields", "rise", "fall", "1.5", "-2", "100.25"};
  Vocabulary vocab;
  for (const auto& w : words) {
    for (const auto& p : value_pieces(w)) vocab.add(p);
  }
  std::set<std::string> canon;
  std::set<std::vector<int>> seqs;
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_int_distribution<int> coin(0, 2);
  for (int n = 0; n < 300; ++n) {
    Document d = daily_document(parse_date("2024-01-02"));
    for (const auto& cat : daily_taxonomy()) {
      for (const auto& item : cat.items) {
        if (coin(rng) != 0) continue;
        std::string v = words[pick(rng)];
        if (coin(rng) == 0) v += " " + words[pick(rng)];
        d.set(cat.name, item, v);
      }
    }
    std::string key;
    for (const auto& [c, items] : d.attributes) {
      for (const auto& [i, v] : items) key += c + "." + i + "=" + canonical_value(v, vocab) + "|";
    }
    canon.insert(key);
    seqs.insert(tokenize(d, vocab, 100000));
  }
  CHECK(seqs.size() == canon.size());
}

TEST_CASE("vocabulary file round trip") {
  const auto d = read_document(kData + "/finmap/weekly_2024-12-02.json");
  const auto vocab = Vocabulary::build({d});
  const auto path = std::filesystem::temp_directory_path() / "tfcodit_vocab_test.txt";
  vocab.save(path.string());
  const auto back = Vocabulary::load(path.string());
  CHECK(back.size() == vocab.size());
  for (int i = 0; i < vocab.size(); ++i) CHECK(back.token(i) == vocab.token(i));
  CHECK(back.id("<pad>") == kPad);
  CHECK(back.id("never-seen") == kUnk);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
