#pragma once

// FinMAP documents: the two-level market-attribute taxonomy, schema
// validation, rule-based temporal aggregation and tokenization into
// condition sequences.

#include "tfcodit/series.hpp"

#include "json.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tfcodit::conditioning {

enum class Level { Daily, Periodic };

std::string to_string(Level l);

struct Category {
  std::string name;
  std::vector<std::string> items;
};

/// 7 categories / 17 items.
const std::vector<Category>& daily_taxonomy();
/// 8 categories / 23 items.
const std::vector<Category>& periodic_taxonomy();
const std::vector<Category>& taxonomy(Level l);
std::size_t item_count(const std::vector<Category>& t);

/// Accepts spelling variants ("Events&Timeline", "Events & Timeline") and
/// returns the canonical category name, or the input unchanged.
std::string canonical_category(const std::string& name);

/// Half-open calendar span [start, end).
struct Span {
  Date start{};
  Date end{};
};

using Attributes = std::map<std::string, std::map<std::string, std::string>>;

struct Document {
  Level level = Level::Daily;
  Span span;
  int days = 1;  // trading days covered
  Attributes attributes;

  bool empty() const;
  const std::string* get(const std::string& category, const std::string& item) const;
  void set(const std::string& category, const std::string& item, std::string value);
};

/// Daily document covering `date` (span ends on the next business day).
Document daily_document(Date date);

Document document_from_json(const nlohmann::json& j);
nlohmann::json document_to_json(const Document& d);
Document read_document(const std::string& path);
void write_document(const std::string& path, const Document& d);

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  double coverage = 0.0;  // known items present / items in the schema

  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const Document& d);
ValidationReport validate_json(const nlohmann::json& j);

using Rewriter = std::function<Document(const Document&)>;

struct AggregationOptions {
  std::size_t item_budget = 240;  // max characters per free-text item
  Rewriter rewriter;              // applied to every aggregate when set
};

/// Pipes the document JSON through a shell command and reads the rewritten
/// document from its stdout.
Rewriter external_rewriter(const std::string& command);

/// Rule-based aggregation of tiling children into one periodic document.
/// Throws SpanGap, SpanOverlap or MixedLevels.
Document aggregate(const std::vector<Document>& children, const Span& target,
                   const AggregationOptions& opt = {});
/// Target span taken from the first/last child.
Document aggregate(const std::vector<Document>& children, const AggregationOptions& opt = {});

/// Prompt for `days` consecutive daily documents: blocks of `block` dailies,
/// then pairwise merging while the block count is even.
Document window_prompt(const std::vector<Document>& dailies, int block = 8,
                       const AggregationOptions& opt = {});

/// Numbers in a value string (signed decimals), skipping those followed by
/// '%' or "bp".
std::vector<double> price_numbers(const std::string& text);
/// Value of "key=<number>" inside a string.
std::optional<double> keyed_number(const std::string& text, const std::string& key);

// Tokenization.

inline constexpr int kPad = 0;
inline constexpr int kNull = 1;
inline constexpr int kUnk = 2;
inline constexpr int kTrunc = 3;
inline constexpr int kDate = 4;
inline constexpr int kZero = 5;

/// Magnitude-bucket token for a nonzero number: "<num+e>" / "<num-e>" with e
/// the clamped decimal exponent index 0..9.
std::string number_token(double x);

/// Splits a value string into lowercase word / number / date pieces.
std::vector<std::string> value_pieces(const std::string& value);

class Vocabulary {
 public:
  /// Specials, number buckets, level/category/item tags; no words.
  Vocabulary();

  /// Adds every word piece seen in `docs` (in first-seen order).
  static Vocabulary build(const std::vector<Document>& docs, std::size_t max_words = 4096);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  int add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

std::string category_tag(const std::string& category);
std::string item_tag(const std::string& category, const std::string& item);
std::string level_tag(Level l);

/// [level, (category, (item, pieces...)...)...] in taxonomy order; empty
/// documents give [<null>]; sequences longer than max_len end in <trunc>.
std::vector<int> tokenize(const Document& d, const Vocabulary& vocab, int max_len);

/// Attribute structure recovered from tokens: category -> item -> joined pieces.
struct Detokenized {
  std::optional<Level> level;
  Attributes attributes;
  bool truncated = false;
  bool null = false;
};
Detokenized detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

/// Value string as the tokenizer sees it (pieces joined by single spaces).
std::string canonical_value(const std::string& value, const Vocabulary& vocab);

}  // namespace tfcodit::conditioning
