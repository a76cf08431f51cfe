#include "tfcodit/config.hpp"

#include "tfcodit/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace tfcodit::config {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_dots(const std::string& key) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  for (const auto& p : parts) {
    if (p.empty()) throw Error(ErrorCode::Parse, "empty key segment in '" + key + "'");
  }
  return parts;
}

// Drops a trailing '#' comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (c == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

json parse_scalar(const std::string& t, bool strict) {
  if (t.empty()) throw Error(ErrorCode::Parse, "empty value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw Error(ErrorCode::Parse, "unterminated string " + t);
    try {
      return json::parse(t);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::Parse, "bad string " + t);
    }
  }
  if (t == "true") return true;
  if (t == "false") return false;
  const bool floaty = t.find_first_of(".eE") != std::string::npos || t == "inf" || t == "-inf" || t == "nan";
  if (!floaty) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec == std::errc() && ptr == t.data() + t.size()) return v;
  } else {
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec == std::errc() && ptr == t.data() + t.size()) return v;
  }
  if (strict) throw Error(ErrorCode::Parse, "bad value '" + t + "'");
  return t;
}

class ValueParser {
 public:
  ValueParser(const std::string& text, bool strict) : s_(text), strict_(strict) {}

  json parse() {
    json v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::Parse, what + " in '" + s_ + "'");
  }

  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    char c = s_[pos_];
    if (c == '[') return array();
    if (c == '{') return table();
    if (c == '"') return string();
    std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '}') ++pos_;
    return parse_scalar(trim(s_.substr(start, pos_ - start)), strict_);
  }

  json string() {
    std::size_t start = pos_++;
    while (pos_ < s_.size() && !(s_[pos_] == '"' && s_[pos_ - 1] != '\\')) ++pos_;
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return parse_scalar(s_.substr(start, pos_ - start), true);
  }

  json array() {
    ++pos_;
    json arr = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected , or ]");
    }
  }

  json table() {
    ++pos_;
    json obj = json::object();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '}') {
      ++pos_;
      return obj;
    }
    while (true) {
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != '=') ++pos_;
      if (pos_ >= s_.size()) fail("expected key = value");
      const std::string key = trim(s_.substr(start, pos_ - start));
      ++pos_;
      set_dotted(obj, key, value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated inline table");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (s_[pos_] == '}') {
        ++pos_;
        return obj;
      }
      fail("expected , or }");
    }
  }

  const std::string& s_;
  bool strict_;
  std::size_t pos_ = 0;
};

json parse_any(const std::string& text, bool strict) { return ValueParser(text, strict).parse(); }

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v.get<double>());
    std::string s(buf, ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  if (v.is_number()) return v.dump();
  throw Error(ErrorCode::InvalidConfig, "cannot write value " + v.dump());
}

std::string value_text(const json& v) {
  if (v.is_array()) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += value_text(v[i]);
    }
    return s + "]";
  }
  if (v.is_object()) {
    std::string s = "{";
    bool first = true;
    for (const auto& [k, x] : v.items()) {
      s += first ? " " : ", ";
      first = false;
      s += k + " = " + value_text(x);
    }
    return s + (first ? "}" : " }");
  }
  return scalar_text(v);
}

void dump_section(std::ostringstream& out, const json& node, const std::string& prefix) {
  bool wrote_header = prefix.empty();
  for (const auto& [k, v] : node.items()) {
    if (v.is_object()) continue;
    if (!wrote_header) {
      out << "\n[" << prefix << "]\n";
      wrote_header = true;
    }
    out << k << " = " << value_text(v) << "\n";
  }
  for (const auto& [k, v] : node.items()) {
    if (!v.is_object()) continue;
    const std::string name = prefix.empty() ? k : prefix + "." + k;
    if (v.empty()) {
      out << "\n[" << name << "]\n";
      continue;
    }
    dump_section(out, v, name);
  }
}

const char* schedule_name(optim::Schedule s) {
  return s == optim::Schedule::Cosine ? "cosine" : "constant";
}

optim::Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return optim::Schedule::Cosine;
  if (s == "constant") return optim::Schedule::Constant;
  throw Error(ErrorCode::InvalidConfig, "unknown schedule '" + s + "'");
}

json train_json(const TrainSettings& t) {
  return {{"steps", t.steps},
          {"batch", t.batch},
          {"log_every", t.log_every},
          {"adam", t.adam},
          {"schedule", schedule_name(t.schedule)},
          {"warmup_fraction", t.warmup_fraction}};
}

TrainSettings train_from(const json& j, TrainSettings t) {
  t.steps = j.value("steps", t.steps);
  t.batch = j.value("batch", t.batch);
  t.log_every = j.value("log_every", t.log_every);
  if (j.contains("adam")) {
    json merged = t.adam;
    merged.update(j["adam"]);
    t.adam = merged.get<optim::AdamWConfig>();
  }
  if (j.contains("schedule")) t.schedule = parse_schedule(j["schedule"].get<std::string>());
  t.warmup_fraction = j.value("warmup_fraction", t.warmup_fraction);
  return t;
}

template <typename T>
T merged(const T& base, const json& j, const char* key) {
  if (!j.contains(key)) return base;
  json m = base;
  m.update(j[key]);
  return m.get<T>();
}

}  // namespace

json parse_value(const std::string& text) { return parse_any(text, false); }

void set_dotted(json& tree, const std::string& dotted, const json& value) {
  json* node = &tree;
  const auto parts = split_dots(dotted);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw Error(ErrorCode::Parse, "'" + dotted + "' crosses a value");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

json parse_toml(const std::string& text) {
  json tree = json::object();
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw Error(ErrorCode::Parse, "bad section header");
        section = trim(line.substr(1, line.size() - 2));
        split_dots(section);
        json* node = &tree;
        for (const auto& p : split_dots(section)) {
          json& next = (*node)[p];
          if (next.is_null()) next = json::object();
          node = &next;
        }
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::Parse, "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string full = section.empty() ? key : section + "." + key;
      set_dotted(tree, full, parse_any(line.substr(eq + 1), true));
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return tree;
}

std::string dump_toml(const json& tree) {
  std::ostringstream out;
  dump_section(out, tree, "");
  std::string s = out.str();
  if (!s.empty() && s.front() == '\n') s.erase(0, 1);
  return s;
}

RunConfig::RunConfig() {
  train_vae.adam.lr = 1e-3;
  train_vae.steps = 2000;
  train_diffusion.adam.lr = 5e-4;
  train_diffusion.warmup_fraction = 0.05;
  train_diffusion.steps = 3000;
  train_diffusion.batch = 32;
  denoiser.layers = 2;
  denoiser.width = 64;
  denoiser.heads = 4;
  denoiser.time_width = 32;
  denoiser.ffn_mult = 2;
  denoiser.max_text = 48;
  sampling.num_steps = 50;
  finalize();
}

void RunConfig::finalize() {
  if (std::find(horizons.begin(), horizons.end(), horizon) == horizons.end()) {
    throw Error(ErrorCode::InvalidConfig,
                "horizon " + std::to_string(horizon) + " not in the configured horizon set");
  }
  if (stride < 1) throw Error(ErrorCode::InvalidConfig, "stride must be positive");
  if (prompt_block < 1) throw Error(ErrorCode::InvalidConfig, "prompt_block must be positive");
  if (prompt_item_budget < 8) throw Error(ErrorCode::InvalidConfig, "prompt_item_budget too small");
  if (test_days < 1) throw Error(ErrorCode::InvalidConfig, "test_days must be positive");
  vae.horizon = horizon;
  vae.level = level;
  vae.validate();
  denoiser.validate();
  if (denoiser.n_f != vae.n_f() || denoiser.n_t != vae.n_t() ||
      denoiser.latent_dim != vae.token_width()) {
    throw Error(ErrorCode::ConfigShapeMismatch,
                "denoiser latent grid " + std::to_string(denoiser.n_f) + "x" +
                    std::to_string(denoiser.n_t) + "x" + std::to_string(denoiser.latent_dim) +
                    " does not match the VAE's " + std::to_string(vae.n_f()) + "x" +
                    std::to_string(vae.n_t()) + "x" + std::to_string(vae.token_width()));
  }
  sampling.validate(noise.steps);
  synthetic.contract = contract;
  synthetic.validate();
}

json to_json(const RunConfig& c) {
  json vae = c.vae;
  vae.erase("horizon");
  vae.erase("level");
  json den = c.denoiser;
  den.erase("n_f");
  den.erase("n_t");
  den.erase("latent_dim");
  json syn = c.synthetic;
  syn.erase("contract");
  return {{"contract", std::string(to_string(c.contract))},
          {"horizon", c.horizon},
          {"level", c.level},
          {"horizons", c.horizons},
          {"seed", c.seed},
          {"stride", c.stride},
          {"prompt_block", c.prompt_block},
          {"prompt_item_budget", c.prompt_item_budget},
          {"test_days", c.test_days},
          {"paths",
           {{"data_dir", c.paths.data_dir},
            {"checkpoint_dir", c.paths.checkpoint_dir},
            {"prompt_dir", c.paths.prompt_dir},
            {"output_dir", c.paths.output_dir}}},
          {"vae", vae},
          {"denoiser", den},
          {"noise", c.noise},
          {"sampler", c.sampling},
          {"train", {{"vae", train_json(c.train_vae)}, {"diffusion", train_json(c.train_diffusion)}}},
          {"synthetic", syn}};
}

RunConfig from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("contract")) c.contract = parse_contract(j["contract"].get<std::string>());
    c.horizon = j.value("horizon", c.horizon);
    c.level = j.value("level", c.level);
    c.horizons = j.value("horizons", c.horizons);
    c.seed = j.value("seed", c.seed);
    c.stride = j.value("stride", c.stride);
    c.prompt_block = j.value("prompt_block", c.prompt_block);
    c.prompt_item_budget = j.value("prompt_item_budget", c.prompt_item_budget);
    c.test_days = j.value("test_days", c.test_days);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.paths.data_dir = p.value("data_dir", c.paths.data_dir);
      c.paths.checkpoint_dir = p.value("checkpoint_dir", c.paths.checkpoint_dir);
      c.paths.prompt_dir = p.value("prompt_dir", c.paths.prompt_dir);
      c.paths.output_dir = p.value("output_dir", c.paths.output_dir);
    }
    c.vae = merged(c.vae, j, "vae");
    c.vae.horizon = c.horizon;
    c.vae.level = c.level;
    // latent grid follows the VAE unless given explicitly
    c.denoiser.n_f = c.vae.n_f();
    c.denoiser.n_t = c.vae.n_t();
    c.denoiser.latent_dim = c.vae.token_width();
    c.denoiser = merged(c.denoiser, j, "denoiser");
    c.noise = merged(c.noise, j, "noise");
    c.sampling = merged(c.sampling, j, "sampler");
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("vae")) c.train_vae = train_from(t["vae"], c.train_vae);
      if (t.contains("diffusion")) c.train_diffusion = train_from(t["diffusion"], c.train_diffusion);
    }
    c.synthetic = merged(c.synthetic, j, "synthetic");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.finalize();
  return c;
}

RunConfig with_overrides(const RunConfig& c, const std::vector<std::string>& overrides) {
  json tree = to_json(c);
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "override needs key=value: " + o);
    set_dotted(tree, trim(o.substr(0, eq)), parse_value(o.substr(eq + 1)));
  }
  return from_json(tree);
}

RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json tree = parse_toml(ss.str());
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "override needs key=value: " + o);
    set_dotted(tree, trim(o.substr(0, eq)), parse_value(o.substr(eq + 1)));
  }
  return from_json(tree);
}

void save(const std::filesystem::path& path, const RunConfig& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write config " + path.string());
  out << dump_toml(to_json(c));
}

optim::ScheduleConfig schedule_for(const TrainSettings& t) {
  optim::ScheduleConfig s;
  s.kind = t.schedule;
  s.warmup_fraction = t.warmup_fraction;
  s.total_steps = t.steps;
  return s;
}

}  // namespace tfcodit::config
