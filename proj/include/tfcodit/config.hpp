#pragma once

// Run configuration: one TOML-like file with dotted sections, every key
// overridable from the command line by its dotted name.

#include "tfcodit/diffusion.hpp"
#include "tfcodit/optim.hpp"
#include "tfcodit/sampler.hpp"
#include "tfcodit/synthetic.hpp"
#include "tfcodit/uvae.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tfcodit::config {

/// Parses the TOML subset used by run configs: [dotted.sections],
/// dotted keys, strings, booleans, integers, floats and flat arrays.
nlohmann::json parse_toml(const std::string& text);
/// Nested objects become sections; output parses back to the same tree.
std::string dump_toml(const nlohmann::json& tree);

/// Value text of an override ("64", "0.5", "true", "[1, 2]", "\"s\"" or a
/// bare word taken as a string).
nlohmann::json parse_value(const std::string& text);
/// Sets tree[a][b]... = value for the dotted key "a.b...".
void set_dotted(nlohmann::json& tree, const std::string& dotted, const nlohmann::json& value);

struct Paths {
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string prompt_dir;  // empty: <data_dir>/prompts
  std::string output_dir = "out";
};

struct TrainSettings {
  int steps = 1000;
  int batch = 16;
  int log_every = 50;
  optim::AdamWConfig adam{};
  optim::Schedule schedule = optim::Schedule::Cosine;
  double warmup_fraction = 0.0;
};

struct RunConfig {
  Paths paths;
  Contract contract = Contract::T;
  int horizon = 32;  // L
  int level = 3;     // J
  std::vector<int> horizons{8, 32, 64, 128};
  std::uint64_t seed = 1;
  int stride = 1;
  int prompt_block = 8;
  int prompt_item_budget = 96;  // characters per aggregated free-text item
  int test_days = 200;
  uvae::UVaeConfig vae{};
  diffusion::DenoiserConfig denoiser{};
  diffusion::ScheduleConfig noise{};
  sampler::SamplerConfig sampling{};
  TrainSettings train_vae{};
  TrainSettings train_diffusion{};
  synthetic::CorpusSpec synthetic{};

  RunConfig();

  /// Copies horizon/level into the model configs and checks cross-module
  /// shapes. Throws InvalidConfig / ConfigShapeMismatch.
  void finalize();
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; finalize() is applied.
RunConfig from_json(const nlohmann::json& j);

RunConfig load(const std::filesystem::path& path,
               const std::vector<std::string>& overrides = {});
void save(const std::filesystem::path& path, const RunConfig& c);

/// Applies "a.b=value" overrides on top of `c`.
RunConfig with_overrides(const RunConfig& c, const std::vector<std::string>& overrides);

optim::ScheduleConfig schedule_for(const TrainSettings& t);

}  // namespace tfcodit::config
