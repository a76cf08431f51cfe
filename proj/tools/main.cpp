#include "tfcodit/config.hpp"
#include "tfcodit/errors.hpp"
#include "tfcodit/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace tfcodit;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::string contract;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--horizon", c.horizon, "window length L");
  cmd->add_option("--contract", c.contract, "T, TF or TS");
  cmd->add_option("--set", c.sets, "dotted override a.b=value (repeatable)");
  cmd->add_flag("-q,--quiet", c.quiet, "no progress output");
}

bool file_sets_data_dir(const std::string& path) {
  if (path.empty()) return false;
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto tree = config::parse_toml(ss.str());
  return tree.contains("paths") && tree["paths"].contains("data_dir");
}

config::RunConfig resolve(const Common& c) {
  std::vector<std::string> ov;
  if (const char* root = std::getenv("TFCODIT_DATA_ROOT");
      root && *root && !file_sets_data_dir(c.config_path))
    ov.push_back(std::string("paths.data_dir=\"") + root + "\"");
  if (c.seed) ov.push_back("seed=" + std::to_string(*c.seed));
  if (c.horizon) ov.push_back("horizon=" + std::to_string(*c.horizon));
  if (!c.contract.empty()) ov.push_back("contract=\"" + c.contract + "\"");
  ov.insert(ov.end(), c.sets.begin(), c.sets.end());
  if (!c.config_path.empty()) return config::load(c.config_path, ov);
  return config::with_overrides(config::RunConfig{}, ov);
}

pipeline::Progress progress_for(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& s) { std::cerr << s << '\n'; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tfcodit: wavelet-latent diffusion for bond futures"};
  app.require_subcommand(1);

  Common common;

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic corpus and daily prompts");
  add_common(gen, common);

  auto* pre = app.add_subcommand("preprocess", "normalize records, split train/test windows");
  add_common(pre, common);

  bool resume = false;
  auto* tvae = app.add_subcommand("train-vae", "train the wavelet VAE");
  add_common(tvae, common);
  tvae->add_flag("--resume", resume, "continue from the existing checkpoint");

  auto* tdif = app.add_subcommand("train-diffusion", "train the latent denoiser");
  add_common(tdif, common);
  tdif->add_flag("--resume", resume, "continue from the existing checkpoint");

  std::string prompts, out_dir;
  int k = 4;
  auto* genr = app.add_subcommand("generate", "sample trajectories for prompts");
  add_common(genr, common);
  genr->add_option("--prompts", prompts, "prompt JSON file or directory");
  genr->add_option("-k,--trajectories", k, "trajectories per prompt")->check(CLI::PositiveNumber);
  genr->add_option("--out", out_dir, "output directory");

  std::string pred_dir, truth_dir;
  auto* eval = app.add_subcommand("evaluate", "score predictions against truth windows");
  add_common(eval, common);
  eval->add_option("--predictions", pred_dir, "prediction CSV directory");
  eval->add_option("--truth", truth_dir, "truth CSV directory");
  eval->add_option("--out", out_dir, "report directory");

  std::string records;
  auto* rt = app.add_subcommand("roundtrip-check", "wavelet and normalization invariants");
  add_common(rt, common);
  rt->add_option("--records", records, "records CSV (default: the raw corpus)");

  auto* show = app.add_subcommand("show-config", "print the resolved config");
  add_common(show, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(common);
    const auto progress = progress_for(common);

    if (*gen) {
      pipeline::cmd_gen_synthetic(cfg);
      std::cout << pipeline::raw_path(cfg).string() << '\n';
    } else if (*pre) {
      pipeline::cmd_preprocess(cfg);
      std::cout << pipeline::processed_dir(cfg).string() << '\n';
    } else if (*tvae) {
      pipeline::cmd_train_vae(cfg, resume, progress);
      std::cout << pipeline::vae_dir(cfg).string() << '\n';
    } else if (*tdif) {
      pipeline::cmd_train_diffusion(cfg, resume, progress);
      std::cout << pipeline::diffusion_dir(cfg).string() << '\n';
    } else if (*genr) {
      const fs::path p = prompts.empty() ? pipeline::test_dir(cfg) / "prompts" : fs::path(prompts);
      const auto files = pipeline::cmd_generate(cfg, p, k, out_dir);
      std::cout << files.size() << " trajectories\n";
    } else if (*eval) {
      const fs::path pd = pred_dir.empty() ? pipeline::generated_dir(cfg) : fs::path(pred_dir);
      const fs::path td = truth_dir.empty() ? pipeline::test_dir(cfg) : fs::path(truth_dir);
      const fs::path od = out_dir.empty() ? pd / "report" : fs::path(out_dir);
      const auto report = pipeline::cmd_evaluate(cfg, pd, td, od);
      std::cout << evalharness::format_table(report);
    } else if (*rt) {
      const fs::path r = records.empty() ? pipeline::raw_path(cfg) : fs::path(records);
      const auto rep = pipeline::cmd_roundtrip_check(cfg, r);
      std::cout << "series " << rep.series_checked << " wavelet " << rep.max_wavelet_error
                << " parseval " << rep.max_parseval_error << " normalization "
                << rep.max_normalization_error << '\n';
      return rep.ok() ? 0 : 1;
    } else if (*show) {
      std::cout << config::dump_toml(config::to_json(cfg));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
