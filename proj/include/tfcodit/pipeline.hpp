#pragma once

// Orchestration shared by the command-line tool, the Python module and the
// acceptance checks: data preparation, training runs, checkpoint bundles,
// generation/evaluation over directories and the two-regime experiment.

#include "tfcodit/conditioning.hpp"
#include "tfcodit/config.hpp"
#include "tfcodit/diffusion.hpp"
#include "tfcodit/evalharness.hpp"
#include "tfcodit/optim.hpp"
#include "tfcodit/preprocess.hpp"
#include "tfcodit/synthetic.hpp"
#include "tfcodit/train.hpp"
#include "tfcodit/uvae.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tfcodit::pipeline {

namespace fs = std::filesystem;

using Progress = std::function<void(const std::string&)>;

/// Daily FinMAP documents for a synthetic corpus; the sentiment and driving
/// factor items carry the regime label, the futures item the day's prices.
std::vector<conditioning::Document> regime_documents(const synthetic::Corpus& corpus,
                                                     const synthetic::CorpusSpec& spec);

/// Anchors for denormalizing the window that starts at normalized step `start`.
preprocess::NormalizationState window_anchors(const preprocess::NormalizationState& state,
                                              int start);

struct Windows {
  std::vector<preprocess::WindowedSample> samples;
  std::vector<signal::WaveletGrid> grids;
};

Windows make_windows(const TimeSeries& normalized, int horizon, int level, int stride);

/// Prompt for normalized steps [start, start + horizon); `daily` holds one
/// document per normalized step.
conditioning::Document window_prompt(const std::vector<conditioning::Document>& daily, int start,
                                     int horizon, int block, std::size_t item_budget = 96);

train::LoopConfig loop_config(const config::TrainSettings& t, std::uint64_t seed);

// U-VAE runs.

struct VaeRun {
  std::unique_ptr<uvae::Model> model;
  std::unique_ptr<optim::AdamW> opt;
  std::vector<train::LogRow> log;
};

/// Fresh model (normalizer fitted on `grids`) or the state in `resume`;
/// trains up to cfg.train_vae.steps.
VaeRun train_vae(const config::RunConfig& cfg, const std::vector<signal::WaveletGrid>& grids,
                 const fs::path& resume = {}, const Progress& progress = {});
void save_vae(const fs::path& dir, const VaeRun& run);
std::unique_ptr<uvae::Model> load_vae(const fs::path& dir, optim::AdamW* opt = nullptr);

// Diffusion runs.

std::vector<Mat> encode_means(const uvae::Model& vae, const std::vector<signal::WaveletGrid>& grids);
/// 1 / standard deviation of every latent entry.
double latent_scale(const std::vector<Mat>& means);

std::vector<train::LogRow> train_diffusion(diffusion::Denoiser& model, optim::AdamW& opt,
                                           const std::vector<diffusion::Example>& data,
                                           const diffusion::NoiseSchedule& schedule,
                                           const train::LoopConfig& cfg, int until,
                                           const std::function<void(const train::LogRow&)>& on_log = {});

struct DiffusionRun {
  std::unique_ptr<diffusion::Denoiser> model;
  std::unique_ptr<optim::AdamW> opt;
  conditioning::Vocabulary vocab;
  diffusion::NoiseSchedule schedule;
  double latent_scale = 1.0;
  std::vector<train::LogRow> log;
};

/// Builds examples from VAE means and window prompts and trains up to
/// cfg.train_diffusion.steps (continuing from `resume` when given).
DiffusionRun train_diffusion_run(const config::RunConfig& cfg, const uvae::Model& vae,
                                 const std::vector<signal::WaveletGrid>& grids,
                                 const std::vector<conditioning::Document>& prompts,
                                 const fs::path& resume = {}, const Progress& progress = {});
void save_diffusion(const fs::path& dir, const DiffusionRun& run);
DiffusionRun load_diffusion(const fs::path& dir, bool with_optimizer = false);

// File-based commands. Directory layout under paths.data_dir:
//   raw/<C>.csv, prompts/daily/<date>.json, regimes.csv,
//   processed/<C>/{train,test}.csv, processed/<C>/state.json,
//   processed/<C>/test_L<h>/<C>_<date>.csv (+ prompts/<stem>.json, .anchor.json)

fs::path raw_path(const config::RunConfig& cfg);
fs::path prompt_dir(const config::RunConfig& cfg);
fs::path processed_dir(const config::RunConfig& cfg);
fs::path test_dir(const config::RunConfig& cfg);
fs::path vae_dir(const config::RunConfig& cfg);
fs::path diffusion_dir(const config::RunConfig& cfg);
fs::path generated_dir(const config::RunConfig& cfg);

void cmd_gen_synthetic(const config::RunConfig& cfg);
void cmd_preprocess(const config::RunConfig& cfg);
std::vector<train::LogRow> cmd_train_vae(const config::RunConfig& cfg, bool resume,
                                         const Progress& progress = {});
std::vector<train::LogRow> cmd_train_diffusion(const config::RunConfig& cfg, bool resume,
                                               const Progress& progress = {});
/// Prompts: one JSON document or a directory of them (sibling
/// <stem>.anchor.json supplies anchors). Returns written trajectory CSVs.
std::vector<fs::path> cmd_generate(const config::RunConfig& cfg, const fs::path& prompts, int k,
                                   const fs::path& out_dir = {});
evalharness::EvalReport cmd_evaluate(const config::RunConfig& cfg, const fs::path& predictions,
                                     const fs::path& truth, const fs::path& out_dir);

struct RoundtripReport {
  int series_checked = 0;
  double max_wavelet_error = 0;
  double max_parseval_error = 0;
  double max_normalization_error = 0;
  bool ok(double tol = 1e-9) const {
    return max_wavelet_error < tol && max_parseval_error < tol && max_normalization_error < tol;
  }
};
/// Wavelet and normalization invariants over every window of a records CSV.
RoundtripReport cmd_roundtrip_check(const config::RunConfig& cfg, const fs::path& records_csv);

nlohmann::json anchors_to_json(const preprocess::NormalizationState& s);
preprocess::NormalizationState anchors_from_json(const nlohmann::json& j);

// Two-regime conditioning experiment.

struct RegimeExperimentConfig {
  config::RunConfig run;
  int draws = 50;  // per regime, per condition
  Progress progress;
};

struct RegimeOutcome {
  std::string label;
  double drift_sign = 0;
  double sign_match = 0;     // fraction of conditional draws with the prompted trend sign
  double null_sign_match = 0;
  double cond_mse = 0;       // OHLC MSE to the regime's mean window
  double null_mse = 0;
};

struct RegimeExperimentResult {
  std::vector<RegimeOutcome> regimes;
  double vae_recon = 0;
  double vae_seconds = 0;
  double diffusion_seconds = 0;
  double sampling_seconds = 0;
  double cond_mse() const;
  double null_mse() const;
};

RegimeExperimentResult run_regime_experiment(const RegimeExperimentConfig& cfg);

}  // namespace tfcodit::pipeline
