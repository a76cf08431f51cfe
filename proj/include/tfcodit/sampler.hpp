#pragma once

// Reverse-time sampling and the generation pipeline
// noise -> latent -> wavelet grid -> normalized series -> prices.

#include "tfcodit/diffusion.hpp"
#include "tfcodit/preprocess.hpp"
#include "tfcodit/signal.hpp"
#include "tfcodit/uvae.hpp"

#include "json.hpp"

#include <functional>
#include <vector>

namespace tfcodit::sampler {

enum class Method { AncestralDdpm, FirstOrderSolver };

struct SamplerConfig {
  Method method = Method::AncestralDdpm;
  int num_steps = 50;
  std::uint64_t seed = 0;
  double guidance_scale = 0.0;  // eps = (1+s) eps_cond - s eps_null

  void validate(int diffusion_steps) const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
std::string to_string(Method m);
Method parse_method(const std::string& s);

/// Strictly decreasing grid from T down to 0 with num_steps transitions.
std::vector<int> timesteps(int diffusion_steps, int num_steps);

using EpsFn = std::function<Mat(const Mat& z_t, int t)>;

/// One transition t -> s (s < t) given the predicted noise.
Mat transition(const Mat& z_t, const Mat& eps_hat, int t, int s,
               const diffusion::NoiseSchedule& schedule, Method method, nn::Rng& rng);

Mat sample_latent(const EpsFn& eps_fn, Eigen::Index rows, Eigen::Index cols,
                  const diffusion::NoiseSchedule& schedule, const SamplerConfig& cfg,
                  nn::Rng& rng);

/// Latent grid (M x d_c) for one trajectory; the RNG stream is
/// (cfg.seed, trajectory).
Mat sample_latent(const diffusion::Denoiser* model, const std::vector<int>& condition,
                  const diffusion::NoiseSchedule& schedule, const SamplerConfig& cfg,
                  std::uint64_t trajectory = 0);

struct Pipeline {
  const uvae::Model* vae = nullptr;
  const diffusion::Denoiser* denoiser = nullptr;
  const diffusion::NoiseSchedule* schedule = nullptr;
  double latent_scale = 1.0;  // diffusion runs on z * latent_scale
  signal::DecompositionConfig dwt{};

  /// Throws ShapeMismatch when the two models disagree on the latent grid.
  void check() const;
};

struct Generated {
  Mat z0;                  // 1 x d, VAE units
  signal::WaveletGrid grid;
  TimeSeries normalized;   // 8 x L
  TimeSeries raw;          // 8 x L, price units
  std::vector<preprocess::RawDailyRecord> records;
};

/// Decodes a VAE-space latent through IDWT and denormalization.
Generated decode_latent(const Pipeline& p, const Mat& z0,
                        const preprocess::NormalizationState& anchors);

Generated generate(const Pipeline& p, const std::vector<int>& condition, const SamplerConfig& cfg,
                   const preprocess::NormalizationState& anchors, std::uint64_t trajectory = 0);

/// Records -> 8 x L raw-value series (channel order of the ingestion schema).
TimeSeries records_to_series(const std::vector<preprocess::RawDailyRecord>& records,
                             Contract contract);

}  // namespace tfcodit::sampler
