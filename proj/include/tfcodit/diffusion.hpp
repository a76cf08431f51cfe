#pragma once

// Latent diffusion: forward noising schedule, the text+latent transformer
// denoiser and the epsilon-prediction objective.

#include "tfcodit/autograd.hpp"
#include "tfcodit/nn.hpp"

#include "json.hpp"

#include <memory>
#include <vector>

namespace tfcodit::diffusion {

enum class ScheduleKind { Linear, Cosine };

struct ScheduleConfig {
  int steps = 1000;
  ScheduleKind kind = ScheduleKind::Linear;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);

class NoiseSchedule {
 public:
  explicit NoiseSchedule(const ScheduleConfig& cfg = {});

  int steps() const { return cfg_.steps; }
  const ScheduleConfig& config() const { return cfg_; }
  /// beta_t and alpha_t for 1 <= t <= T; alpha_bar(0) = 1.
  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;

 private:
  void check(int t, int lo) const;
  ScheduleConfig cfg_;
  std::vector<double> betas_;      // index t, betas_[0] unused
  std::vector<double> alpha_bar_;  // index t
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Mat forward_noise(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& schedule);

/// (N+M) x (N+M) additive mask: text rows attend causally to text only,
/// latent rows attend to everything.
Mat build_mask(int n_text, int m_latent);

struct DenoiserConfig {
  int layers = 4;
  int width = 128;  // D
  int heads = 4;
  int max_text = 64;  // N_max
  int n_f = 2;
  int n_t = 8;
  int latent_dim = 4;  // d_c
  int time_width = 64;
  int vocab_size = 512;
  int ffn_mult = 4;
  int null_token = 1;
  bool freeze_body = false;
  double p_uncond = 0.1;
  double rope_base = 10000.0;

  int latent_tokens() const { return n_f * n_t; }  // M
  void validate() const;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

/// One training example: latent grid (M x d_c) and its condition tokens.
struct Example {
  Mat z0;
  std::vector<int> tokens;
};

class Denoiser {
 public:
  static std::unique_ptr<Denoiser> create(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  ag::ParamStore& params() { return params_; }
  const ag::ParamStore& params() const { return params_; }

  /// Predicted noise (M x d_c). `hidden` receives the (N+M) x D sequence
  /// after every layer.
  ag::Var forward(ag::Graph& g, ag::Var z_t, int t, const std::vector<int>& tokens,
                  std::vector<Mat>* hidden = nullptr) const;
  Mat predict(const Mat& z_t, int t, const std::vector<int>& tokens) const;

  /// Loss for one example with explicit t and noise (deterministic).
  ag::Var example_loss(ag::Graph& g, const Mat& z0, int t, const Mat& eps,
                       const std::vector<int>& tokens, const NoiseSchedule& schedule) const;

  /// Names of the body parameters (everything but embeddings and output head).
  bool is_body(const std::string& name) const;
  /// Marks body parameters non-trainable when freeze_body is set.
  void apply_freeze();

  /// Zeroes every AdaLN modulation weight and bias.
  void zero_adaln();

  std::vector<int> null_condition() const { return {cfg_.null_token}; }

 private:
  Denoiser() = default;

  struct Layer {
    nn::LayerNorm attn_ln;
    nn::MultiHeadAttention attn;
    nn::LayerNorm text_ln;
    nn::Linear text_ff1, text_ff2;
    nn::Linear adaln;  // silu(temb) -> [scale | shift]
    nn::Linear lat_ff1, lat_ff2;
  };

  Mat rotary_angles(int n_text) const;

  DenoiserConfig cfg_;
  ag::ParamStore params_;
  ag::Parameter* text_table_ = nullptr;
  nn::Linear latent_in_;
  nn::Linear time1_, time2_;
  std::vector<Layer> layers_;
  nn::LayerNorm head_ln_;
  nn::Linear head_out_;
};

struct LossResult {
  double loss = 0;
  int uncond = 0;  // examples whose condition was dropped
};

/// Samples t ~ U{1..T}, eps ~ N(0, I) and condition dropout from `rng`;
/// accumulates parameter gradients of the batch-mean loss when `backward`.
LossResult diffusion_loss(Denoiser& model, const std::vector<Example>& batch,
                          const NoiseSchedule& schedule, nn::Rng& rng, bool backward = true);

}  // namespace tfcodit::diffusion
