#pragma once

// U-shaped VAE over wavelet grids. Channels are compressed by a stack of
// latent-query attention layers (8 -> 4 -> 2 -> 1 rows) and expanded again by
// a decoder that reuses the encoder's query tables.

#include "tfcodit/autograd.hpp"
#include "tfcodit/nn.hpp"
#include "tfcodit/signal.hpp"

#include "json.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace tfcodit::uvae {

enum class ReconLoss { L1, MSE };

struct UVaeConfig {
  int channels = kNumChannels;
  int layers = 3;
  int reduction = 2;
  int width = 64;  // d
  std::vector<int> encoder_heads{16, 8, 4};
  std::vector<int> decoder_heads{4, 8, 16};
  int horizon = 32;  // T
  int level = 3;     // J, grid has J+1 rows
  int patch_f = 2;
  int patch_t = 4;
  double kl_weight = 1e-4;
  ReconLoss recon = ReconLoss::L1;
  bool learned_positions = false;
  // LN(MHA(Q, H) + Q): keeps query rows distinguishable when a layer attends
  // to a single key row.
  bool query_residual = true;
  // hidden width multiplier of the per-layer feed-forward sublayer; 0 = none
  int ffn_mult = 2;

  int grid_rows() const { return level + 1; }  // Gamma
  int n_f() const { return grid_rows() / patch_f; }
  int n_t() const { return horizon / patch_t; }
  int tokens() const { return n_f() * n_t(); }  // N
  int token_width() const { return width / tokens(); }  // d_c
  int patch_size() const { return patch_f * patch_t; }
  /// Row counts C_0 .. C_L.
  std::vector<int> channel_schedule() const;

  /// Throws InvalidConfig / PatchSizeMismatch on inconsistent shapes.
  void validate() const;
};

void to_json(nlohmann::json& j, const UVaeConfig& c);
void from_json(const nlohmann::json& j, UVaeConfig& c);

/// Raw non-overlapping patches per channel: N x (P_f*P_t), token n = I*N_t + J,
/// entries flattened row-major inside the patch.
std::vector<Mat> patchify_raw(const signal::WaveletGrid& grid, const UVaeConfig& cfg);
/// Inverse of patchify_raw.
signal::WaveletGrid unpatchify(const std::vector<Mat>& patches, const UVaeConfig& cfg);

/// Positional table N x d_c: PE_freq(I) + PE_time(J).
Mat position_table(const UVaeConfig& cfg);

/// z (1 x d) viewed as the N_f*N_t x d_c latent grid (row n = I*N_t + J).
Mat to_latent_grid(const Mat& z, const UVaeConfig& cfg);
Mat from_latent_grid(const Mat& grid);

struct LossTerms {
  ag::Var total;
  ag::Var recon;
  ag::Var kl;
};

struct LatentSample {
  Mat mu;       // 1 x d
  Mat log_var;  // 1 x d
  Mat z;        // 1 x d
};

/// Closed-form KL(N(mu, exp(log_var)) || N(0, I)), summed over dimensions.
double kl_divergence(const Mat& mu, const Mat& log_var);

class Model {
 public:
  static std::unique_ptr<Model> create(const UVaeConfig& cfg, std::uint64_t seed);

  const UVaeConfig& config() const { return cfg_; }
  ag::ParamStore& params() { return params_; }
  const ag::ParamStore& params() const { return params_; }

  /// Patch projection + positions, flattened per channel: C x d.
  ag::Var embed(ag::Graph& g, const signal::WaveletGrid& grid) const;
  /// One encoder LQA layer (1-based), returning C_layer rows.
  ag::Var encoder_layer(ag::Graph& g, int layer, ag::Var h,
                        std::vector<Mat>* attention = nullptr) const;

  struct Encoded {
    ag::Var mu, log_var, z;
    std::vector<int> row_counts;  // rows of H^(0..L)
  };
  /// eps == nullptr means z = mu.
  Encoded encode(ag::Graph& g, ag::Var tokens, const Mat* eps = nullptr,
                 std::vector<Mat>* attention = nullptr) const;

  /// Returns C x (Gamma*T) in patch order; row counts of U^(L..0) optional.
  ag::Var decode(ag::Graph& g, ag::Var z, std::vector<int>* row_counts = nullptr,
                 std::vector<Mat>* attention = nullptr) const;

  /// ELBO with per-term breakdown for one grid.
  LossTerms elbo(ag::Graph& g, const signal::WaveletGrid& grid, const Mat* eps) const;
  /// Reconstruction/KL given explicit tensors.
  static LossTerms elbo_terms(ag::Var target, ag::Var recon, ag::Var mu, ag::Var log_var,
                              const UVaeConfig& cfg);

  /// Inference helpers (no gradient bookkeeping beyond a local graph).
  LatentSample encode(const signal::WaveletGrid& grid, nn::Rng* noise = nullptr) const;
  signal::WaveletGrid decode(const Mat& z) const;
  signal::WaveletGrid reconstruct(const signal::WaveletGrid& grid) const;

  /// Fits the per-(channel, grid row) shift/scale buffers applied before
  /// patchify and undone after Linear_out. Identity until fitted.
  void fit_normalizer(const std::vector<signal::WaveletGrid>& data);
  const Mat& shift() const { return shift_->value; }
  const Mat& scale() const { return scale_->value; }

  /// Encoder query table Q^(layer), shared with the decoder.
  ag::Parameter& query(int layer) { return *queries_.at(layer - 1); }

  /// Grid in patch order as a constant C x (Gamma*T).
  static Mat flatten_patches(const signal::WaveletGrid& grid, const UVaeConfig& cfg);
  signal::WaveletGrid to_grid(const Mat& flat) const;

 private:
  Model() = default;
  struct Block {
    nn::MultiHeadAttention attn;
    nn::LayerNorm ln;
    nn::Linear ff1, ff2;
    nn::LayerNorm ff_ln;
  };
  Mat expand_rows(const Mat& per_row) const;  // C x Gamma -> C x (Gamma*T) patch order
  Block make_block(const std::string& prefix, int heads, nn::Rng& rng);
  ag::Var lqa(ag::Graph& g, const Block& b, ag::Var queries, ag::Var keys,
              std::vector<Mat>* attention) const;

  UVaeConfig cfg_;
  ag::ParamStore params_;
  ag::Parameter* shift_ = nullptr;  // C x Gamma, not trainable
  ag::Parameter* scale_ = nullptr;
  nn::Linear patch_proj_;
  Mat fixed_positions_;
  ag::Parameter* pe_freq_ = nullptr;  // learned option
  ag::Parameter* pe_time_ = nullptr;
  std::vector<ag::Parameter*> queries_;
  std::vector<Block> enc_;
  nn::Linear mu_head_, logvar_head_, lin_in_;
  std::vector<ag::Parameter*> up_slots_;  // index layer-1, C_{layer-1} x d
  std::vector<Block> dec_;
  nn::Linear lin_out_;
};

}  // namespace tfcodit::uvae
