#pragma once

// Layer building blocks shared by the U-VAE and the denoiser.

#include "tfcodit/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tfcodit::nn {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); streams never share state.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

Mat randn(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Mat uniform_fan_in(Rng& rng, Eigen::Index rows, Eigen::Index cols, int fan_in);

/// Rounds every entry to the nearest IEEE float so checkpoints are lossless.
void round_to_float(Mat& m);

/// y = x W + b with W stored (in x out).
struct Linear {
  ag::Parameter* weight = nullptr;
  ag::Parameter* bias = nullptr;

  static Linear create(ag::ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool with_bias = true);
  ag::Var operator()(ag::Graph& g, ag::Var x) const;
  int in() const { return static_cast<int>(weight->value.rows()); }
  int out() const { return static_cast<int>(weight->value.cols()); }
};

/// Row layer norm with learned gain/offset.
struct LayerNorm {
  ag::Parameter* gain = nullptr;
  ag::Parameter* offset = nullptr;

  static LayerNorm create(ag::ParamStore& store, const std::string& name, int width);
  ag::Var operator()(ag::Graph& g, ag::Var x) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ag::ParamStore& store, const std::string& name, int width,
                                   int heads, Rng& rng);

  /// Optional hooks for the caller: additive mask over (queries x keys),
  /// per-row rotation angles for projected queries/keys (rows x width/2),
  /// and a sink receiving each head's attention probabilities.
  struct Options {
    const Mat* mask = nullptr;
    const Mat* query_angles = nullptr;
    const Mat* key_angles = nullptr;
    std::vector<Mat>* weights_out = nullptr;
  };

  ag::Var operator()(ag::Graph& g, ag::Var queries, ag::Var keys_values,
                     const Options& opt) const;
  ag::Var operator()(ag::Graph& g, ag::Var queries, ag::Var keys_values) const {
    return (*this)(g, queries, keys_values, Options{});
  }
};

/// Fixed sinusoidal table: row p holds [sin(p w_0), cos(p w_0), sin(p w_1), ...].
Mat sinusoidal_table(int positions, int width, double base = 10000.0);

/// Sinusoidal embedding of a scalar timestep.
Mat timestep_embedding(double t, int width, double base = 10000.0);

}  // namespace tfcodit::nn
