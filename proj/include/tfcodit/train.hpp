#pragma once

// Training loops. Step k draws its minibatch and noise from make_rng(seed, k),
// so a run resumed from a checkpoint at step k continues bit-identically.

#include "tfcodit/optim.hpp"
#include "tfcodit/uvae.hpp"

#include <functional>
#include <iosfwd>
#include <vector>

namespace tfcodit::train {

struct LogRow {
  int step = 0;
  double loss = 0;
  double term_a = 0;  // vae: reconstruction; diffusion: unused
  double term_b = 0;  // vae: kl
  double lr = 0;
  double grad_norm = 0;
};

struct LoopConfig {
  int steps = 1000;  // total schedule length
  int batch = 16;
  optim::AdamWConfig adam{};
  optim::ScheduleConfig schedule{};
  std::uint64_t seed = 1;
  int log_every = 50;
};

/// Minibatch indices for one step: a shuffled pass when batch >= n.
std::vector<int> batch_indices(nn::Rng& rng, int n, int batch);

struct VaeOptions {
  bool sample_noise = true;  // reparameterized z; false trains on mu
};

/// Runs steps [opt.steps(), until) and returns every log_every-th row plus the last.
std::vector<LogRow> train_vae(uvae::Model& model, optim::AdamW& opt,
                              const std::vector<signal::WaveletGrid>& data, const LoopConfig& cfg,
                              int until, const VaeOptions& vopt = {},
                              const std::function<void(const LogRow&)>& on_log = {});

/// Mean |W - W_hat| over all elements using z = mu.
double mean_abs_reconstruction(const uvae::Model& model,
                               const std::vector<signal::WaveletGrid>& data);

void write_log_csv(std::ostream& out, const std::vector<LogRow>& rows,
                   const std::string& term_a = "recon", const std::string& term_b = "kl");

}  // namespace tfcodit::train
