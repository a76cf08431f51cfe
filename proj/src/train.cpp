#include "tfcodit/train.hpp"

#include "tfcodit/errors.hpp"
#include "tfcodit/preprocess.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace tfcodit::train {

std::vector<int> batch_indices(nn::Rng& rng, int n, int batch) {
  if (n <= 0) throw Error(ErrorCode::EmptyBatch, "no training samples");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (batch >= n) {
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  }
  std::vector<int> out;
  out.reserve(batch);
  // partial Fisher-Yates: first `batch` distinct indices
  for (int i = 0; i < batch; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(idx[i]);
  }
  return out;
}

std::vector<LogRow> train_vae(uvae::Model& model, optim::AdamW& opt,
                              const std::vector<signal::WaveletGrid>& data, const LoopConfig& cfg,
                              int until, const VaeOptions& vopt,
                              const std::function<void(const LogRow&)>& on_log) {
  if (data.empty()) throw Error(ErrorCode::MissingData, "no VAE training windows");
  std::vector<LogRow> log;
  const int width = model.config().width;
  for (int step = opt.steps(); step < until; ++step) {
    nn::Rng rng = nn::make_rng(cfg.seed, static_cast<std::uint64_t>(step));
    auto ids = batch_indices(rng, static_cast<int>(data.size()), cfg.batch);
    model.params().zero_grad();
    LogRow row;
    row.step = step;
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (int id : ids) {
      ag::Graph g;
      Mat eps;
      if (vopt.sample_noise) eps = nn::randn(rng, 1, width);
      auto terms = model.elbo(g, data[id], vopt.sample_noise ? &eps : nullptr);
      ag::Var scaled = ag::scale(terms.total, inv);
      g.backward(scaled);
      row.loss += terms.total.value()(0, 0) * inv;
      row.term_a += terms.recon.value()(0, 0) * inv;
      row.term_b += terms.kl.value()(0, 0) * inv;
    }
    row.lr = optim::learning_rate(cfg.schedule, cfg.adam.lr, step);
    row.grad_norm = opt.step(row.lr);
    const bool last = step + 1 == until;
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || last)) {
      log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return log;
}

double mean_abs_reconstruction(const uvae::Model& model,
                               const std::vector<signal::WaveletGrid>& data) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& grid : data) {
    auto rec = model.reconstruct(grid);
    for (int c = 0; c < grid.channels(); ++c) {
      total += (rec.maps[c] - grid.maps[c]).cwiseAbs().sum();
      count += static_cast<std::size_t>(grid.maps[c].size());
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& rows, const std::string& term_a,
                   const std::string& term_b) {
  out << "step,loss," << term_a << "," << term_b << ",lr,grad_norm\n";
  for (const auto& r : rows) {
    out << r.step << "," << preprocess::format_number(r.loss) << ","
        << preprocess::format_number(r.term_a) << "," << preprocess::format_number(r.term_b) << ","
        << preprocess::format_number(r.lr) << "," << preprocess::format_number(r.grad_norm) << "\n";
  }
}

}  // namespace tfcodit::train
