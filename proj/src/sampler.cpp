#include "tfcodit/sampler.hpp"

#include "tfcodit/errors.hpp"

#include <cmath>

namespace tfcodit::sampler {

using nlohmann::json;

std::string to_string(Method m) {
  return m == Method::AncestralDdpm ? "ancestral_ddpm" : "solver_first_order";
}

Method parse_method(const std::string& s) {
  if (s == "ancestral_ddpm" || s == "ddpm") return Method::AncestralDdpm;
  if (s == "solver_first_order" || s == "ddim") return Method::FirstOrderSolver;
  throw Error(ErrorCode::InvalidConfig, "unknown sampler method '" + s + "'");
}

void SamplerConfig::validate(int diffusion_steps) const {
  if (num_steps < 1 || num_steps > diffusion_steps) {
    throw Error(ErrorCode::InvalidConfig, "num_steps must be in [1, T_diff]");
  }
  if (!(guidance_scale >= 0)) throw Error(ErrorCode::InvalidConfig, "guidance_scale must be >= 0");
}

void to_json(json& j, const SamplerConfig& c) {
  j = json{{"method", to_string(c.method)},
           {"num_steps", c.num_steps},
           {"seed", c.seed},
           {"guidance_scale", c.guidance_scale}};
}

void from_json(const json& j, SamplerConfig& c) {
  SamplerConfig d;
  c.method = parse_method(j.value("method", to_string(d.method)));
  c.num_steps = j.value("num_steps", d.num_steps);
  c.seed = j.value("seed", d.seed);
  c.guidance_scale = j.value("guidance_scale", d.guidance_scale);
}

std::vector<int> timesteps(int diffusion_steps, int num_steps) {
  if (num_steps < 1 || num_steps > diffusion_steps) {
    throw Error(ErrorCode::InvalidConfig, "num_steps must be in [1, T_diff]");
  }
  std::vector<int> ts;
  for (int i = 0; i <= num_steps; ++i) {
    // rounding a strictly decreasing linspace with spacing >= 1 stays strict
    const double x = diffusion_steps * (1.0 - static_cast<double>(i) / num_steps);
    ts.push_back(static_cast<int>(std::lround(x)));
  }
  return ts;
}

Mat transition(const Mat& z_t, const Mat& eps_hat, int t, int s,
               const diffusion::NoiseSchedule& schedule, Method method, nn::Rng& rng) {
  const double ab_t = schedule.alpha_bar(t);
  const double ab_s = schedule.alpha_bar(s);
  const Mat x0 = (z_t - std::sqrt(1.0 - ab_t) * eps_hat) / std::sqrt(ab_t);
  if (method == Method::FirstOrderSolver) {
    return std::sqrt(ab_s) * x0 + std::sqrt(1.0 - ab_s) * eps_hat;
  }
  const double beta = 1.0 - ab_t / ab_s;
  const double c0 = std::sqrt(ab_s) * beta / (1.0 - ab_t);
  const double ct = std::sqrt(ab_t / ab_s) * (1.0 - ab_s) / (1.0 - ab_t);
  Mat mean = c0 * x0 + ct * z_t;
  if (s == 0) return mean;
  const double sigma = std::sqrt((1.0 - ab_s) / (1.0 - ab_t) * beta);
  return mean + sigma * nn::randn(rng, z_t.rows(), z_t.cols());
}

Mat sample_latent(const EpsFn& eps_fn, Eigen::Index rows, Eigen::Index cols,
                  const diffusion::NoiseSchedule& schedule, const SamplerConfig& cfg,
                  nn::Rng& rng) {
  cfg.validate(schedule.steps());
  const auto ts = timesteps(schedule.steps(), cfg.num_steps);
  Mat z = nn::randn(rng, rows, cols);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    z = transition(z, eps_fn(z, ts[i]), ts[i], ts[i + 1], schedule, cfg.method, rng);
  }
  return z;
}

Mat sample_latent(const diffusion::Denoiser* model, const std::vector<int>& condition,
                  const diffusion::NoiseSchedule& schedule, const SamplerConfig& cfg,
                  std::uint64_t trajectory) {
  if (model == nullptr) throw Error(ErrorCode::UntrainedParams, "no denoiser checkpoint loaded");
  const auto& mc = model->config();
  nn::Rng rng = nn::make_rng(cfg.seed, trajectory);
  const std::vector<int> cond = condition.empty() ? model->null_condition() : condition;
  const bool guided = cfg.guidance_scale > 0;
  EpsFn fn = [&](const Mat& z, int t) {
    Mat e = model->predict(z, t, cond);
    if (guided) {
      e = (1.0 + cfg.guidance_scale) * e -
          cfg.guidance_scale * model->predict(z, t, model->null_condition());
    }
    return e;
  };
  return sample_latent(fn, mc.latent_tokens(), mc.latent_dim, schedule, cfg, rng);
}

void Pipeline::check() const {
  if (vae == nullptr || denoiser == nullptr || schedule == nullptr) {
    throw Error(ErrorCode::UntrainedParams, "pipeline needs both checkpoints and a schedule");
  }
  const auto& v = vae->config();
  const auto& d = denoiser->config();
  if (v.n_f() != d.n_f || v.n_t() != d.n_t || v.token_width() != d.latent_dim) {
    throw Error(ErrorCode::ShapeMismatch, "U-VAE latent grid and denoiser latent shape differ");
  }
  if (v.level != dwt.level) throw Error(ErrorCode::ShapeMismatch, "decomposition level differs");
  if (!(latent_scale > 0)) throw Error(ErrorCode::InvalidConfig, "latent_scale must be positive");
}

TimeSeries records_to_series(const std::vector<preprocess::RawDailyRecord>& records,
                             Contract contract) {
  TimeSeries s;
  s.contract = contract;
  s.normalized = false;
  s.values.resize(kNumChannels, static_cast<Eigen::Index>(records.size()));
  for (std::size_t t = 0; t < records.size(); ++t) {
    const auto& r = records[t];
    const double row[kNumChannels] = {r.open, r.high,  r.low,    r.close,
                                      r.settle, r.value, r.volume, r.open_interest};
    for (int c = 0; c < kNumChannels; ++c) s.values(c, static_cast<Eigen::Index>(t)) = row[c];
    s.dates.push_back(r.date);
  }
  return s;
}

Generated decode_latent(const Pipeline& p, const Mat& z0,
                        const preprocess::NormalizationState& anchors) {
  if (p.vae == nullptr) throw Error(ErrorCode::UntrainedParams, "no U-VAE checkpoint loaded");
  Generated out;
  out.z0 = z0.size() == p.vae->config().width ? uvae::from_latent_grid(z0) : z0;
  out.grid = p.vae->decode(out.z0);
  out.normalized = signal::idwt_reconstruct(out.grid, p.dwt);
  preprocess::NormalizationState st = anchors;
  st.dates.clear();  // generated steps follow the anchor in business days
  st.prev_open.clear();
  st.prev_open_interest.clear();
  out.records = preprocess::denormalize(out.normalized, st);
  out.raw = records_to_series(out.records, out.normalized.contract);
  out.normalized.dates = out.raw.dates;
  return out;
}

Generated generate(const Pipeline& p, const std::vector<int>& condition, const SamplerConfig& cfg,
                   const preprocess::NormalizationState& anchors, std::uint64_t trajectory) {
  p.check();
  Mat grid = sample_latent(p.denoiser, condition, *p.schedule, cfg, trajectory);
  Mat z = uvae::from_latent_grid(grid) / p.latent_scale;
  return decode_latent(p, z, anchors);
}

}  // namespace tfcodit::sampler
