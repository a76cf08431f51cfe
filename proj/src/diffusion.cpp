#include "tfcodit/diffusion.hpp"

#include "tfcodit/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace tfcodit::diffusion {

using nlohmann::json;

void to_json(json& j, const ScheduleConfig& c) {
  j = json{{"steps", c.steps},
           {"kind", c.kind == ScheduleKind::Linear ? "linear" : "cosine"},
           {"beta_start", c.beta_start},
           {"beta_end", c.beta_end}};
}

void from_json(const json& j, ScheduleConfig& c) {
  ScheduleConfig d;
  c.steps = j.value("steps", d.steps);
  const std::string kind = j.value("kind", std::string("linear"));
  if (kind == "linear") {
    c.kind = ScheduleKind::Linear;
  } else if (kind == "cosine") {
    c.kind = ScheduleKind::Cosine;
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown schedule kind '" + kind + "'");
  }
  c.beta_start = j.value("beta_start", d.beta_start);
  c.beta_end = j.value("beta_end", d.beta_end);
}

NoiseSchedule::NoiseSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
  if (cfg.steps < 1) throw Error(ErrorCode::InvalidConfig, "schedule needs at least one step");
  const int T = cfg.steps;
  betas_.assign(T + 1, 0.0);
  alpha_bar_.assign(T + 1, 1.0);
  if (cfg.kind == ScheduleKind::Linear) {
    if (!(cfg.beta_start > 0 && cfg.beta_start < cfg.beta_end && cfg.beta_end < 1) && T > 1) {
      throw Error(ErrorCode::InvalidConfig, "need 0 < beta_start < beta_end < 1");
    }
    for (int t = 1; t <= T; ++t) {
      betas_[t] = T == 1 ? cfg.beta_end
                         : cfg.beta_start + (cfg.beta_end - cfg.beta_start) * (t - 1) / (T - 1);
    }
  } else {
    const double s = 0.008;
    auto f = [&](int t) {
      const double x = (static_cast<double>(t) / T + s) / (1 + s) * std::numbers::pi / 2;
      return std::cos(x) * std::cos(x);
    };
    for (int t = 1; t <= T; ++t) betas_[t] = std::min(1.0 - f(t) / f(t - 1), 0.999);
  }
  for (int t = 1; t <= T; ++t) alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - betas_[t]);
}

void NoiseSchedule::check(int t, int lo) const {
  if (t < lo || t > cfg_.steps) {
    throw Error(ErrorCode::TimestepOutOfRange,
                "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                    std::to_string(cfg_.steps) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check(t, 1);
  return betas_[t];
}

double NoiseSchedule::alpha_bar(int t) const {
  check(t, 0);
  return alpha_bar_[t];
}

Mat forward_noise(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& schedule) {
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "noise shape differs from z0");
  }
  const double ab = schedule.alpha_bar(t);
  if (t == 0) return z0;
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

Mat build_mask(int n_text, int m_latent) {
  const int n = n_text + m_latent;
  const double ninf = -std::numeric_limits<double>::infinity();
  Mat m = Mat::Zero(n, n);
  for (int i = 0; i < n_text; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j > i) m(i, j) = ninf;  // covers later text and every latent column
    }
  }
  return m;
}

void DenoiserConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (layers < 1 || width < 2 || heads < 1) bad("denoiser sizes must be positive");
  if (width % heads != 0) bad("heads must divide the denoiser width");
  const int hd = width / heads;
  if (hd % 4 != 0) bad("head width must be a multiple of 4 for axial rotary phases");
  if (max_text < 1 || n_f < 1 || n_t < 1 || latent_dim < 1) bad("denoiser shapes must be positive");
  if (time_width < 2 || vocab_size < 2 || ffn_mult < 1) bad("denoiser widths must be positive");
  if (null_token < 0 || null_token >= vocab_size) bad("null token outside the vocabulary");
  if (!(p_uncond >= 0 && p_uncond <= 1)) bad("p_uncond must be in [0, 1]");
}

void to_json(json& j, const DenoiserConfig& c) {
  j = json{{"layers", c.layers},         {"width", c.width},
           {"heads", c.heads},           {"max_text", c.max_text},
           {"n_f", c.n_f},               {"n_t", c.n_t},
           {"latent_dim", c.latent_dim}, {"time_width", c.time_width},
           {"vocab_size", c.vocab_size}, {"ffn_mult", c.ffn_mult},
           {"null_token", c.null_token}, {"freeze_body", c.freeze_body},
           {"p_uncond", c.p_uncond},     {"rope_base", c.rope_base}};
}

void from_json(const json& j, DenoiserConfig& c) {
  DenoiserConfig d;
  c.layers = j.value("layers", d.layers);
  c.width = j.value("width", d.width);
  c.heads = j.value("heads", d.heads);
  c.max_text = j.value("max_text", d.max_text);
  c.n_f = j.value("n_f", d.n_f);
  c.n_t = j.value("n_t", d.n_t);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.time_width = j.value("time_width", d.time_width);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.ffn_mult = j.value("ffn_mult", d.ffn_mult);
  c.null_token = j.value("null_token", d.null_token);
  c.freeze_body = j.value("freeze_body", d.freeze_body);
  c.p_uncond = j.value("p_uncond", d.p_uncond);
  c.rope_base = j.value("rope_base", d.rope_base);
}

std::unique_ptr<Denoiser> Denoiser::create(const DenoiserConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::unique_ptr<Denoiser> m(new Denoiser());
  m->cfg_ = cfg;
  auto& s = m->params_;
  nn::Rng rng = nn::make_rng(seed, 0x6469);
  const int D = cfg.width;
  Mat table = nn::randn(rng, cfg.vocab_size, D, 0.02 * std::sqrt(static_cast<double>(D)));
  nn::round_to_float(table);
  m->text_table_ = &s.add("embed.text", std::move(table));
  m->latent_in_ = nn::Linear::create(s, "embed.latent", cfg.latent_dim, D, rng);
  m->time1_ = nn::Linear::create(s, "embed.time.1", cfg.time_width, D, rng);
  m->time2_ = nn::Linear::create(s, "embed.time.2", D, D, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "body." + std::to_string(l);
    Layer L;
    L.attn_ln = nn::LayerNorm::create(s, p + ".attn_ln", D);
    L.attn = nn::MultiHeadAttention::create(s, p + ".attn", D, cfg.heads, rng);
    L.text_ln = nn::LayerNorm::create(s, p + ".text_ln", D);
    L.text_ff1 = nn::Linear::create(s, p + ".text_ff1", D, cfg.ffn_mult * D, rng);
    L.text_ff2 = nn::Linear::create(s, p + ".text_ff2", cfg.ffn_mult * D, D, rng);
    L.adaln = nn::Linear::create(s, p + ".adaln", D, 2 * D, rng);
    L.lat_ff1 = nn::Linear::create(s, p + ".latent_ff1", D, cfg.ffn_mult * D, rng);
    L.lat_ff2 = nn::Linear::create(s, p + ".latent_ff2", cfg.ffn_mult * D, D, rng);
    m->layers_.push_back(L);
  }
  m->head_ln_ = nn::LayerNorm::create(s, "head.ln", D);
  m->head_out_ = nn::Linear::create(s, "head.out", D, cfg.latent_dim, rng);
  m->apply_freeze();
  return m;
}

bool Denoiser::is_body(const std::string& name) const { return name.rfind("body.", 0) == 0; }

void Denoiser::apply_freeze() {
  for (ag::Parameter* p : params_.all()) p->trainable = !(cfg_.freeze_body && is_body(p->name));
}

void Denoiser::zero_adaln() {
  for (auto& L : layers_) {
    L.adaln.weight->value.setZero();
    L.adaln.bias->value.setZero();
  }
}

Mat Denoiser::rotary_angles(int n_text) const {
  // per head: text rows rotate every pair by position; latent rows spend the
  // first half of the pairs on the frequency index I and the rest on time J
  const int D = cfg_.width;
  const int hd = D / cfg_.heads;
  const int pairs = hd / 2;
  const int half = pairs / 2;
  const int M = cfg_.latent_tokens();
  Mat a(n_text + M, D / 2);
  for (int h = 0; h < cfg_.heads; ++h) {
    for (int k = 0; k < pairs; ++k) {
      const int col = h * pairs + k;
      const double f_text = std::pow(cfg_.rope_base, -static_cast<double>(k) / pairs);
      for (int i = 0; i < n_text; ++i) a(i, col) = i * f_text;
      const int kk = k < half ? k : k - half;
      const double f_axis = std::pow(cfg_.rope_base, -static_cast<double>(kk) / half);
      for (int n = 0; n < M; ++n) {
        const int I = n / cfg_.n_t, J = n % cfg_.n_t;
        a(n_text + n, col) = (k < half ? I : J) * f_axis;
      }
    }
  }
  return a;
}

ag::Var Denoiser::forward(ag::Graph& g, ag::Var z_t, int t, const std::vector<int>& tokens,
                          std::vector<Mat>* hidden) const {
  const int M = cfg_.latent_tokens();
  if (z_t.rows() != M || z_t.cols() != cfg_.latent_dim) {
    throw Error(ErrorCode::ShapeMismatch, "latent grid must be M x d_c");
  }
  std::vector<int> ids = tokens.empty() ? null_condition() : tokens;
  if (static_cast<int>(ids.size()) > cfg_.max_text) {
    throw Error(ErrorCode::ShapeMismatch, "condition longer than max_text");
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  const int N = static_cast<int>(ids.size());
  const Mat mask = build_mask(N, M);
  const Mat angles = rotary_angles(N);

  ag::Var temb = time2_(g, ag::silu(time1_(g, g.constant(nn::timestep_embedding(t, cfg_.time_width)))));
  ag::Var cond = ag::silu(temb);

  ag::Var h = ag::concat_rows({ag::gather_rows(g.param(*text_table_), ids), latent_in_(g, z_t)});
  for (const Layer& L : layers_) {
    nn::MultiHeadAttention::Options opt;
    opt.mask = &mask;
    opt.query_angles = &angles;
    opt.key_angles = &angles;
    ag::Var x = L.attn_ln(g, h);
    h = ag::add(L.attn(g, x, x, opt), h);
    ag::Var text = ag::slice_rows(h, 0, N);
    ag::Var lat = ag::slice_rows(h, N, M);
    text = ag::add(text, L.text_ff2(g, ag::gelu(L.text_ff1(g, L.text_ln(g, text)))));
    ag::Var mod = L.adaln(g, cond);
    ag::Var scale = ag::add_scalar(ag::slice_cols(mod, 0, cfg_.width), 1.0);
    ag::Var shift = ag::slice_cols(mod, cfg_.width, cfg_.width);
    ag::Var normed = ag::add_row(ag::mul_row(ag::layer_norm(lat), scale), shift);
    lat = ag::add(lat, L.lat_ff2(g, ag::gelu(L.lat_ff1(g, normed))));
    h = ag::concat_rows({text, lat});
    if (hidden != nullptr) hidden->push_back(h.value());
  }
  return head_out_(g, head_ln_(g, ag::slice_rows(h, N, M)));
}

Mat Denoiser::predict(const Mat& z_t, int t, const std::vector<int>& tokens) const {
  ag::Graph g;
  return forward(g, g.constant(z_t), t, tokens).value();
}

ag::Var Denoiser::example_loss(ag::Graph& g, const Mat& z0, int t, const Mat& eps,
                               const std::vector<int>& tokens,
                               const NoiseSchedule& schedule) const {
  ag::Var pred = forward(g, g.constant(forward_noise(z0, t, eps, schedule)), t, tokens);
  return ag::mean(ag::square(ag::sub(pred, g.constant(eps))));
}

LossResult diffusion_loss(Denoiser& model, const std::vector<Example>& batch,
                          const NoiseSchedule& schedule, nn::Rng& rng, bool backward) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "diffusion loss on an empty batch");
  std::uniform_int_distribution<int> pick_t(1, schedule.steps());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  LossResult res;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Example& ex : batch) {
    const int t = pick_t(rng);
    Mat eps = nn::randn(rng, ex.z0.rows(), ex.z0.cols());
    const bool drop = u01(rng) < model.config().p_uncond;
    res.uncond += drop ? 1 : 0;
    ag::Graph g;
    ag::Var l = model.example_loss(g, ex.z0, t, eps, drop ? model.null_condition() : ex.tokens,
                                   schedule);
    res.loss += l.value()(0, 0) * inv;
    if (backward) g.backward(ag::scale(l, inv));
  }
  return res;
}

}  // namespace tfcodit::diffusion
