#include "tfcodit/uvae.hpp"

#include "tfcodit/errors.hpp"

#include <cmath>

namespace tfcodit::uvae {

namespace {

std::string recon_name(ReconLoss r) { return r == ReconLoss::L1 ? "L1" : "MSE"; }

ReconLoss parse_recon(const std::string& s) {
  if (s == "L1" || s == "l1") return ReconLoss::L1;
  if (s == "MSE" || s == "mse") return ReconLoss::MSE;
  throw Error(ErrorCode::InvalidConfig, "unknown recon loss '" + s + "'");
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

}  // namespace

std::vector<int> UVaeConfig::channel_schedule() const {
  std::vector<int> out{channels};
  int c = channels;
  for (int l = 0; l < layers; ++l) {
    c = reduction > 0 ? c / reduction : 0;
    out.push_back(c);
  }
  return out;
}

void UVaeConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (channels < 1 || layers < 1 || reduction < 1 || width < 1) bad("uvae sizes must be positive");
  int c = channels;
  for (int l = 0; l < layers; ++l) {
    if (c % reduction != 0) bad("channel schedule is not integral at layer " + std::to_string(l + 1));
    c /= reduction;
  }
  if (c != 1) bad("channel schedule must end at one row, got " + std::to_string(c));
  if (static_cast<int>(encoder_heads.size()) != layers ||
      static_cast<int>(decoder_heads.size()) != layers) {
    bad("need one head count per layer");
  }
  for (int h : encoder_heads) {
    if (h < 1 || width % h != 0) bad("encoder heads " + std::to_string(h) + " do not divide d");
  }
  for (int h : decoder_heads) {
    if (h < 1 || width % h != 0) bad("decoder heads " + std::to_string(h) + " do not divide d");
  }
  if (level < 1 || horizon < 1 || (horizon % (1 << level)) != 0) {
    bad("horizon " + std::to_string(horizon) + " not divisible by 2^" + std::to_string(level));
  }
  if (patch_f < 1 || patch_t < 1 || grid_rows() % patch_f != 0 || horizon % patch_t != 0) {
    throw Error(ErrorCode::PatchSizeMismatch,
                "patch " + std::to_string(patch_f) + "x" + std::to_string(patch_t) +
                    " does not tile " + std::to_string(grid_rows()) + "x" + std::to_string(horizon));
  }
  if (width % tokens() != 0) {
    bad("token count " + std::to_string(tokens()) + " does not divide d=" + std::to_string(width));
  }
  if (!(kl_weight >= 0)) bad("kl_weight must be non-negative");
  if (ffn_mult < 0) bad("ffn_mult must be non-negative");
}

void to_json(nlohmann::json& j, const UVaeConfig& c) {
  j = nlohmann::json{{"channels", c.channels},
                     {"layers", c.layers},
                     {"reduction", c.reduction},
                     {"width", c.width},
                     {"encoder_heads", c.encoder_heads},
                     {"decoder_heads", c.decoder_heads},
                     {"horizon", c.horizon},
                     {"level", c.level},
                     {"patch_f", c.patch_f},
                     {"patch_t", c.patch_t},
                     {"kl_weight", c.kl_weight},
                     {"recon", recon_name(c.recon)},
                     {"learned_positions", c.learned_positions},
                     {"query_residual", c.query_residual},
                     {"ffn_mult", c.ffn_mult}};
}

void from_json(const nlohmann::json& j, UVaeConfig& c) {
  UVaeConfig d;
  c.channels = j.value("channels", d.channels);
  c.layers = j.value("layers", d.layers);
  c.reduction = j.value("reduction", d.reduction);
  c.width = j.value("width", d.width);
  c.encoder_heads = j.value("encoder_heads", d.encoder_heads);
  c.decoder_heads = j.value("decoder_heads", d.decoder_heads);
  c.horizon = j.value("horizon", d.horizon);
  c.level = j.value("level", d.level);
  c.patch_f = j.value("patch_f", d.patch_f);
  c.patch_t = j.value("patch_t", d.patch_t);
  c.kl_weight = j.value("kl_weight", d.kl_weight);
  c.recon = parse_recon(j.value("recon", recon_name(d.recon)));
  c.learned_positions = j.value("learned_positions", d.learned_positions);
  c.query_residual = j.value("query_residual", d.query_residual);
  c.ffn_mult = j.value("ffn_mult", d.ffn_mult);
}

std::vector<Mat> patchify_raw(const signal::WaveletGrid& grid, const UVaeConfig& cfg) {
  if (grid.rows() % cfg.patch_f != 0 || grid.steps() % cfg.patch_t != 0) {
    throw Error(ErrorCode::PatchSizeMismatch, "grid does not tile into patches");
  }
  require_shape(grid.rows() == cfg.grid_rows() && grid.steps() == cfg.horizon,
                "grid shape does not match the U-VAE config");
  const int nt = cfg.n_t();
  std::vector<Mat> out;
  out.reserve(grid.maps.size());
  for (const Mat& m : grid.maps) {
    Mat p(cfg.tokens(), cfg.patch_size());
    for (int i = 0; i < cfg.n_f(); ++i) {
      for (int j = 0; j < nt; ++j) {
        const int n = i * nt + j;
        for (int a = 0; a < cfg.patch_f; ++a) {
          for (int b = 0; b < cfg.patch_t; ++b) {
            p(n, a * cfg.patch_t + b) = m(i * cfg.patch_f + a, j * cfg.patch_t + b);
          }
        }
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

signal::WaveletGrid unpatchify(const std::vector<Mat>& patches, const UVaeConfig& cfg) {
  signal::WaveletGrid grid;
  grid.row_scales = signal::row_scales(cfg.level);
  const int nt = cfg.n_t();
  for (const Mat& p : patches) {
    require_shape(p.rows() == cfg.tokens() && p.cols() == cfg.patch_size(),
                  "patch matrix shape");
    Mat m(cfg.grid_rows(), cfg.horizon);
    for (int n = 0; n < cfg.tokens(); ++n) {
      const int i = n / nt, j = n % nt;
      for (int a = 0; a < cfg.patch_f; ++a) {
        for (int b = 0; b < cfg.patch_t; ++b) {
          m(i * cfg.patch_f + a, j * cfg.patch_t + b) = p(n, a * cfg.patch_t + b);
        }
      }
    }
    grid.maps.push_back(std::move(m));
  }
  return grid;
}

namespace {

// frequency rows use (cos, sin) ordering, time rows (sin, cos), so (I,J) and
// (J,I) land on different offsets
Mat freq_table(const UVaeConfig& cfg) {
  Mat t = nn::sinusoidal_table(cfg.n_f(), cfg.token_width());
  for (int c = 0; c + 1 < t.cols(); c += 2) t.col(c).swap(t.col(c + 1));
  return t;
}

Mat time_table(const UVaeConfig& cfg) { return nn::sinusoidal_table(cfg.n_t(), cfg.token_width()); }

}  // namespace

Mat position_table(const UVaeConfig& cfg) {
  const Mat f = freq_table(cfg);
  const Mat t = time_table(cfg);
  Mat out(cfg.tokens(), cfg.token_width());
  for (int n = 0; n < cfg.tokens(); ++n) out.row(n) = f.row(n / cfg.n_t()) + t.row(n % cfg.n_t());
  return out;
}

Mat to_latent_grid(const Mat& z, const UVaeConfig& cfg) {
  require_shape(z.size() == cfg.width, "latent vector length");
  Mat g(cfg.tokens(), cfg.token_width());
  std::copy(z.data(), z.data() + z.size(), g.data());
  return g;
}

Mat from_latent_grid(const Mat& grid) {
  Mat z(1, grid.size());
  std::copy(grid.data(), grid.data() + grid.size(), z.data());
  return z;
}

double kl_divergence(const Mat& mu, const Mat& log_var) {
  require_shape(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(), "kl shapes");
  return 0.5 * (mu.array().square() + log_var.array().exp() - 1.0 - log_var.array()).sum();
}

std::unique_ptr<Model> Model::create(const UVaeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::unique_ptr<Model> m(new Model());
  m->cfg_ = cfg;
  auto& s = m->params_;
  nn::Rng rng = nn::make_rng(seed, 0x7561);
  const int d = cfg.width;
  const auto sched = cfg.channel_schedule();
  const double qstd = 1.0 / std::sqrt(static_cast<double>(d));

  m->shift_ = &s.add("norm.shift", Mat::Zero(cfg.channels, cfg.grid_rows()), false);
  m->scale_ = &s.add("norm.scale", Mat::Ones(cfg.channels, cfg.grid_rows()), false);
  m->patch_proj_ = nn::Linear::create(s, "patch.proj", cfg.patch_size(), cfg.token_width(), rng);
  if (cfg.learned_positions) {
    m->pe_freq_ = &s.add("patch.pe_freq", freq_table(cfg));
    m->pe_time_ = &s.add("patch.pe_time", time_table(cfg));
  } else {
    m->fixed_positions_ = position_table(cfg);
  }
  for (int l = 1; l <= cfg.layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    Mat q = nn::randn(rng, sched[l], d, qstd);
    nn::round_to_float(q);
    m->queries_.push_back(&s.add(p + ".query", std::move(q)));
    m->enc_.push_back(m->make_block(p, cfg.encoder_heads[l - 1], rng));
  }
  m->mu_head_ = nn::Linear::create(s, "enc.mu", d, d, rng);
  m->logvar_head_ = nn::Linear::create(s, "enc.log_var", d, d, rng);
  m->lin_in_ = nn::Linear::create(s, "dec.in", d, sched[cfg.layers] * d, rng);
  m->up_slots_.resize(cfg.layers);
  m->dec_.resize(cfg.layers);
  for (int l = cfg.layers; l >= 1; --l) {
    const std::string p = "dec." + std::to_string(l);
    Mat slot = nn::randn(rng, sched[l - 1], d, qstd);
    nn::round_to_float(slot);
    m->up_slots_[l - 1] = &s.add(p + ".slot", std::move(slot));
    m->dec_[l - 1] = m->make_block(p, cfg.decoder_heads[cfg.layers - l], rng);
  }
  m->lin_out_ = nn::Linear::create(s, "dec.out", d, cfg.grid_rows() * cfg.horizon, rng);
  return m;
}

Mat Model::flatten_patches(const signal::WaveletGrid& grid, const UVaeConfig& cfg) {
  auto patches = patchify_raw(grid, cfg);
  Mat out(static_cast<Eigen::Index>(patches.size()), cfg.tokens() * cfg.patch_size());
  for (std::size_t c = 0; c < patches.size(); ++c) {
    std::copy(patches[c].data(), patches[c].data() + patches[c].size(),
              out.row(static_cast<Eigen::Index>(c)).data());
  }
  return out;
}

signal::WaveletGrid Model::to_grid(const Mat& flat) const {
  require_shape(flat.cols() == cfg_.tokens() * cfg_.patch_size(), "flat patch width");
  std::vector<Mat> patches;
  for (Eigen::Index c = 0; c < flat.rows(); ++c) {
    Mat p(cfg_.tokens(), cfg_.patch_size());
    std::copy(flat.row(c).data(), flat.row(c).data() + flat.cols(), p.data());
    patches.push_back(std::move(p));
  }
  return unpatchify(patches, cfg_);
}

void Model::fit_normalizer(const std::vector<signal::WaveletGrid>& data) {
  if (data.empty()) throw Error(ErrorCode::MissingData, "cannot fit normalizer on no data");
  Mat sum = Mat::Zero(cfg_.channels, cfg_.grid_rows());
  Mat sq = sum;
  double count = 0;
  for (const auto& grid : data) {
    require_shape(grid.channels() == cfg_.channels && grid.rows() == cfg_.grid_rows(),
                  "normalizer grid shape");
    for (int c = 0; c < cfg_.channels; ++c) {
      sum.row(c) += grid.maps[c].rowwise().sum().transpose();
      sq.row(c) += grid.maps[c].array().square().matrix().rowwise().sum().transpose();
    }
    count += grid.steps();
  }
  Mat mean = sum / count;
  Mat var = (sq / count).array() - mean.array().square();
  Mat sd = var.cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (!(sd.data()[i] > 1e-8)) sd.data()[i] = 1.0;
  }
  nn::round_to_float(mean);
  nn::round_to_float(sd);
  shift_->value = mean;
  scale_->value = sd;
}

Mat Model::expand_rows(const Mat& per_row) const {
  Mat grid_like(cfg_.grid_rows(), cfg_.horizon);
  signal::WaveletGrid tmp;
  for (int c = 0; c < cfg_.channels; ++c) {
    for (int r = 0; r < cfg_.grid_rows(); ++r) grid_like.row(r).setConstant(per_row(c, r));
    tmp.maps.push_back(grid_like);
  }
  return flatten_patches(tmp, cfg_);
}

ag::Var Model::embed(ag::Graph& g, const signal::WaveletGrid& grid) const {
  require_shape(grid.channels() == cfg_.channels, "grid channel count");
  signal::WaveletGrid standardized = grid;
  for (int c = 0; c < cfg_.channels; ++c) {
    require_shape(grid.maps[c].rows() == cfg_.grid_rows(), "grid row count");
    for (int r = 0; r < cfg_.grid_rows(); ++r) {
      standardized.maps[c].row(r) =
          (grid.maps[c].row(r).array() - shift_->value(c, r)) / scale_->value(c, r);
    }
  }
  auto patches = patchify_raw(standardized, cfg_);
  const int n = cfg_.tokens();
  Mat stacked(cfg_.channels * n, cfg_.patch_size());
  for (int c = 0; c < cfg_.channels; ++c) stacked.middleRows(c * n, n) = patches[c];
  ag::Var tok = patch_proj_(g, g.constant(std::move(stacked)));
  ag::Var pos;
  if (pe_freq_ != nullptr) {
    std::vector<int> fi, ti;
    for (int k = 0; k < n; ++k) {
      fi.push_back(k / cfg_.n_t());
      ti.push_back(k % cfg_.n_t());
    }
    ag::Var one = ag::add(ag::gather_rows(g.param(*pe_freq_), fi),
                          ag::gather_rows(g.param(*pe_time_), ti));
    pos = ag::concat_rows(std::vector<ag::Var>(cfg_.channels, one));
  } else {
    Mat tiled(cfg_.channels * n, cfg_.token_width());
    for (int c = 0; c < cfg_.channels; ++c) tiled.middleRows(c * n, n) = fixed_positions_;
    pos = g.constant(std::move(tiled));
  }
  return ag::reshape(ag::add(tok, pos), cfg_.channels, cfg_.width);
}

Model::Block Model::make_block(const std::string& prefix, int heads, nn::Rng& rng) {
  Block b;
  const int d = cfg_.width;
  b.attn = nn::MultiHeadAttention::create(params_, prefix + ".attn", d, heads, rng);
  b.ln = nn::LayerNorm::create(params_, prefix + ".ln", d);
  if (cfg_.ffn_mult > 0) {
    b.ff1 = nn::Linear::create(params_, prefix + ".ff1", d, cfg_.ffn_mult * d, rng);
    b.ff2 = nn::Linear::create(params_, prefix + ".ff2", cfg_.ffn_mult * d, d, rng);
    b.ff_ln = nn::LayerNorm::create(params_, prefix + ".ff_ln", d);
  }
  return b;
}

ag::Var Model::lqa(ag::Graph& g, const Block& b, ag::Var queries, ag::Var keys,
                   std::vector<Mat>* attention) const {
  nn::MultiHeadAttention::Options opt;
  opt.weights_out = attention;
  ag::Var out = b.attn(g, queries, keys, opt);
  if (cfg_.query_residual) out = ag::add(out, queries);
  out = b.ln(g, out);
  if (cfg_.ffn_mult > 0) out = b.ff_ln(g, ag::add(out, b.ff2(g, ag::gelu(b.ff1(g, out)))));
  return out;
}

ag::Var Model::encoder_layer(ag::Graph& g, int layer, ag::Var h,
                             std::vector<Mat>* attention) const {
  if (layer < 1 || layer > cfg_.layers) throw Error(ErrorCode::InvalidConfig, "encoder layer index");
  require_shape(h.cols() == cfg_.width, "encoder input width");
  return lqa(g, enc_[layer - 1], g.param(*queries_[layer - 1]), h, attention);
}

Model::Encoded Model::encode(ag::Graph& g, ag::Var tokens, const Mat* eps,
                             std::vector<Mat>* attention) const {
  require_shape(tokens.rows() == cfg_.channels && tokens.cols() == cfg_.width,
                "encoder expects C x d tokens");
  Encoded e;
  ag::Var h = tokens;
  e.row_counts.push_back(static_cast<int>(h.rows()));
  for (int l = 1; l <= cfg_.layers; ++l) {
    h = encoder_layer(g, l, h, attention);
    e.row_counts.push_back(static_cast<int>(h.rows()));
  }
  e.mu = mu_head_(g, h);
  e.log_var = logvar_head_(g, h);
  if (eps != nullptr) {
    require_shape(eps->rows() == 1 && eps->cols() == cfg_.width, "noise shape");
    ag::Var sigma = ag::exp(ag::scale(e.log_var, 0.5));
    e.z = ag::add(e.mu, ag::mul(sigma, g.constant(*eps)));
  } else {
    e.z = e.mu;
  }
  return e;
}

ag::Var Model::decode(ag::Graph& g, ag::Var z, std::vector<int>* row_counts,
                      std::vector<Mat>* attention) const {
  require_shape(z.rows() == 1 && z.cols() == cfg_.width, "decoder expects a 1 x d latent");
  if (queries_.size() != static_cast<std::size_t>(cfg_.layers)) {
    throw Error(ErrorCode::MissingSharedQueries, "encoder query tables are not available");
  }
  const auto sched = cfg_.channel_schedule();
  ag::Var u = ag::reshape(lin_in_(g, z), sched[cfg_.layers], cfg_.width);
  if (row_counts != nullptr) row_counts->push_back(static_cast<int>(u.rows()));
  for (int l = cfg_.layers; l >= 1; --l) {
    ag::Var q = ag::add(ag::repeat_rows(g.param(*queries_[l - 1]), cfg_.reduction),
                        g.param(*up_slots_[l - 1]));
    u = lqa(g, dec_[l - 1], q, u, attention);
    if (row_counts != nullptr) row_counts->push_back(static_cast<int>(u.rows()));
  }
  ag::Var out = lin_out_(g, u);
  return ag::add(ag::mul(out, g.constant(expand_rows(scale_->value))),
                 g.constant(expand_rows(shift_->value)));
}

LossTerms Model::elbo_terms(ag::Var target, ag::Var recon, ag::Var mu, ag::Var log_var,
                            const UVaeConfig& cfg) {
  require_shape(target.rows() == recon.rows() && target.cols() == recon.cols(),
                "reconstruction shape");
  require_shape(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(), "posterior shape");
  LossTerms t;
  ag::Var diff = ag::sub(recon, target);
  t.recon = ag::mean(cfg.recon == ReconLoss::L1 ? ag::abs(diff) : ag::square(diff));
  ag::Var inner = ag::sub(ag::add(ag::square(mu), ag::exp(log_var)), ag::add_scalar(log_var, 1.0));
  t.kl = ag::scale(ag::sum(inner), 0.5);
  t.total = cfg.kl_weight > 0 ? ag::add(t.recon, ag::scale(t.kl, cfg.kl_weight)) : t.recon;
  return t;
}

LossTerms Model::elbo(ag::Graph& g, const signal::WaveletGrid& grid, const Mat* eps) const {
  Encoded e = encode(g, embed(g, grid), eps);
  ag::Var recon = decode(g, e.z);
  return elbo_terms(g.constant(flatten_patches(grid, cfg_)), recon, e.mu, e.log_var, cfg_);
}

LatentSample Model::encode(const signal::WaveletGrid& grid, nn::Rng* noise) const {
  ag::Graph g;
  Mat eps;
  if (noise != nullptr) eps = nn::randn(*noise, 1, cfg_.width);
  Encoded e = encode(g, embed(g, grid), noise != nullptr ? &eps : nullptr);
  return LatentSample{e.mu.value(), e.log_var.value(), e.z.value()};
}

signal::WaveletGrid Model::decode(const Mat& z) const {
  ag::Graph g;
  Mat row = z.size() == cfg_.width ? from_latent_grid(z) : z;
  return to_grid(decode(g, g.constant(std::move(row))).value());
}

signal::WaveletGrid Model::reconstruct(const signal::WaveletGrid& grid) const {
  return decode(encode(grid).mu);
}

}  // namespace tfcodit::uvae
