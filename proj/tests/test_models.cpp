#include "doctest.h"

#include "tfcodit/diffusion.hpp"
#include "tfcodit/errors.hpp"
#include "tfcodit/sampler.hpp"
#include "tfcodit/uvae.hpp"

#include <cmath>

using namespace tfcodit;

namespace {

signal::WaveletGrid random_grid(nn::Rng& rng, int T, int J) {
  TimeSeries s;
  s.values = nn::randn(rng, kNumChannels, T);
  s.normalized = true;
  signal::DecompositionConfig c;
  c.level = J;
  return signal::dwt_decompose(s, c);
}

uvae::UVaeConfig toy_vae() {
  uvae::UVaeConfig c;
  c.width = 16;
  c.encoder_heads = {2, 2, 2};
  c.decoder_heads = {2, 2, 2};
  c.horizon = 8;
  c.level = 1;
  c.patch_f = 2;
  c.patch_t = 2;
  return c;
}

diffusion::DenoiserConfig toy_denoiser() {
  diffusion::DenoiserConfig c;
  c.layers = 2;
  c.width = 16;
  c.heads = 2;
  c.max_text = 8;
  c.n_f = 2;
  c.n_t = 2;
  c.latent_dim = 3;
  c.time_width = 8;
  c.vocab_size = 20;
  c.ffn_mult = 2;
  return c;
}

// text -> earlier-or-same text; latent -> everything
bool allowed(int i, int j, int n) { return i >= n || j <= i; }

}  // namespace

TEST_SUITE("uvae") {

TEST_CASE("desk-scale geometry") {
  uvae::UVaeConfig c;
  c.validate();
  CHECK(c.n_f() == 2);
  CHECK(c.n_t() == 8);
  CHECK(c.tokens() == 16);
  CHECK(c.token_width() == 4);
  CHECK(c.width == 64);
  CHECK(c.channel_schedule() == std::vector<int>{8, 4, 2, 1});
}

TEST_CASE("invalid shapes are rejected") {
  uvae::UVaeConfig c;
  c.width = 60;  // 16 does not divide 60
  CHECK_THROWS_AS(c.validate(), Error);
  c = uvae::UVaeConfig{};
  c.patch_t = 3;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("patchify round trip and locality") {
  nn::Rng rng = nn::make_rng(1);
  uvae::UVaeConfig c;
  c.validate();
  auto grid = random_grid(rng, 32, 3);
  const auto p = uvae::patchify_raw(grid, c);
  REQUIRE(p.size() == 8);
  CHECK(p[0].rows() == c.tokens());
  CHECK(p[0].cols() == c.patch_size());
  const auto back = uvae::unpatchify(p, c);
  for (int ch = 0; ch < 8; ++ch) CHECK(back.maps[ch] == grid.maps[ch]);

  // swap time patches J=0 and J=1 in frequency band I=0 of channel 3
  auto swapped = grid;
  const Mat a = grid.maps[3].block(0, 0, 2, 4);
  swapped.maps[3].block(0, 0, 2, 4) = grid.maps[3].block(0, 4, 2, 4);
  swapped.maps[3].block(0, 4, 2, 4) = a;
  const auto q = uvae::patchify_raw(swapped, c);
  for (int ch = 0; ch < 8; ++ch) {
    for (int n = 0; n < c.tokens(); ++n) {
      const int src = ch == 3 && n == 0 ? 1 : ch == 3 && n == 1 ? 0 : n;
      CHECK(q[ch].row(n) == p[ch].row(src));
    }
  }
}

TEST_CASE("encoder channel schedule and deterministic mean") {
  auto m = uvae::Model::create(uvae::UVaeConfig{}, 3);
  nn::Rng rng = nn::make_rng(2);
  const auto grid = random_grid(rng, 32, 3);
  ag::Graph g;
  auto enc = m->encode(g, m->embed(g, grid));
  CHECK(enc.row_counts == std::vector<int>{8, 4, 2, 1});
  CHECK(enc.z.value() == enc.mu.value());
  std::vector<int> dec_rows;
  m->decode(g, enc.z, &dec_rows);
  CHECK(dec_rows == std::vector<int>{1, 2, 4, 8});
}

TEST_CASE("decode shape and attention rows are convex") {
  auto m = uvae::Model::create(uvae::UVaeConfig{}, 4);
  nn::Rng rng = nn::make_rng(3);
  const auto out = m->decode(nn::randn(rng, 1, 64));
  CHECK(out.channels() == 8);
  CHECK(out.rows() == 4);
  CHECK(out.steps() == 32);

  ag::Graph g;
  std::vector<Mat> att;
  m->encode(g, m->embed(g, random_grid(rng, 32, 3)), nullptr, &att);
  REQUIRE(!att.empty());
  for (const auto& a : att) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) CHECK(std::abs(a.row(r).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("decoder reads the encoder query table live") {
  auto m = uvae::Model::create(uvae::UVaeConfig{}, 5);
  nn::Rng rng = nn::make_rng(4);
  const Mat z = nn::randn(rng, 1, 64);
  const auto before = m->decode(z);
  m->query(2).value.array() += 0.5;
  const auto after = m->decode(z);
  double diff = 0;
  for (int ch = 0; ch < 8; ++ch) diff += (before.maps[ch] - after.maps[ch]).cwiseAbs().sum();
  CHECK(diff > 1e-6);
}

TEST_CASE("KL and ELBO hand values") {
  CHECK(uvae::kl_divergence(Mat::Zero(1, 5), Mat::Zero(1, 5)) == 0.0);
  CHECK(uvae::kl_divergence(Mat::Ones(1, 4), Mat::Zero(1, 4)) == doctest::Approx(0.5 * 4));
  nn::Rng rng = nn::make_rng(5);
  for (int i = 0; i < 20; ++i) {
    CHECK(uvae::kl_divergence(nn::randn(rng, 1, 6, 2.0), nn::randn(rng, 1, 6, 2.0)) >= 0.0);
  }
  ag::Graph g;
  const Mat w = nn::randn(rng, 8, 12);
  const auto t = uvae::Model::elbo_terms(g.constant(w), g.constant(w), g.constant(Mat::Zero(1, 4)),
                                         g.constant(Mat::Zero(1, 4)), uvae::UVaeConfig{});
  CHECK(t.total.value()(0, 0) == 0.0);
  CHECK(t.kl.value()(0, 0) == 0.0);
}

TEST_CASE("latent grid reshape is bit-identical") {
  uvae::UVaeConfig c;
  nn::Rng rng = nn::make_rng(6);
  const Mat z = nn::randn(rng, 1, 64);
  const Mat grid = uvae::to_latent_grid(z, c);
  CHECK(grid.rows() == 16);
  CHECK(grid.cols() == 4);
  CHECK(uvae::from_latent_grid(grid) == z);
}

TEST_CASE("toy config builds and reconstructs with the right shape") {
  auto c = toy_vae();
  c.validate();
  auto m = uvae::Model::create(c, 7);
  nn::Rng rng = nn::make_rng(7);
  const auto rec = m->reconstruct(random_grid(rng, 8, 1));
  CHECK(rec.rows() == 2);
  CHECK(rec.steps() == 8);
}

}  // TEST_SUITE uvae

TEST_SUITE("diffusion") {

TEST_CASE("forward noise endpoints") {
  diffusion::NoiseSchedule s;
  nn::Rng rng = nn::make_rng(1);
  const Mat z0 = nn::randn(rng, 4, 3), eps = nn::randn(rng, 4, 3);
  CHECK(diffusion::forward_noise(z0, 0, eps, s) == z0);
  CHECK(std::sqrt(s.alpha_bar(s.steps())) < 0.1);
  double prod = 1;
  for (int t = 1; t <= 1000; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
  CHECK(s.alpha_bar(1000) == doctest::Approx(prod).epsilon(1e-9));
  diffusion::ScheduleConfig cos;
  cos.kind = diffusion::ScheduleKind::Cosine;
  diffusion::NoiseSchedule c(cos);
  CHECK(std::sqrt(c.alpha_bar(c.steps())) < 0.1);
  for (int t = 1; t <= c.steps(); ++t) CHECK(c.alpha_bar(t) < c.alpha_bar(t - 1));
}

TEST_CASE("mask worked example and edge cases") {
  const Mat m = diffusion::build_mask(2, 2);
  const int expect[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}, {1, 1, 1, 1}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK((m(i, j) == 0.0) == (expect[i][j] == 1));
  CHECK(diffusion::build_mask(0, 5) == Mat::Zero(5, 5));
  const Mat last = diffusion::build_mask(6, 1);
  CHECK(last.row(6) == Mat::Zero(1, 7));
}

TEST_CASE("mask matches the reachability predicate for N+M <= 12") {
  for (int n = 0; n <= 12; ++n) {
    for (int mm = 0; n + mm <= 12; ++mm) {
      const Mat m = diffusion::build_mask(n, mm);
      for (int i = 0; i < n + mm; ++i)
        for (int j = 0; j < n + mm; ++j) REQUIRE((m(i, j) == 0.0) == allowed(i, j, n));
    }
  }
}

TEST_CASE("output shape, live conditioning, causality") {
  auto m = diffusion::Denoiser::create(toy_denoiser(), 3);
  nn::Rng rng = nn::make_rng(2);
  const Mat z = nn::randn(rng, 4, 3);
  const std::vector<int> a{4, 5, 6, 7}, b{7, 6, 5, 4};
  const Mat pa = m->predict(z, 10, a);
  CHECK(pa.rows() == 4);
  CHECK(pa.cols() == 3);
  CHECK((pa - m->predict(z, 10, b)).cwiseAbs().maxCoeff() > 1e-9);

  for (int k = 0; k < 4; ++k) {
    auto c = a;
    c[static_cast<std::size_t>(k)] = 12;
    std::vector<Mat> ha, hc;
    ag::Graph g1, g2;
    m->forward(g1, g1.constant(z), 10, a, &ha);
    m->forward(g2, g2.constant(z), 10, c, &hc);
    for (std::size_t l = 0; l < ha.size(); ++l) {
      for (int i = 0; i < k; ++i) CHECK(ha[l].row(i) == hc[l].row(i));
      CHECK(ha[l].row(k) != hc[l].row(k));
    }
  }
}

TEST_CASE("timestep enters only through the modulation") {
  auto m = diffusion::Denoiser::create(toy_denoiser(), 4);
  nn::Rng rng = nn::make_rng(3);
  const Mat z = nn::randn(rng, 4, 3);
  CHECK((m->predict(z, 1, {4, 5}) - m->predict(z, 1000, {4, 5})).cwiseAbs().maxCoeff() > 1e-9);
  m->zero_adaln();
  CHECK(m->predict(z, 1, {4, 5}) == m->predict(z, 1000, {4, 5}));
}

TEST_CASE("bad inputs") {
  auto m = diffusion::Denoiser::create(toy_denoiser(), 5);
  CHECK_THROWS_AS(m->predict(Mat::Zero(3, 3), 1, {4}), Error);
  CHECK_THROWS_AS(m->predict(Mat::Zero(4, 3), 1, std::vector<int>(9, 4)), Error);
  try {
    m->predict(Mat::Zero(4, 3), 1, {99});
    FAIL("expected UnknownToken");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownToken);
  }
}

TEST_CASE("loss with zero prediction is the noise second moment") {
  // head weights zeroed -> eps_hat = 0 -> loss = mean eps^2
  auto m = diffusion::Denoiser::create(toy_denoiser(), 6);
  m->params().get("head.out.weight").value.setZero();
  m->params().get("head.out.bias").value.setZero();
  diffusion::NoiseSchedule s;
  nn::Rng rng = nn::make_rng(4);
  std::vector<diffusion::Example> batch(400, diffusion::Example{nn::randn(rng, 4, 3), {4, 5}});
  nn::Rng lrng = nn::make_rng(5);
  const auto r = diffusion::diffusion_loss(*m, batch, s, lrng, false);
  CHECK(r.loss == doctest::Approx(1.0).epsilon(0.05));
}

}  // TEST_SUITE diffusion

TEST_SUITE("sampler") {

TEST_CASE("timestep grid") {
  const auto ts = sampler::timesteps(1000, 50);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 0);
  CHECK(ts.size() == 51);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
  CHECK(sampler::timesteps(10, 10) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
}

TEST_CASE("seeded sampling is bit-identical") {
  auto m = diffusion::Denoiser::create(toy_denoiser(), 7);
  diffusion::NoiseSchedule s;
  sampler::SamplerConfig cfg;
  cfg.num_steps = 10;
  for (auto method : {sampler::Method::AncestralDdpm, sampler::Method::FirstOrderSolver}) {
    cfg.method = method;
    const Mat a = sampler::sample_latent(m.get(), {4, 5}, s, cfg, 3);
    const Mat b = sampler::sample_latent(m.get(), {4, 5}, s, cfg, 3);
    CHECK(a == b);
    CHECK(a != sampler::sample_latent(m.get(), {4, 5}, s, cfg, 4));
  }
}

TEST_CASE("zero-noise model reverse matches the analytic variance") {
  diffusion::ScheduleConfig sc;
  sc.steps = 100;
  sc.beta_end = 0.2;
  diffusion::NoiseSchedule s(sc);
  // independent recursion on the posterior q(z_s | z_t, x0 = z_t / sqrt(abar_t))
  double var = 1.0;
  for (int t = sc.steps; t >= 1; --t) {
    const double abt = s.alpha_bar(t), abs = s.alpha_bar(t - 1), bt = s.beta(t);
    const double k = std::sqrt(abs) * bt / ((1 - abt) * std::sqrt(abt)) +
                     std::sqrt(1 - bt) * (1 - abs) / (1 - abt);
    var = k * k * var + (t > 1 ? (1 - abs) / (1 - abt) * bt : 0.0);
  }
  sampler::SamplerConfig cfg;
  cfg.num_steps = sc.steps;
  nn::Rng rng = nn::make_rng(11);
  const int draws = 20000;
  const Mat z = sampler::sample_latent([](const Mat& x, int) { return Mat::Zero(x.rows(), x.cols()); },
                                       1, draws, s, cfg, rng);
  const double mean = z.mean();
  const double v = (z.array() - mean).square().sum() / (draws - 1);
  CHECK(std::abs(mean) < 5 * std::sqrt(var / draws));
  CHECK(v == doctest::Approx(var).epsilon(0.05));
}

TEST_CASE("pipeline shapes and the encode-decode path") {
  for (int L : {8, 32}) {
    uvae::UVaeConfig vc;
    vc.horizon = L;
    vc.level = 3;
    vc.patch_t = L == 8 ? 2 : 4;
    vc.validate();
    auto vae = uvae::Model::create(vc, 1);
    auto dc = toy_denoiser();
    dc.n_f = vc.n_f();
    dc.n_t = vc.n_t();
    dc.latent_dim = vc.token_width();
    auto den = diffusion::Denoiser::create(dc, 2);
    diffusion::NoiseSchedule s;
    sampler::Pipeline p;
    p.vae = vae.get();
    p.denoiser = den.get();
    p.schedule = &s;
    p.check();

    preprocess::NormalizationState anchors;
    anchors.anchor_date = parse_date("2024-01-02");
    anchors.anchor_open = 100;
    anchors.anchor_open_interest = 1000;
    sampler::SamplerConfig cfg;
    cfg.num_steps = 5;
    const auto g = sampler::generate(p, den->null_condition(), cfg, anchors, 0);
    CHECK(g.normalized.channels() == 8);
    CHECK(g.normalized.steps() == L);
    CHECK(g.grid.rows() == 4);
    CHECK(g.records.size() == static_cast<std::size_t>(L));

    nn::Rng rng = nn::make_rng(3);
    const auto grid = random_grid(rng, L, 3);
    const auto mu = vae->encode(grid).mu;
    const auto dec = sampler::decode_latent(p, mu, anchors);
    const auto rec = vae->reconstruct(grid);
    for (int ch = 0; ch < 8; ++ch) CHECK((dec.grid.maps[ch] - rec.maps[ch]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mismatched models are rejected") {
  auto vae = uvae::Model::create(uvae::UVaeConfig{}, 1);
  auto den = diffusion::Denoiser::create(toy_denoiser(), 2);
  diffusion::NoiseSchedule s;
  sampler::Pipeline p;
  p.vae = vae.get();
  p.denoiser = den.get();
  p.schedule = &s;
  try {
    p.check();
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

}  // TEST_SUITE sampler
