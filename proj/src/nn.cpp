#include "tfcodit/nn.hpp"

#include "tfcodit/errors.hpp"

#include <cmath>

namespace tfcodit::nn {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over both words
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(mix_seed(seed, stream)); }

Mat randn(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Mat uniform_fan_in(Rng& rng, Eigen::Index rows, Eigen::Index cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void round_to_float(Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

Linear Linear::create(ag::ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      bool with_bias) {
  Linear l;
  Mat w = uniform_fan_in(rng, in, out, in);
  round_to_float(w);
  l.weight = &store.add(name + ".weight", std::move(w));
  if (with_bias) {
    Mat b = uniform_fan_in(rng, 1, out, in);
    round_to_float(b);
    l.bias = &store.add(name + ".bias", std::move(b));
  }
  return l;
}

ag::Var Linear::operator()(ag::Graph& g, ag::Var x) const {
  ag::Var y = ag::matmul(x, g.param(*weight));
  if (bias != nullptr) y = ag::add_row(y, g.param(*bias));
  return y;
}

LayerNorm LayerNorm::create(ag::ParamStore& store, const std::string& name, int width) {
  LayerNorm ln;
  ln.gain = &store.add(name + ".gain", Mat::Ones(1, width));
  ln.offset = &store.add(name + ".offset", Mat::Zero(1, width));
  return ln;
}

ag::Var LayerNorm::operator()(ag::Graph& g, ag::Var x) const {
  return ag::add_row(ag::mul_row(ag::layer_norm(x), g.param(*gain)), g.param(*offset));
}

MultiHeadAttention MultiHeadAttention::create(ag::ParamStore& store, const std::string& name,
                                              int width, int heads, Rng& rng) {
  if (heads < 1 || width % heads != 0) {
    throw Error(ErrorCode::InvalidConfig, name + ": heads " + std::to_string(heads) +
                                              " do not divide width " + std::to_string(width));
  }
  MultiHeadAttention m;
  m.q = Linear::create(store, name + ".q", width, width, rng);
  m.k = Linear::create(store, name + ".k", width, width, rng);
  m.v = Linear::create(store, name + ".v", width, width, rng);
  m.o = Linear::create(store, name + ".o", width, width, rng);
  m.heads = heads;
  return m;
}

ag::Var MultiHeadAttention::operator()(ag::Graph& g, ag::Var queries, ag::Var keys_values,
                                       const Options& opt) const {
  ag::Var q = this->q(g, queries);
  ag::Var k = this->k(g, keys_values);
  ag::Var v = this->v(g, keys_values);
  if (opt.query_angles != nullptr) q = ag::rotate_pairs(q, *opt.query_angles);
  if (opt.key_angles != nullptr) k = ag::rotate_pairs(k, *opt.key_angles);
  const int width = static_cast<int>(q.cols());
  const int hd = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<ag::Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    ag::Var qh = ag::slice_cols(q, h * hd, hd);
    ag::Var kh = ag::slice_cols(k, h * hd, hd);
    ag::Var vh = ag::slice_cols(v, h * hd, hd);
    ag::Var scores = ag::scale(ag::matmul_nt(qh, kh), inv_sqrt);
    ag::Var probs = ag::softmax_rows(scores, opt.mask);
    if (opt.weights_out != nullptr) opt.weights_out->push_back(probs.value());
    outs.push_back(ag::matmul(probs, vh));
  }
  ag::Var merged = heads == 1 ? outs.front() : ag::concat_cols(outs);
  return this->o(g, merged);
}

Mat sinusoidal_table(int positions, int width, double base) {
  Mat t(positions, width);
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < width; ++i) {
      const int pair = i / 2;
      const double freq = std::pow(base, -2.0 * pair / std::max(width, 1));
      t(p, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  }
  return t;
}

Mat timestep_embedding(double t, int width, double base) {
  Mat e(1, width);
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(base, -static_cast<double>(i) / std::max(half, 1));
    e(0, i) = std::cos(t * freq);
    e(0, half + i) = std::sin(t * freq);
  }
  if (width % 2 == 1) e(0, width - 1) = 0.0;
  return e;
}

}  // namespace tfcodit::nn
