#include "doctest.h"

#include "support/gradcheck.hpp"
#include "tfcodit/errors.hpp"
#include "tfcodit/nn.hpp"

#include <cmath>
#include <limits>

using namespace tfcodit;
using tfcodit::testing::grad_check;

namespace {

ag::ParamStore store_with(std::initializer_list<std::pair<const char*, Mat>> items) {
  ag::ParamStore s;
  for (const auto& [name, m] : items) s.add(name, m);
  return s;
}

Mat rnd(int r, int c, std::uint64_t seed) {
  auto rng = nn::make_rng(seed);
  return nn::randn(rng, r, c);
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("every primitive matches central differences") {
  auto s = store_with({{"a", rnd(3, 4, 1)}, {"b", rnd(4, 5, 2)}, {"c", rnd(3, 5, 3)},
                       {"r", rnd(1, 5, 4)}, {"t", rnd(6, 4, 5)}});
  Mat angles = rnd(3, 2, 6);
  Mat mask = Mat::Zero(3, 5);
  mask(0, 4) = -std::numeric_limits<double>::infinity();
  const std::vector<int> ids{0, 5, 2, 0};

  auto loss = [&](ag::Graph& g) {
    auto a = g.param(s.get("a"));
    auto b = g.param(s.get("b"));
    auto c = g.param(s.get("c"));
    auto r = g.param(s.get("r"));
    auto t = g.param(s.get("t"));
    auto ab = ag::matmul(a, b);                                   // 3x5
    auto x = ag::add(ab, ag::mul(c, ag::gelu(c)));                // 3x5
    x = ag::mul_row(ag::add_row(x, r), ag::silu(r));              // 3x5
    auto ln = ag::layer_norm(x);                                  // 3x5
    auto sm = ag::softmax_rows(ag::scale(ln, 0.7), &mask);        // 3x5
    auto nt = ag::matmul_nt(a, ag::gather_rows(t, ids));          // 3x4
    auto rot = ag::rotate_pairs(nt, angles);                      // 3x4
    auto cat = ag::concat_cols({sm, rot});                        // 3x9
    auto stacked = ag::concat_rows({cat, ag::repeat_rows(ag::slice_rows(cat, 1, 1), 2)});
    auto rs = ag::reshape(ag::transpose(stacked), 5, 9);
    auto e = ag::exp(ag::scale(ag::slice_cols(rs, 2, 4), 0.3));
    auto total = ag::add(ag::sum(ag::square(rs)), ag::mean(ag::abs(ag::add_scalar(e, -1.1))));
    return total;
  };
  auto res = grad_check(s, loss, 1e-4);
  CHECK(res.checked == s.num_scalars());
  CHECK(res.passed == res.checked);
  MESSAGE("worst relative error " << res.worst);
}

TEST_CASE("softmax rows sum to one and respect the mask") {
  ag::Graph g;
  Mat mask = Mat::Zero(2, 3);
  mask(1, 2) = -std::numeric_limits<double>::infinity();
  auto p = ag::softmax_rows(g.constant(rnd(2, 3, 9)), &mask);
  CHECK(p.value().row(0).sum() == doctest::Approx(1.0));
  CHECK(p.value().row(1).sum() == doctest::Approx(1.0));
  CHECK(p.value()(1, 2) == 0.0);
}

TEST_CASE("frozen parameters receive no gradient") {
  ag::ParamStore s;
  auto& w = s.add("w", rnd(2, 2, 1), false);
  auto& v = s.add("v", rnd(2, 2, 2));
  ag::Graph g;
  auto l = ag::sum(ag::matmul(g.param(w), g.param(v)));
  g.backward(l);
  CHECK(w.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(v.grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("shape errors throw") {
  ag::Graph g;
  auto a = g.constant(Mat::Zero(2, 3));
  auto b = g.constant(Mat::Zero(2, 3));
  CHECK_THROWS_AS(ag::matmul(a, b), Error);
  CHECK_THROWS_AS(ag::reshape(a, 4, 2), Error);
  CHECK_THROWS_AS(ag::gather_rows(a, {5}), Error);
}

TEST_CASE("multi-head attention gradients and convex attention rows") {
  ag::ParamStore s;
  auto rng = nn::make_rng(21);
  auto mha = nn::MultiHeadAttention::create(s, "attn", 8, 2, rng);
  s.add("x", rnd(3, 8, 22));
  s.add("y", rnd(5, 8, 23));
  const Mat probe = rnd(3, 8, 24);
  std::vector<Mat> weights;
  auto loss = [&](ag::Graph& g) {
    weights.clear();
    nn::MultiHeadAttention::Options opt;
    opt.weights_out = &weights;
    auto out = mha(g, g.param(s.get("x")), g.param(s.get("y")), opt);
    return ag::sum(ag::mul(ag::gelu(ag::layer_norm(out)), g.constant(probe)));
  };
  auto res = grad_check(s, loss, 1e-4);
  CHECK(res.passed == res.checked);
  REQUIRE(weights.size() == 2);
  for (const auto& w : weights) {
    for (int r = 0; r < w.rows(); ++r) CHECK(w.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

}  // TEST_SUITE
