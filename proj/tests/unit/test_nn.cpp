#include <doctest.h>

#include <cmath>

#include "adenet/error.hpp"
#include "adenet/nn.hpp"
#include "adenet/rng.hpp"

using namespace adenet;
using namespace adenet::nn;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct six-loop cross-correlation; out-of-range taps read zero.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, bool same) {
  const auto xs = x.shape(), ws = w.shape();
  const std::size_t k = ws.h, pad = same ? k / 2 : 0;
  const std::size_t oh = same ? xs.h : xs.h - k + 1, ow = same ? xs.w : xs.w - k + 1;
  Tensor<double> y(xs.n, ws.n, oh, ow);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long r = static_cast<long>(i + u) - static_cast<long>(pad);
                const long c = static_cast<long>(j + v) - static_cast<long>(pad);
                if (r < 0 || c < 0 || r >= static_cast<long>(xs.h) || c >= static_cast<long>(xs.w)) continue;
                acc += w.at(co, ci, u, v) * x.at(n, ci, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
              }
          y.at(n, co, i, j) = acc;
        }
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv forward matches direct summation") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 5 + rng.below(6), w = 5 + rng.below(6), ci = 1 + rng.below(3), co = 1 + rng.below(4);
    const auto x = random_tensor({2, ci, h, w}, rng);
    const auto b = random_tensor({1, co, 1, 1}, rng);
    const auto w3 = random_tensor({co, ci, 3, 3}, rng);
    CHECK(max_abs_diff(conv2d_forward(x, w3, b, Padding::kSame).y, naive_conv(x, w3, b, true)) < 1e-12);
    const auto w5 = random_tensor({co, ci, 5, 5}, rng);
    CHECK(max_abs_diff(conv2d_forward(x, w5, b, Padding::kValid).y, naive_conv(x, w5, b, false)) < 1e-12);
  }
}

TEST_CASE("conv rejects mismatched shapes") {
  Tensor<double> x(1, 2, 6, 6), w(3, 1, 3, 3), b(1, 3, 1, 1);
  CHECK_THROWS_AS(conv2d_forward(x, w, b), ShapeError);
  Tensor<double> small(1, 1, 3, 3), w5(1, 1, 5, 5), b1(1, 1, 1, 1);
  CHECK_THROWS_AS(conv2d_forward(small, w5, b1, Padding::kValid), ShapeError);
}

TEST_CASE("pooling matches window arithmetic") {
  Rng rng(6);
  const auto x = random_tensor({2, 3, 7, 6}, rng);
  const auto mp = maxpool2_forward(x).y;
  const auto ap = avgpool2_forward(x).y;
  CHECK(mp.shape() == Shape{2, 3, 3, 3});
  CHECK(ap.shape() == Shape{2, 3, 3, 3});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          const double a = x.at(n, c, 2 * i, 2 * j), b = x.at(n, c, 2 * i, 2 * j + 1);
          const double d = x.at(n, c, 2 * i + 1, 2 * j), e = x.at(n, c, 2 * i + 1, 2 * j + 1);
          CHECK(mp.at(n, c, i, j) == std::max({a, b, d, e}));
          CHECK(ap.at(n, c, i, j) == doctest::Approx((a + b + d + e) / 4));
        }
}

TEST_CASE("max pool ties route the gradient to the first element") {
  Tensor<double> x(1, 1, 2, 2, 1.0);
  auto f = maxpool2_forward(x);
  const auto g = layer_vjp(f.ctx, Tensor<double>(1, 1, 1, 1, 1.0));
  CHECK(g.dx[0] == 1.0);
  CHECK(g.dx[1] + g.dx[2] + g.dx[3] == 0.0);
}

TEST_CASE("global average pool and dense") {
  Rng rng(7);
  const auto x = random_tensor({2, 4, 3, 5}, rng);
  const auto g = global_avg_pool_forward(x).y;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < 15; ++i) s += x[x.offset(n, c, 0, 0) + i];
      CHECK(g.at(n, c, 0, 0) == doctest::Approx(s / 15));
    }
  const auto in = random_tensor({3, 4, 1, 1}, rng), w = random_tensor({4, 2, 1, 1}, rng), b = random_tensor({1, 2, 1, 1}, rng);
  const auto y = dense_forward(in, w, b).y;
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t k = 0; k < 2; ++k) {
      double s = b[k];
      for (std::size_t d = 0; d < 4; ++d) s += in[n * 4 + d] * w[d * 2 + k];
      CHECK(y.at(n, k, 0, 0) == doctest::Approx(s));
    }
}

TEST_CASE("batch norm train mode normalizes and updates running statistics") {
  Rng rng(8);
  const auto x = random_tensor({4, 2, 3, 3}, rng);
  const std::vector<double> gamma = {1.0, 2.0}, beta = {0.0, -1.0};
  std::vector<double> rm = {0.0, 0.0}, rv = {1.0, 1.0};
  const auto f = batchnorm_forward<double>(x, gamma, beta, rm, rv, Mode::kTrain);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) mean += x[x.offset(n, c, 0, 0) + i];
    mean /= 36;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) var += std::pow(x[x.offset(n, c, 0, 0) + i] - mean, 2);
    var /= 36;
    CHECK(rm[c] == doctest::Approx(0.1 * mean));
    CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * var));
    const double y0 = (x.at(0, c, 0, 0) - mean) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
    CHECK(f.y.at(0, c, 0, 0) == doctest::Approx(y0));
  }
  // Inference mode uses the running statistics and leaves them alone.
  const auto before = rm;
  const auto g = batchnorm_forward<double>(x, gamma, beta, rm, rv, Mode::kInfer);
  CHECK(rm == before);
  CHECK(g.y.at(1, 1, 2, 2) == doctest::Approx((x.at(1, 1, 2, 2) - rm[1]) / std::sqrt(rv[1] + 1e-5) * 2.0 - 1.0));
}

TEST_CASE("batch norm edge cases") {
  std::vector<double> gamma = {1, 1}, beta = {0, 0}, rm = {0, 0}, rv = {1, 1};
  // Zero-variance channel: numerator and variance both vanish.
  Tensor<double> flat(3, 2, 2, 2, 0.5);
  const auto f = batchnorm_forward<double>(flat, gamma, beta, rm, rv, Mode::kTrain);
  for (std::size_t i = 0; i < f.y.size(); ++i) CHECK(f.y[i] == 0.0);

  Rng rng(9);
  const auto x = random_tensor({8, 4, 6, 6}, rng);
  std::vector<double> g4 = {0.5, -2.0, 1.0, 3.0}, b4 = {0.1, 0.0, -0.3, 2.0}, m4(4, 0.0), v4(4, 1.0);
  const auto y = batchnorm_forward<double>(x, g4, b4, m4, v4, Mode::kTrain).y;
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t i = 0; i < 36; ++i) mean += y[y.offset(n, c, 0, 0) + i];
    mean /= 288;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t i = 0; i < 36; ++i) sq += std::pow(y[y.offset(n, c, 0, 0) + i] - mean, 2);
    CHECK(std::abs(mean - b4[c]) <= 1e-5);
    CHECK(std::abs(std::sqrt(sq / 288) - std::abs(g4[c])) <= 1e-4);
  }

  std::vector<double> m0(4, 0.0), v0(4, 1.0), one(4, 1.0), zero(4, 0.0);
  const auto id = batchnorm_forward<double>(x, one, zero, m0, v0, Mode::kInfer, 1e-12).y;
  CHECK(max_abs_diff(id, x) <= 1e-6);

  std::vector<double> three = {1, 1, 1};
  CHECK_THROWS_AS(batchnorm_forward<double>(x, three, b4, m4, v4, Mode::kTrain), ArgumentError);
  CHECK_THROWS_AS(batchnorm_forward<double>(x, g4, b4, m4, v4, Mode::kTrain, 0.0), ArgumentError);
}

TEST_CASE("softmax is stable for large logits") {
  Tensor<double> z(2, 2, 1, 1);
  z[0] = 1000, z[1] = 1001, z[2] = -1e4, z[3] = 0;
  const auto p = softmax(z);
  CHECK(p[0] + p[1] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(p[2] == 0.0);
  CHECK(p.all_finite());
}

TEST_CASE("class-weighted cross-entropy") {
  Tensor<double> z(2, 2, 1, 1);
  z[0] = 0.2, z[1] = -0.4, z[2] = 1.0, z[3] = 0.5;
  const std::vector<int> y = {1, 0};
  const auto p = softmax(z);
  const auto r = softmax_xent<double>(z, y, std::array<double, 2>{0.75, 1.5});
  CHECK(r.loss == doctest::Approx((-1.5 * std::log(p[1]) - 0.75 * std::log(p[2])) / 2));
  CHECK(r.dlogits[1] == doctest::Approx(1.5 * (p[1] - 1) / 2));
}

TEST_CASE("a context can only be consumed once") {
  Tensor<double> x(1, 1, 2, 2, 1.0);
  auto f = relu_forward(x);
  layer_vjp(f.ctx, x);
  CHECK_THROWS(layer_vjp(f.ctx, x));
}
