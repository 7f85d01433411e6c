// Central finite differences against every backward kernel and the whole
// AdeNet graph, in double.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "adenet/model.hpp"
#include "adenet/nn.hpp"
#include "adenet/rng.hpp"
#include "gradient_suite.hpp"

using namespace adenet;
using namespace adenet::nn;

namespace {

constexpr double kTolerance = 1e-4;
constexpr double kStep = testing::kFdStep;

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

double relative_error(const Tensor<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

std::vector<double> numeric_grad(Tensor<double>& t, const std::function<double()>& loss) {
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double keep = t[i];
    t[i] = keep + kStep;
    const double up = loss();
    t[i] = keep - kStep;
    const double down = loss();
    t[i] = keep;
    g[i] = (up - down) / (2 * kStep);
  }
  return g;
}

}  // namespace

TEST_CASE("every layer kind: backward matches finite differences on 100 instances") {
  for (const auto& c : testing::gradient_cases()) {
    CAPTURE(c.name);
    // Softmax-xent is smooth everywhere, so it gets a tighter bound.
    const double limit = c.name == "softmax-xent" ? 1e-6 : kTolerance;
    for (std::uint64_t trial = 0; trial < 100; ++trial) CHECK(c.worst_error(derive_seed(11, trial)) <= limit);
  }
}

TEST_CASE("whole AdeNet graph: parameter and input gradients match finite differences") {
  for (int trial = 0; trial < 3; ++trial) {
    auto net = model::build_adenet(3, true, static_cast<std::uint64_t>(trial)).cast<double>();
    net.mode = Mode::kTrain;
    Rng rng(derive_seed(20, trial));
    auto x = random_tensor({3, 3, 8, 8}, rng);
    const std::vector<int> labels = {0, 1, 1};
    auto loss = [&] {
      auto copy = net;
      return softmax_xent<double>(model::forward(copy, x).logits, labels).loss;
    };
    auto copy = net;
    auto pass = model::forward(copy, x);
    const auto xent = softmax_xent<double>(pass.logits, labels);
    const auto grads = model::backward(copy, pass.contexts, xent.dlogits);

    // Probe a handful of entries of every trainable tensor.
    auto tensors = model::trainable_tensors(net);
    std::size_t t_index = 0;
    for (std::size_t l = 0; l < grads.layers.size(); ++l)
      for (const auto& g : grads.layers[l]) {
        Tensor<double>& p = *tensors[t_index++];
        for (int probe = 0; probe < 4; ++probe) {
          const std::size_t i = rng.below(p.size());
          const double keep = p[i];
          p[i] = keep + kStep;
          const double up = loss();
          p[i] = keep - kStep;
          const double down = loss();
          p[i] = keep;
          const double numeric = (up - down) / (2 * kStep);
          CHECK(std::abs(g[i] - numeric) <= kTolerance * std::max(1.0, std::abs(numeric)));
        }
      }
    CHECK(t_index == tensors.size());
    CHECK(relative_error(grads.dx, numeric_grad(x, loss)) <= kTolerance);
  }
}
