#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "setpool/nn.hpp"
#include "support/oracles.hpp"

using namespace setpool;

namespace {

DenseNet seeded_net(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
                    std::uint64_t seed) {
  Rng rng(seed);
  return make_dense_net(dims, acts, rng);
}

DenseNet identity_net(std::size_t dim) {
  DenseNet net;
  DenseLayer layer;
  layer.in = dim;
  layer.out = dim;
  layer.act = Activation::kIdentity;
  layer.weights.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) layer.weights[i * dim + i] = 1.0;
  layer.bias.assign(dim, 0.0);
  net.layers.push_back(layer);
  return net;
}

}  // namespace

TEST_CASE("forward: identity layer returns its input") {
  const DenseNet net = identity_net(2);
  const std::vector<double> x = {1.0, 2.0};
  CHECK(forward(net, x) == x);
}

TEST_CASE("forward: zero weights yield the bias") {
  DenseNet net = identity_net(3);
  std::fill(net.layers[0].weights.begin(), net.layers[0].weights.end(), 0.0);
  net.layers[0].bias = {0.5, -1.5, 2.0};
  const std::vector<double> out = forward(net, std::vector<double>{9.0, -3.0, 7.0});
  CHECK(out == net.layers[0].bias);

  // zero network with zero biases returns the zero vector
  net.layers[0].bias.assign(3, 0.0);
  CHECK(forward(net, std::vector<double>{1.0, 1.0, 1.0}) == std::vector<double>(3, 0.0));
}

TEST_CASE("forward: matches the straight-line oracle on a seeded 2-layer net") {
  const DenseNet net =
      seeded_net({3, 4, 2}, {Activation::kRelu, Activation::kIdentity}, 42);
  const std::vector<double> x = {0.5, -1.0, 2.0};
  const auto got = forward(net, x);
  const auto expected = oracles::straight_line_forward(net, x);
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("forward: rejects dimension mismatch") {
  const DenseNet net = identity_net(2);
  CHECK_THROWS_AS(forward(net, std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("backward: zero upstream gives all-zero gradients") {
  const DenseNet net =
      seeded_net({3, 4, 2}, {Activation::kRelu, Activation::kIdentity}, 7);
  const Gradients g = backward(net, std::vector<double>{1.0, 2.0, 3.0},
                               std::vector<double>{0.0, 0.0});
  for (const auto& lg : g.layers) {
    for (double v : lg.weights) CHECK(v == 0.0);
    for (double v : lg.bias) CHECK(v == 0.0);
  }
  for (double v : g.input) CHECK(v == 0.0);
}

TEST_CASE("backward: linear layer gives outer-product weight grads and upstream bias grads") {
  const DenseNet net = identity_net(2);
  const std::vector<double> x = {3.0, -2.0};
  const std::vector<double> upstream = {0.5, 2.0};
  const Gradients g = backward(net, x, upstream);
  for (std::size_t o = 0; o < 2; ++o) {
    CHECK(g.layers[0].bias[o] == upstream[o]);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(g.layers[0].weights[o * 2 + i] == upstream[o] * x[i]);
  }
}

TEST_CASE("backward: matches central finite differences on a seeded relu net") {
  const DenseNet net =
      seeded_net({3, 4, 2}, {Activation::kRelu, Activation::kIdentity}, 123);
  const std::vector<double> x = {0.5, -1.0, 2.0};
  const std::vector<double> upstream = {0.7, -0.3};
  const Gradients g = backward(net, x, upstream);

  auto loss = [&](const std::vector<double>& flat) {
    DenseNet perturbed = net;
    set_params(perturbed, flat);
    const auto out = oracles::straight_line_forward(perturbed, x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += upstream[i] * out[i];
    return s;
  };
  const auto fd = oracles::finite_difference(loss, flatten_params(net));
  CHECK(oracles::grads_match(flatten_grads(g), fd));
}

TEST_CASE("backward: input gradient matches finite differences") {
  const DenseNet net =
      seeded_net({4, 5, 3}, {Activation::kTanh, Activation::kIdentity}, 321);
  const std::vector<double> x = {0.1, -0.4, 0.9, 0.3};
  const std::vector<double> upstream = {1.0, -2.0, 0.5};
  const Gradients g = backward(net, x, upstream);
  auto loss = [&](const std::vector<double>& input) {
    const auto out = oracles::straight_line_forward(net, input);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += upstream[i] * out[i];
    return s;
  };
  const auto fd = oracles::finite_difference(loss, x);
  CHECK(oracles::grads_match(g.input, fd));
}

TEST_CASE("backward: linear in the upstream vector") {
  const DenseNet net =
      seeded_net({3, 4, 2}, {Activation::kRelu, Activation::kIdentity}, 5);
  const std::vector<double> x = {0.2, 0.4, -0.6};
  const std::vector<double> u = {1.0, -0.5};
  const std::vector<double> w = {0.3, 0.8};
  const double a = 2.5, b = -1.25;
  std::vector<double> combined(2);
  for (std::size_t i = 0; i < 2; ++i) combined[i] = a * u[i] + b * w[i];

  const auto gu = flatten_grads(backward(net, x, u));
  const auto gw = flatten_grads(backward(net, x, w));
  const auto gc = flatten_grads(backward(net, x, combined));
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(gc[i] == doctest::Approx(a * gu[i] + b * gw[i]).epsilon(1e-10));
}

TEST_CASE("backward: finite-difference agreement over 100 random nets") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 2 + rng.uniform_index(7);
    const std::size_t mid = 2 + rng.uniform_index(7);
    const std::size_t out = 2 + rng.uniform_index(7);
    const Activation act = trial % 2 == 0 ? Activation::kRelu : Activation::kTanh;
    DenseNet net = make_dense_net({in, mid, out}, {act, Activation::kIdentity}, rng);
    std::vector<double> x(in), upstream(out);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : upstream) v = rng.uniform(-1.0, 1.0);

    const auto analytic = flatten_grads(backward(net, x, upstream));
    auto loss = [&](const std::vector<double>& flat) {
      DenseNet perturbed = net;
      set_params(perturbed, flat);
      const auto y = oracles::straight_line_forward(perturbed, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
      return s;
    };
    const auto fd = oracles::finite_difference(loss, flatten_params(net));
    REQUIRE(oracles::grads_match(analytic, fd));
  }
}

TEST_CASE("softmax: uniform on equal inputs") {
  const auto p = softmax(std::vector<double>{0.0, 0.0, 0.0});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax: no overflow on large inputs") {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax: matches direct exp/sum recomputation") {
  const std::vector<double> v = {1.0, 2.0, 3.0};
  const auto p = softmax(v);
  double z = 0.0;
  for (double x : v) z += std::exp(x);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(p[i] == doctest::Approx(std::exp(v[i]) / z).epsilon(1e-12));
}

TEST_CASE("softmax: valid distribution and shift invariance") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(1 + rng.uniform_index(8));
    for (double& x : v) x = rng.uniform(-5.0, 5.0);
    const auto p = softmax(v);
    double sum = 0.0;
    for (double x : p) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    const double shift = rng.uniform(-1e3, 1e3);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += shift;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-9));
  }
}

TEST_CASE("softmax: rejects empty input") {
  CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("cross_entropy: uniform two-class is ln 2") {
  CHECK(cross_entropy(std::vector<double>{0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("cross_entropy: confident correct is near zero") {
  CHECK(cross_entropy(std::vector<double>{100.0, 0.0, 0.0}, 0) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross_entropy: matches the softmax oracle") {
  const std::vector<double> o = {1.0, 2.0, 3.0};
  double z = 0.0;
  for (double x : o) z += std::exp(x);
  CHECK(cross_entropy(o, 2) == doctest::Approx(-std::log(std::exp(3.0) / z)).epsilon(1e-12));
  CHECK(cross_entropy(o, 2) >= 0.0);
}

TEST_CASE("cross_entropy: rejects out-of-range label") {
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{1.0, 2.0}, 2), std::invalid_argument);
}

TEST_CASE("make_dense_net: chained dims and zero biases") {
  Rng rng(1);
  const DenseNet net = make_dense_net(
      {3, 5, 2}, {Activation::kRelu, Activation::kIdentity}, rng);
  CHECK(net.input_dim() == 3);
  CHECK(net.output_dim() == 2);
  CHECK(net.layers[0].out == net.layers[1].in);
  for (const auto& layer : net.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (double w : layer.weights) CHECK(std::abs(w) <= bound);
    for (double b : layer.bias) CHECK(b == 0.0);
  }
}

TEST_CASE("flatten/set params round-trip") {
  Rng rng(11);
  DenseNet net = make_dense_net({4, 6, 3}, {Activation::kTanh, Activation::kIdentity}, rng);
  const auto flat = flatten_params(net);
  CHECK(flat.size() == net.param_count());
  DenseNet other = net;
  std::vector<double> zeros(flat.size(), 0.0);
  set_params(other, zeros);
  CHECK(forward(other, std::vector<double>{1, 2, 3, 4}) == std::vector<double>(3, 0.0));
  set_params(other, flat);
  CHECK(forward(other, std::vector<double>{1, 2, 3, 4}) ==
        forward(net, std::vector<double>{1, 2, 3, 4}));
}
