#include <doctest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "m2a/errors.hpp"
#include "m2a/tensor.hpp"

using namespace m2a;
using ad::Tensor;
using testing::check_gradients;
using testing::random_tensor;
using Inputs = std::vector<Tensor>;

TEST_CASE("elementwise values") {
  const Tensor a({2}, {1, 2}), b({2}, {4, 5});
  const auto p = ad::mul(a, b);
  CHECK(p[0] == 4.0);
  CHECK(p[1] == 10.0);
  CHECK(ad::add(a, b)[1] == 7.0);
  CHECK(ad::sub(a, b)[0] == -3.0);
  CHECK(ad::sum(Tensor::zeros({3, 4, 2})).item() == 0.0);
  CHECK(ad::mean(Tensor({4}, {1, 2, 3, 6})).item() == doctest::Approx(3.0));
}

TEST_CASE("batch broadcasting over the leading axis") {
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}), row({3}, {10, 20, 30});
  const auto y = ad::add(x, row);
  CHECK(y.shape() == ad::Shape{2, 3});
  CHECK(y[4] == 25.0);
  CHECK_THROWS_AS(ad::add(x, Tensor({2}, {1, 2})), ShapeError);
  CHECK_THROWS_AS(ad::matmul(x, x), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("matmul against a hand product") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6}), b({3, 2}, {7, 8, 9, 10, 11, 12});
  const auto c = ad::matmul(a, b);
  CHECK(c.shape() == ad::Shape{2, 2});
  CHECK(c[0] == 58.0);
  CHECK(c[1] == 64.0);
  CHECK(c[2] == 139.0);
  CHECK(c[3] == 154.0);
}

TEST_CASE("gradient of sum(x*x) is 2x") {
  Tensor x({3}, {1, 2, 3});
  x.set_requires_grad(true);
  ad::Trace trace;
  trace.backward(ad::sum(ad::mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));

  const auto fd = check_gradients([](const Inputs& in) { return ad::sum(ad::mul(in[0], in[0])); },
                                  {Tensor({3}, {1, 2, 3})});
  CHECK(fd.ok(1e-6));
}

TEST_CASE("softmax values") {
  const auto u = ad::softmax(Tensor({4}, {0, 0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  for (double c : {-50.0, 0.0, 3.0, 700.0}) {
    const auto p = ad::softmax(Tensor({2}, {c, c + std::log(3.0)}));
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
  const auto p = ad::softmax(Tensor({3}, {1, 2, 3}));
  const auto q = oracle::softmax({1, 2, 3});
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p[k] - q[k]) / q[k] < 1e-12);
  CHECK_THROWS_AS(ad::softmax(Tensor({2}, {0.0, NAN})), DomainError);
}

TEST_CASE("stop-gradient blocks exactly") {
  Tensor x({2}, {1, 2});
  x.set_requires_grad(true);
  {
    ad::Trace trace;
    trace.backward(ad::sum(ad::stop_gradient(x)));
    REQUIRE(x.has_grad());
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
  }
  x.clear_grad();
  {
    ad::Trace trace;
    trace.backward(ad::sum(ad::mul(x, ad::stop_gradient(x))));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
  }
  // Finite differences on the composite with the detached factor held fixed.
  const Tensor frozen({2}, {1, 2});
  const auto fd = check_gradients([&](const Inputs& in) { return ad::sum(ad::mul(in[0], frozen)); },
                                  {Tensor({2}, {1, 2})});
  CHECK(fd.ok(1e-6));
}

TEST_CASE("primitive gradients match finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), row = random_tensor({4}, rng);
    const auto m = random_tensor({4, 2}, rng), pos = random_tensor({3, 4}, rng, 0.2, 2.0);
    const auto w = random_tensor({3, 4}, rng);  // fixed weights turn outputs into scalars
    auto dot = [&](const Tensor& t) { return ad::sum(ad::mul(t, w)); };
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::add(in[0], in[1])); }, {a, b}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::sub(in[0], in[1])); }, {a, b}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::mul(in[0], in[1])); }, {a, b}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::mul(in[0], in[1])); }, {a, row}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::scale(in[0], -1.7)); }, {a}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::add_scalar(in[0], 0.3)); }, {a}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return ad::sum(ad::mul(ad::matmul(in[0], in[1]), ad::matmul(in[0], in[1]))); },
                          {a, m})
              .ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return ad::mean(ad::mul(in[0], in[0])); }, {a}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return ad::sum(ad::mul(ad::sum_last(in[0]), ad::sum_last(in[0]))); },
                          {a})
              .ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::log(in[0])); }, {pos}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::exp(in[0])); }, {a}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::relu(in[0])); }, {pos}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::clamp_min(in[0], 0.1)); }, {pos}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::softmax(in[0])); }, {a}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return dot(ad::layer_norm(in[0], 1e-12)); }, {a}).ok(1e-4));
    CHECK(check_gradients([&](const Inputs& in) { return ad::sum(ad::mul(ad::reshape(in[0], {12}), ad::reshape(w, {12}))); },
                          {a})
              .ok(1e-4));
  }
}

TEST_CASE("gradients accumulate across backward calls and unreached leaves get zeros") {
  Tensor x({2}, {1, 2}), unused({2}, {5, 5});
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  {
    ad::Trace trace;
    const auto y = ad::sum(ad::add(x, ad::scale(unused, 0.0)));
    trace.backward(y);
    trace.backward(y);
  }
  CHECK(x.grad()[0] == 2.0);
  CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  Rng rng(3);
  const auto x = random_tensor({5, 16}, rng, -3.0, 3.0);
  const auto y = ad::layer_norm(x, 1e-12);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mean += y[r * 16 + c] / 16.0;
    for (std::size_t c = 0; c < 16; ++c) var += (y[r * 16 + c] - mean) * (y[r * 16 + c] - mean) / 16.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-9);
  }
}

TEST_CASE("non-leaf tensors cannot become parameters") {
  Tensor x({1}, {1.0});
  x.set_requires_grad(true);
  ad::Trace trace;
  auto y = ad::scale(x, 2.0);
  CHECK_THROWS_AS(y.set_requires_grad(true), ContractError);
  CHECK_THROWS_AS(trace.backward(ad::add(Tensor({2}, {1, 1}), Tensor({2}, {1, 1}))), ShapeError);
}
