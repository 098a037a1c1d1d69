#include <doctest.h>

#include <cmath>

#include "cmr/autodiff.hpp"
#include "cmr/errors.hpp"
#include "gradcheck.hpp"

using namespace cmr;
using namespace cmr::ad;
using cmr::testing::check_gradients;
using cmr::testing::random_parameter;
using cmr::testing::random_tensor;

TEST_CASE("tensor shape invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("matmul examples") {
  Graph g;
  Var eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = g.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  CHECK(matmul(eye, m).value() == Tensor::matrix({{3, 4}, {5, 6}}));

  Var row = g.constant(Tensor::matrix({{1, 2}}));
  Var col = g.constant(Tensor::matrix({{0}, {0}}));
  CHECK(matmul(row, col).value() == Tensor::matrix({{0}}));
}

TEST_CASE("matmul shape error names both shapes") {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  auto a = random_parameter({3, 4}, rng);
  auto b = random_parameter({4, 2}, rng);
  const Tensor w = random_tensor({3, 2}, rng);
  auto result = check_gradients({&a, &b}, [&](Graph& g) {
    return cmr::testing::weighted_total(g, matmul(g.param(a), g.param(b)), w);
  });
  CHECK(result.checked == 20);
  CHECK(result.max_relative_error < 1e-6);
}

TEST_CASE("softmax with temperature") {
  Graph g;
  SUBCASE("symmetry") {
    Var p = softmax(g.constant(Tensor::vector({0, 0})), 1.0);
    CHECK(p.value()[0] == doctest::Approx(0.5));
    CHECK(p.value()[1] == doctest::Approx(0.5));
  }
  SUBCASE("log identity") {
    Var p = softmax(g.constant(Tensor::vector({std::log(1.0), std::log(2.0), std::log(7.0)})), 1.0);
    CHECK(p.value()[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p.value()[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p.value()[2] == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("uniform limit") {
    Var p = softmax(g.constant(Tensor::vector({5, -3})), 1e6);
    CHECK(std::abs(p.value()[0] - 0.5) < 1e-5);
    CHECK(std::abs(p.value()[1] - 0.5) < 1e-5);
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(softmax(g.constant(Tensor::vector({1, 2})), 0.0), DomainError);
    CHECK_THROWS_AS(softmax(g.constant(Tensor::vector({1, 2})), -1.0), DomainError);
    CHECK_THROWS_AS(softmax(g.constant(Tensor({0})), 1.0), DomainError);
  }
  SUBCASE("large logits stay finite") {
    Var p = softmax(g.constant(Tensor::vector({1000, 999, -1000})), 1.0);
    CHECK(p.value().all_finite());
  }
}

TEST_CASE("softmax keeps the argmax for any temperature") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({7}, rng, 3.0);
    const auto top = std::max_element(x.values().begin(), x.values().end()) - x.values().begin();
    for (double tau : {0.01, 0.25, 1.0, 4.0, 100.0}) {
      Graph g;
      Var p = softmax(g.constant(x), tau);
      const auto arg = std::max_element(p.value().values().begin(), p.value().values().end()) - p.value().values().begin();
      CHECK(arg == top);
    }
  }
}

TEST_CASE("concat examples") {
  Graph g;
  Var a = g.input(Tensor::vector({1, 2}));
  Var b = g.input(Tensor::vector({3}));
  CHECK(concat(a, b).value() == Tensor::vector({1, 2, 3}));
  CHECK(concat(a, g.constant(Tensor({0}))).value() == a.value());

  Var root = sum(concat(a, b));
  g.backward(root);
  CHECK(a.grad() == Tensor::vector({1, 1}));

  CHECK_THROWS_AS(concat(g.constant(Tensor({2, 3})), g.constant(Tensor({3, 3}))), ShapeError);
}

TEST_CASE("backward examples") {
  SUBCASE("sum of softmax has zero gradient") {
    Graph g;
    Var x = g.input(Tensor::vector({0.3, -1.2, 2.0}));
    g.backward(sum(softmax(x)));
    for (double v : x.grad().values()) CHECK(std::abs(v) < 1e-15);
  }
  SUBCASE("quadratic form") {
    Graph g;
    Var x = g.input(Tensor::vector({1, 2}));
    g.backward(dot(x, x));
    CHECK(x.grad() == Tensor::vector({2, 4}));
  }
  SUBCASE("non-scalar root") {
    Graph g;
    Var x = g.input(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(g.backward(x), DomainError);
  }
  SUBCASE("second backward accumulates twice the gradient") {
    Graph g;
    Parameter w(Tensor::vector({0.5, -0.25, 1.5}));
    Var x = g.input(Tensor::vector({1, 2, 3}));
    Var root = sum(tanh(mul(g.param(w), x)));
    g.backward(root);
    const Tensor once_w = w.grad;
    const Tensor once_x = x.grad();
    g.backward(root);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(w.grad[i] == 2.0 * once_w[i]);
      CHECK(x.grad()[i] == 2.0 * once_x[i]);
    }
  }
}

TEST_CASE("dropout with an all-ones mask is the identity") {
  Graph g;
  Var x = g.input(Tensor::matrix({{1, -2}, {3, 4}}));
  Var y = dropout(x, Tensor({2, 2}, 1.0));
  CHECK(y.value() == x.value());
}

TEST_CASE("embedding lookup scatters gradients into rows") {
  Graph g;
  Parameter table(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  const std::vector<int> ids{2, 0, 2};
  Var e = embedding(g.param(table), ids);
  CHECK(e.value() == Tensor::matrix({{5, 6}, {1, 2}, {5, 6}}));
  g.backward(sum(e));
  CHECK(table.grad == Tensor::matrix({{1, 1}, {0, 0}, {2, 2}}));
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(embedding(g.param(table), bad), DomainError);
}

TEST_CASE("elementwise ops gradient check") {
  Rng rng(3);
  auto a = random_parameter({3, 4}, rng);
  auto b = random_parameter({3, 4}, rng);
  auto bias = random_parameter({4}, rng);
  const Tensor w = random_tensor({3, 4}, rng);
  auto result = check_gradients({&a, &b, &bias}, [&](Graph& g) {
    Var x = add(mul(tanh(g.param(a)), sigmoid(g.param(b))), g.param(bias));
    Var y = sub(relu(x), scale(g.param(a), 0.5));
    return cmr::testing::weighted_total(g, softmax(y, 0.7), w);
  });
  CHECK(result.max_relative_error < 1e-4);
}

TEST_CASE("cross entropy matches log-softmax pick") {
  Rng rng(9);
  auto logits = random_parameter({4, 5}, rng, 2.0);
  const std::vector<int> targets{0, 3, 4, 1};
  Graph g;
  Var nll = cross_entropy(g.param(logits), targets, 1.5);
  Var probs = softmax(g.param(logits), 1.5);
  for (std::size_t r = 0; r < 4; ++r)
    CHECK(nll.value()[r] == doctest::Approx(-std::log(probs.value()(r, targets[r]))).epsilon(1e-12));
  auto result = check_gradients({&logits}, [&](Graph& g) { return mean(cross_entropy(g.param(logits), targets, 1.5)); });
  CHECK(result.max_relative_error < 1e-4);
}
