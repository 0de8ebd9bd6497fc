#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dfl/graph.hpp"
#include "dfl/ops.hpp"
#include "dfl/rng.hpp"

using namespace dfl;

namespace {

std::shared_ptr<ParameterSet> make_params() {
  return std::make_shared<ParameterSet>();
}

// Central-difference gradient of a scalar executor wrt one parameter entry,
// independent of the backward implementation.
double numeric_grad(Executor& exec, Tensor& value, std::size_t i, double h) {
  double saved = value[i];
  value[i] = saved + h;
  double up = exec.forward()[0];
  value[i] = saved - h;
  double down = exec.forward()[0];
  value[i] = saved;
  exec.forward();
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("scalar product graph evaluates") {
  auto params = make_params();
  params->add("a", Tensor::scalar(3.0));
  params->add("b", Tensor::scalar(4.0));
  NodePtr y = mul(parameter(params, "a"), parameter(params, "b"));
  Executor exec(y);
  CHECK(exec.forward()[0] == doctest::Approx(12.0));
}

TEST_CASE("softmax of equal scores is uniform") {
  NodePtr z = constant(Tensor::vector({0.0, 0.0}));
  Executor exec(softmax(z));
  const Tensor& s = exec.forward();
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("valid conv1d matches the direct convolution sum") {
  // kernel (1,1,1) over (1,2,3,4): positions sum to 6 and 9
  auto params = make_params();
  params->add("k", Tensor({1, 1, 3}, {1.0, 1.0, 1.0}));
  NodePtr x = constant(Tensor({1, 1, 4}, {1.0, 2.0, 3.0, 4.0}));
  Executor exec(conv1d(x, parameter(params, "k"), Padding::Valid));
  const Tensor& out = exec.forward();
  REQUIRE(out.shape() == Shape{1, 1, 2});
  CHECK(out[0] == doctest::Approx(6.0));
  CHECK(out[1] == doctest::Approx(9.0));
}

TEST_CASE("square derivative at a=3 is 6") {
  auto params = make_params();
  params->add("a", Tensor::scalar(3.0));
  NodePtr a = parameter(params, "a");
  Executor exec(mul(a, a));
  exec.forward();
  GradientMap g = exec.backward();
  CHECK(g.at("a")[0] == doctest::Approx(6.0));
}

TEST_CASE("cross-entropy after softmax pushes (-0.5, 0.5) onto logits") {
  auto params = make_params();
  params->add("z", Tensor({1, 2}, {0.0, 0.0}));
  NodePtr z2 = parameter(params, "z");
  NodePtr labels = constant(Tensor::vector({0.0}));
  NodePtr loss = reduce_mean(cross_entropy(softmax(z2), labels));
  Executor exec(loss);
  CHECK(exec.forward()[0] == doctest::Approx(std::log(2.0)));
  GradientMap g = exec.backward();
  CHECK(g.at("z")[0] == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(g.at("z")[1] == doctest::Approx(0.5).epsilon(1e-9));

  // finite-difference oracle at step 1e-5
  Tensor& z = params->value("z");
  CHECK(numeric_grad(exec, z, 0, 1e-5) == doctest::Approx(-0.5).epsilon(1e-4));
  CHECK(numeric_grad(exec, z, 1, 1e-5) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("frozen parameters receive no gradient entry") {
  auto params = make_params();
  params->add("a", Tensor::scalar(2.0));
  params->add("b", Tensor::scalar(5.0), /*trainable=*/false);
  NodePtr y = mul(parameter(params, "a"), parameter(params, "b"));
  Executor exec(y);
  exec.forward();
  GradientMap g = exec.backward();
  CHECK(g.count("a") == 1);
  CHECK(g.count("b") == 0);
}

TEST_CASE("backward rejects non-scalar losses") {
  NodePtr v = constant(Tensor::vector({1.0, 2.0}));
  Executor exec(relu(v));
  exec.forward();
  CHECK_THROWS_AS(exec.backward(), ShapeError);
}

TEST_CASE("forward reports non-finite activations with the node name") {
  auto params = make_params();
  params->add("a", Tensor::scalar(1e308));
  NodePtr a = parameter(params, "a");
  Executor exec(mul(a, a));
  CHECK_THROWS_AS(exec.forward(), NonFiniteError);
}

TEST_CASE("finite differences match backward on a 2-layer dense net") {
  auto params = make_params();
  Rng rng(7);
  Tensor w1({2, 2}), b1({2}), w2({2, 1}), b2({1});
  for (auto* t : {&w1, &w2}) {
    for (std::size_t i = 0; i < t->numel(); ++i) (*t)[i] = rng.normal() * 0.7;
  }
  b1[0] = 0.1;
  b1[1] = -0.2;
  b2[0] = 0.05;
  params->add("w1", w1);
  params->add("b1", b1);
  params->add("w2", w2);
  params->add("b2", b2);  // 4+2+2+1 = 9 scalars, plus input below

  NodePtr x = constant(Tensor({3, 2}, {0.2, 0.8, 0.5, 0.1, 0.9, 0.4}));
  NodePtr h = tanh_op(bias_add(matmul(x, parameter(params, "w1")),
                               parameter(params, "b1")));
  NodePtr out = bias_add(matmul(h, parameter(params, "w2")),
                         parameter(params, "b2"));
  NodePtr target = constant(Tensor({3, 1}, {0.0, 1.0, 0.5}));
  Executor exec(reduce_mean(squared_error(out, target)));
  FiniteDiffReport report = finite_difference_check(exec, *params, {}, 1e-5);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("constant graph finite differences are exactly zero") {
  auto params = make_params();
  params->add("unused", Tensor::scalar(3.0));
  NodePtr c = constant(Tensor::scalar(2.0));
  Executor exec(reduce_mean(mul(c, c)));
  FiniteDiffReport report = finite_difference_check(exec, *params, {"unused"}, 1e-5);
  CHECK(report.worst == 0.0);
}

TEST_CASE("trelu gradients check out in the open region") {
  auto params = make_params();
  params->add("u", Tensor::vector({0.3, 0.7, 0.5}));
  NodePtr y = reduce_mean(trelu(scale(parameter(params, "u"), 1.1)));
  Executor exec(y);
  FiniteDiffReport report = finite_difference_check(exec, *params, {}, 1e-5);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("trelu clamps to [0,1] and matches identity inside") {
  Rng rng(11);
  Tensor u({100});
  for (std::size_t i = 0; i < u.numel(); ++i) u[i] = rng.uniform(-2.0, 3.0);
  Executor exec(trelu(constant(u)));
  const Tensor& y = exec.forward();
  for (std::size_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] >= 0.0);
    CHECK(y[i] <= 1.0);
    if (u[i] > 0.0 && u[i] < 1.0) CHECK(y[i] == u[i]);
  }
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  Rng rng(23);
  Tensor z({8, 5});
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = rng.uniform(-30.0, 30.0);
  Executor exec(softmax(constant(z)));
  const Tensor& s = exec.forward();
  for (std::size_t r = 0; r < 8; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(s[r * 5 + c] >= 0.0);
      sum += s[r * 5 + c];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("finite differences pass across every layer type") {
  // one compact graph touching conv1d, conv2d, transposed convs, dense,
  // relu/trelu/tanh, softmax, weight norm, both losses
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    auto params = make_params();
    Rng rng(seed);
    auto randt = [&](Shape s, double sd) {
      Tensor t(std::move(s));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = sd * rng.normal();
      return t;
    };
    params->add("k1", randt({2, 1, 3}, 0.6));
    params->add("k2", randt({2, 1, 3}, 0.6));  // transposed: (c_in, c_out, k)
    params->add("k3", randt({2, 1, 3, 3}, 0.5));
    params->add("k4", randt({1, 2, 3, 3}, 0.5));
    params->add("w", randt({8, 2}, 0.7));
    params->add("b", randt({2}, 0.3));

    Tensor x1({2, 1, 4});
    for (std::size_t i = 0; i < x1.numel(); ++i) x1[i] = rng.uniform(0.05, 0.95);
    Tensor x2({2, 1, 2, 2});
    for (std::size_t i = 0; i < x2.numel(); ++i) x2[i] = rng.uniform(0.05, 0.95);

    NodePtr seq = conv1d(constant(x1), parameter(params, "k1"), Padding::Same);
    seq = relu(seq);
    seq = conv_transpose1d(seq, parameter(params, "k2"));
    seq = trelu(seq);  // (2,1,4)

    NodePtr img = conv2d(constant(x2), weight_norm(parameter(params, "k3"),
                                                   WeightNormMode::PerRow),
                         Padding::Same);
    img = tanh_op(img);
    NodePtr imgt = conv_transpose2d(constant(x2), parameter(params, "k4"));
    img = add(img, imgt);  // (2,2,2,2)

    Tensor proj({4, 2});
    for (std::size_t i = 0; i < proj.numel(); ++i) proj[i] = 0.3 * rng.normal();
    NodePtr from_seq = matmul(reshape_tail(seq, Shape{4}), constant(proj));
    NodePtr from_img = bias_add(
        matmul(reshape_tail(img, Shape{8}), parameter(params, "w")),
        parameter(params, "b"));
    NodePtr joined = add(from_seq, from_img);  // (2,2)

    NodePtr labels = constant(Tensor::vector({0.0, 1.0}));
    NodePtr ce = cross_entropy(softmax(joined), labels);
    NodePtr loss = reduce_mean(ce);
    Executor exec(loss);
    FiniteDiffReport report = finite_difference_check(exec, *params, {}, 1e-5);
    CAPTURE(seed);
    CHECK(report.worst < 1e-4);
  }
}

TEST_CASE("squared error gradients check out") {
  auto params = make_params();
  params->add("v", Tensor({2, 3}, {0.1, 0.4, -0.2, 0.7, 0.0, 0.3}));
  NodePtr target = constant(Tensor({2, 3}, {0.0, 0.5, 0.5, 0.2, 0.2, 0.2}));
  Executor exec(reduce_mean(squared_error(parameter(params, "v"), target)));
  FiniteDiffReport report = finite_difference_check(exec, *params, {}, 1e-5);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("shape mismatch errors name the offending node") {
  NodePtr a = constant(Tensor::vector({1.0, 2.0}));
  NodePtr b = constant(Tensor::vector({1.0, 2.0, 3.0}));
  Executor exec(add(a, b));
  CHECK_THROWS_AS(exec.forward(), ShapeError);
}
