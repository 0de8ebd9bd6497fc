#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "dfl/localizer.hpp"
#include "dfl/metrics.hpp"
#include "dfl/rng.hpp"
#include "dfl/synth.hpp"

using namespace dfl;

TEST_CASE("structured activation on symmetric scores") {
  Tensor z = Tensor::vector({0.0, 0.0});
  Tensor pi = structured_activation(z, 1.0, StructuredActivationKind::TReluSoftmax);
  CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pi[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("structured activation truncates at one") {
  Tensor z = Tensor::vector({0.0, 0.0, 0.0, 0.0});
  Tensor pi = structured_activation(z, 8.0, StructuredActivationKind::TReluSoftmax);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pi[i] == 1.0);
    sum += pi[i];
  }
  CHECK(sum <= 8.0);
}

TEST_CASE("tanh variant evaluates tanh(tau softmax)") {
  Tensor z = Tensor::vector({0.0, 0.0});
  Tensor pi =
      structured_activation(z, 1.0, StructuredActivationKind::TanhReluSoftmax);
  CHECK(pi[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
  CHECK(pi[0] == doctest::Approx(0.46211715726).epsilon(1e-9));
}

TEST_CASE("nonpositive tau is rejected") {
  Tensor z = Tensor::vector({0.0});
  CHECK_THROWS_AS(
      structured_activation(z, 0.0, StructuredActivationKind::TReluSoftmax),
      ConfigError);
}

TEST_CASE("feasibility holds for random draws through both variants") {
  // per-variant: pi in [0,1], sum pi <= tau, |delta|_inf <= 1, disrupted in [0,1]
  for (auto kind : {StructuredActivationKind::TReluSoftmax,
                    StructuredActivationKind::TanhReluSoftmax}) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Rng rng(mix_seed(99, seed));
      double tau = rng.uniform(0.2, 12.0);
      CaeConfig cfg = CaeConfig::default_1d(16);
      cfg.activation = kind;
      cfg.encoder = {{4, 3}};
      cfg.hidden = {8};
      cfg.decoder = {{4, 3}};
      Localizer loc = Localizer::build_cae(cfg, tau, mix_seed(7, seed));
      Tensor x({3, 16});
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
      LocalizeResult r = loc.localize(x);
      for (std::size_t b = 0; b < 3; ++b) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 16; ++j) {
          double p = r.pi[b * 16 + j];
          CHECK(p >= 0.0);
          CHECK(p <= 1.0);
          sum += p;
          CHECK(std::abs(r.delta[b * 16 + j]) <= 1.0);
          CHECK(r.disrupted[b * 16 + j] >= 0.0);
          CHECK(r.disrupted[b * 16 + j] <= 1.0);
        }
        CHECK(sum <= tau + 1e-9);
      }
    }
  }
}

TEST_CASE("zero input gives zero disruption whatever the parameters") {
  CaeConfig cfg = CaeConfig::default_1d(12);
  Localizer loc = Localizer::build_cae(cfg, 3.0, 5);
  Tensor x({2, 12});
  LocalizeResult r = loc.localize(x);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(r.delta[i] == 0.0);
    CHECK(r.disrupted[i] == 0.0);
  }
}

TEST_CASE("saturated pi removes every feature") {
  // zeroed parameters give uniform scores; tau >= output count saturates TReLU
  CaeConfig cfg = CaeConfig::default_1d(8);
  cfg.weight_norm = false;
  Localizer loc = Localizer::build_cae(cfg, 10.0, 3);
  for (auto& e : loc.params()->entries()) e.value.fill(0.0);
  Tensor x({1, 8});
  Rng rng(4);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
  LocalizeResult r = loc.localize(x);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(r.pi[i] == 1.0);
    CHECK(r.disrupted[i] == 0.0);
    CHECK(r.delta[i] == x[i]);
  }
}

TEST_CASE("delta plus disrupted reconstructs x bitwise") {
  Rng rng(31);
  CaeConfig cfg = CaeConfig::default_1d(20);
  Localizer loc = Localizer::build_cae(cfg, 5.0, 17);
  Tensor x({4, 20});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
  LocalizeResult r = loc.localize(x);
  double l1 = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(r.delta[i] + r.disrupted[i] == x[i]);  // exact
  }
  for (std::size_t j = 0; j < 20; ++j) l1 += std::abs(r.delta[j]);
  CHECK(l1 <= 5.0 + 1e-9);
}

TEST_CASE("localizer rejects out-of-range inputs and bad shapes") {
  CaeConfig cfg = CaeConfig::default_1d(6);
  Localizer loc = Localizer::build_cae(cfg, 2.0, 1);
  Tensor bad({1, 6});
  bad[2] = 1.5;
  CHECK_THROWS_AS(loc.localize(bad), DataError);
  Tensor wrong({1, 7});
  CHECK_THROWS_AS(loc.localize(wrong), ShapeError);
}

TEST_CASE("activity norm: zero delta head is exactly zero, budget binds") {
  Dataset seq = synth_sequences(40, 16, 2);
  Localizer zero = Localizer::build_constant(16, 2.0, 9);
  zero.params()->value("delta").fill(0.0);
  CHECK(zero.empirical_activity_norm(seq) == 0.0);

  Localizer cae = Localizer::build_cae(CaeConfig::default_1d(16), 6.0, 9);
  CHECK(cae.empirical_activity_norm(seq) <= 6.0 + 1e-9);

  // saturated pi on a single instance recovers ||x||_1
  CaeConfig cfg = CaeConfig::default_1d(16);
  cfg.weight_norm = false;
  Localizer sat = Localizer::build_cae(cfg, 20.0, 3);
  for (auto& e : sat.params()->entries()) e.value.fill(0.0);
  std::vector<std::size_t> one{3};
  Dataset single = seq.subset(one);
  double l1 = 0.0;
  for (std::size_t j = 0; j < 16; ++j) l1 += single.features[j];
  CHECK(sat.empirical_activity_norm(single) == doctest::Approx(l1).epsilon(1e-12));

  Dataset empty = seq.subset({});
  CHECK_THROWS_AS(cae.empirical_activity_norm(empty), DataError);
}

TEST_CASE("cae configs reach the documented output shapes") {
  // two conv encoder + two transposed decoder stacks over 187-length input
  CaeConfig cae64 = CaeConfig::cae_1d(187, 64, 3);
  Localizer a = Localizer::build_cae(cae64, 5.0, 1);
  Tensor x({2, 187});
  Rng rng(8);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
  CHECK(a.localize(x).pi.shape() == Shape{2, 187});

  CaeConfig mlp = CaeConfig::mlp_1d(187, 256);
  CHECK(mlp.hidden == std::vector<std::size_t>{256, 128, 64, 187});
  Localizer b = Localizer::build_cae(mlp, 5.0, 1);
  CHECK(b.localize(x).pi.shape() == Shape{2, 187});

  CaeConfig img = CaeConfig::default_2d(28, 28);
  Localizer c = Localizer::build_cae(img, 5.0, 1);
  Tensor xi({1, 28, 28});
  for (std::size_t i = 0; i < xi.numel(); ++i) xi[i] = rng.uniform();
  CHECK(c.localize(xi).pi.shape() == Shape{1, 28, 28});
}

TEST_CASE("localizer objective is differentiable end to end") {
  Dataset seq = synth_sequences(12, 10, 7);
  NetworkSpec dspec = preset_network("mlp", {10}, 2);
  Predictor d;
  d.spec = dspec;
  d.loss = LossKind::CrossEntropy;
  d.params = std::make_shared<ParameterSet>();
  dspec.init_params(*d.params, "d.", 3);
  d.params->freeze();

  CaeConfig cfg;
  cfg.input_shape = {10};
  cfg.encoder = {{3, 3}};
  cfg.hidden = {6};
  cfg.decoder = {{3, 3}};
  Localizer loc = Localizer::build_cae(cfg, 2.5, 11);

  NodePtr x = placeholder("x");
  NodePtr y = placeholder("y");
  NodePtr disrupted = loc.build_disrupted(x);
  NodePtr scores = d.build_scores(disrupted);
  NodePtr loss = reduce_mean(cross_entropy(softmax(scores), y));
  Executor exec(loss);
  exec.forward({{"x", seq.features}, {"y", label_tensor(seq)}});
  FiniteDiffReport report = finite_difference_check(exec, *loc.params(), {}, 1e-5);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("constant head projection keeps the budget and the box") {
  std::vector<double> v{2.0, -3.0, 0.2, 0.9};
  auto proj = project_l1_box(v, 2.0);
  double l1 = 0.0;
  for (double x : proj) {
    CHECK(std::abs(x) <= 1.0 + 1e-12);
    l1 += std::abs(x);
  }
  CHECK(l1 == doctest::Approx(2.0).epsilon(1e-9));
  // feasible input passes through untouched
  auto same = project_l1_box({0.2, -0.1}, 2.0);
  CHECK(same[0] == 0.2);
  CHECK(same[1] == -0.1);
}

TEST_CASE("localizer checkpoints round-trip through the sidecar") {
  CaeConfig cfg = CaeConfig::default_1d(9);
  cfg.activation = StructuredActivationKind::TanhReluSoftmax;
  Localizer loc = Localizer::build_cae(cfg, 3.5, 77);
  std::string ckpt = "loc_test.dfl";
  std::string side = "loc_test.json";
  loc.save(ckpt, side);
  Localizer back = Localizer::load(ckpt, side);
  CHECK(back.tau() == 3.5);
  CHECK(back.config().activation == StructuredActivationKind::TanhReluSoftmax);
  CHECK(back.params()->same_values(*loc.params()));
  Tensor x({1, 9});
  Rng rng(5);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
  CHECK(back.localize(x).pi == loc.localize(x).pi);
  std::remove(ckpt.c_str());
  std::remove(side.c_str());
}
