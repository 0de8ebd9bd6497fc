#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dfl/metrics.hpp"
#include "dfl/rng.hpp"
#include "dfl/synth.hpp"

using namespace dfl;

namespace {

// 2-class linear predictor with hand-set weights.
Predictor linear_predictor(const Tensor& w, const Tensor& b, LossKind loss) {
  Predictor d;
  d.spec.input_shape = {w.dim(0)};
  d.spec.layers = {LayerSpec::dense(w.dim(1))};
  d.loss = loss;
  d.params = std::make_shared<ParameterSet>();
  d.params->add("d.L0.weight", w);
  d.params->add("d.L0.bias", b);
  d.params->freeze();
  return d;
}

Dataset two_class_points() {
  Dataset data;
  data.features = Tensor({4, 1}, {0.0, 0.1, 0.9, 1.0});
  data.labels = {0, 0, 1, 1};
  data.classification = true;
  return data;
}

}  // namespace

TEST_CASE("cross-entropy of near-one-hot predictions sits at the clamp floor") {
  // +-60 logits saturate softmax far past the 1e-12 clamp
  Tensor w({1, 2}, {-120.0, 120.0});
  Tensor b({2}, {60.0, -60.0});
  Predictor d = linear_predictor(w, b, LossKind::CrossEntropy);
  CHECK(mean_loss(d, two_class_points(), LossKind::CrossEntropy) <= 1e-11);
}

TEST_CASE("uniform two-class prediction costs ln 2") {
  Tensor w({1, 2});
  Tensor b({2});
  Predictor d = linear_predictor(w, b, LossKind::CrossEntropy);
  CHECK(mean_loss(d, two_class_points(), LossKind::CrossEntropy) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("squared error vanishes when predictions equal labels") {
  Tensor w({1, 1}, {1.0});
  Tensor b({1});
  Predictor d = linear_predictor(w, b, LossKind::SquaredError);
  Dataset data;
  data.features = Tensor({3, 1}, {0.2, 0.5, 0.8});
  data.labels = {0.2, 0.5, 0.8};
  data.classification = false;
  CHECK(mean_loss(d, data, LossKind::SquaredError) == doctest::Approx(0.0));
}

TEST_CASE("empty datasets are rejected") {
  Tensor w({1, 2});
  Tensor b({2});
  Predictor d = linear_predictor(w, b, LossKind::CrossEntropy);
  Dataset data = two_class_points().subset({});
  CHECK_THROWS_AS(mean_loss(d, data, LossKind::CrossEntropy), DataError);
}

TEST_CASE("r2 ratio arithmetic") {
  CHECK(r2_from_losses({1.0}, {2.0}) == doctest::Approx(0.5));
  CHECK(r2_from_losses({1.0, 1.0}, {1.0, 1.0}) == 0.0);
  // disruption that helps the model is reported as-is
  CHECK(r2_from_losses({2.0}, {1.0}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(r2_from_losses({1.0}, {0.0}), DegenerateLossError);
}

TEST_CASE("zero localizer yields exactly zero r2") {
  Tensor w({2, 2}, {1.0, -1.0, 0.5, 0.3});
  Tensor b({2});
  Predictor d = linear_predictor(w, b, LossKind::CrossEntropy);
  Dataset data;
  data.features = Tensor({4, 2}, {0.1, 0.9, 0.4, 0.3, 0.8, 0.2, 0.6, 0.7});
  data.labels = {0, 1, 0, 1};
  data.classification = true;
  Localizer loc = Localizer::build_constant(2, 1.0, 5);
  loc.params()->value("delta").fill(0.0);
  CHECK(generalized_partial_r2(d, loc, data, LossKind::CrossEntropy) == 0.0);
}

TEST_CASE("per-instance losses align, sum, and permute") {
  Tensor w({2, 2}, {2.0, -2.0, 1.0, 0.5});
  Tensor b({2}, {0.1, -0.1});
  Predictor d = linear_predictor(w, b, LossKind::CrossEntropy);
  Dataset data;
  data.features = Tensor({3, 2}, {0.1, 0.9, 0.4, 0.3, 0.8, 0.2});
  data.labels = {0, 1, 0};
  data.classification = true;
  Localizer loc = Localizer::build_constant(2, 1.0, 5);

  auto [full, disrupted] = per_instance_losses(d, loc, data, LossKind::CrossEntropy);
  REQUIRE(full.size() == 3);
  REQUIRE(disrupted.size() == 3);
  double sum = 0.0;
  for (double v : full) sum += v;
  CHECK(sum == doctest::Approx(3.0 * mean_loss(d, data, LossKind::CrossEntropy))
                   .epsilon(1e-12));

  Dataset shuffled = data.subset({2, 0, 1});
  auto [pf, pd] = per_instance_losses(d, loc, shuffled, LossKind::CrossEntropy);
  std::vector<double> a = full, b2 = pf;
  std::sort(a.begin(), a.end());
  std::sort(b2.begin(), b2.end());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b2[i]).epsilon(1e-12));
  }
  // the estimator itself is order-invariant
  CHECK(r2_from_losses(pf, pd) == doctest::Approx(r2_from_losses(full, disrupted))
                                      .epsilon(1e-12));
}

TEST_CASE("bootstrap interval indices follow the floor rule") {
  auto [lo, hi] = bootstrap_interval_indices(500, 0.95);
  CHECK(lo == 12);
  CHECK(hi == 487);
  auto [lo2, hi2] = bootstrap_interval_indices(100, 0.999);
  CHECK(lo2 == 1);  // clamped from floor(0.05)=0
  CHECK(hi2 == 99);
}

TEST_CASE("constant losses give a zero-width interval at the point estimate") {
  std::vector<double> full(50, 0.5), disrupted(50, 1.5);
  R2Report r = bootstrap_r2_ci_from_losses(full, disrupted, 2.0, 1.8, 500, 0.95, 9);
  CHECK(r.point_estimate == doctest::Approx(2.0 / 3.0));
  CHECK(r.ci_lower == doctest::Approx(r.point_estimate));
  CHECK(r.ci_upper == doctest::Approx(r.point_estimate));
  CHECK(r.bootstrap_count == 500);
  CHECK(r.ci_level == 0.95);
}

TEST_CASE("fixed seeds reproduce the interval bit-exactly") {
  Rng rng(3);
  std::vector<double> full(80), disrupted(80);
  for (std::size_t i = 0; i < 80; ++i) {
    full[i] = 0.2 + 0.1 * rng.uniform();
    disrupted[i] = 0.8 + 0.5 * rng.uniform();
  }
  R2Report a = bootstrap_r2_ci_from_losses(full, disrupted, 4.0, 3.7, 500, 0.95, 42);
  R2Report b = bootstrap_r2_ci_from_losses(full, disrupted, 4.0, 3.7, 500, 0.95, 42);
  CHECK(a.to_json() == b.to_json());
  R2Report c = bootstrap_r2_ci_from_losses(full, disrupted, 4.0, 3.7, 500, 0.95, 43);
  CHECK(a.to_json() != c.to_json());
}

TEST_CASE("median interval width shrinks when the test set grows 4x") {
  auto widths = [](std::size_t n, std::uint64_t seed) {
    Rng rng(mix_seed(700, seed));
    std::vector<double> full(n), disrupted(n);
    for (std::size_t i = 0; i < n; ++i) {
      full[i] = std::abs(0.3 + 0.2 * rng.normal());
      disrupted[i] = std::abs(1.1 + 0.6 * rng.normal());
    }
    R2Report r =
        bootstrap_r2_ci_from_losses(full, disrupted, 2.0, 2.0, 300, 0.95, seed);
    return r.ci_upper - r.ci_lower;
  };
  std::vector<double> small, big;
  for (std::uint64_t s = 0; s < 20; ++s) {
    small.push_back(widths(60, s));
    big.push_back(widths(240, s));
  }
  std::sort(small.begin(), small.end());
  std::sort(big.begin(), big.end());
  CHECK(big[10] < small[10]);
}

TEST_CASE("instance-wise loss dominance orders r2") {
  Rng rng(15);
  std::vector<double> full(40), d1(40), d2(40);
  for (std::size_t i = 0; i < 40; ++i) {
    full[i] = 0.2 + 0.3 * rng.uniform();
    d1[i] = full[i] + 0.2 * rng.uniform();
    d2[i] = d1[i] + 0.3 * rng.uniform();  // dominates d1 instance-wise
  }
  CHECK(r2_from_losses(full, d2) >= r2_from_losses(full, d1));
}

TEST_CASE("report json carries exactly the documented fields") {
  R2Report r;
  r.point_estimate = 0.5;
  r.tau = 8.0;
  r.empirical_j = 7.5;
  r.ci_lower = 0.4;
  r.ci_upper = 0.6;
  r.ci_level = 0.95;
  r.bootstrap_count = 500;
  R2Report back = R2Report::from_json(r.to_json());
  CHECK(back.point_estimate == 0.5);
  CHECK(back.tau == 8.0);
  CHECK(back.empirical_j == 7.5);
  CHECK(back.ci_lower == 0.4);
  CHECK(back.ci_upper == 0.6);
  CHECK(back.ci_level == 0.95);
  CHECK(back.bootstrap_count == 500);
}
