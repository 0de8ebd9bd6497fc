#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "dfl/checkpoint.hpp"
#include "dfl/oracles.hpp"
#include "dfl/synth.hpp"
#include "dfl/train.hpp"

using namespace dfl;

namespace {

TauCellEvaluator stub_evaluator(const std::map<double, double>& table) {
  return [table](double tau, std::size_t) {
    TauCell cell;
    cell.report.tau = tau;
    cell.report.point_estimate = table.at(tau);
    return cell;
  };
}

}  // namespace

TEST_CASE("sweep selects the smallest qualifying tau") {
  std::map<double, double> table{{4.0, 0.2}, {6.0, 0.55}, {8.0, 0.7}};
  TauSweepResult r = sweep_tau_with({4, 6, 8}, 0.5, false, stub_evaluator(table));
  REQUIRE(r.selected_tau.has_value());
  CHECK(*r.selected_tau == 6.0);
  CHECK(r.grid.size() == 2);  // stopped at first success

  TauSweepResult full = sweep_tau_with({4, 6, 8}, 0.5, true, stub_evaluator(table));
  CHECK(*full.selected_tau == 6.0);
  CHECK(full.grid.size() == 3);  // full sweep evaluates everything
}

TEST_CASE("unreachable targets leave the selection empty") {
  std::map<double, double> table{{4.0, 0.2}, {6.0, 0.55}, {8.0, 0.7}};
  TauSweepResult r = sweep_tau_with({4, 6, 8}, 0.9, false, stub_evaluator(table));
  CHECK_FALSE(r.selected_tau.has_value());
  CHECK(r.grid.size() == 3);
}

TEST_CASE("minimality holds over random stub tables") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> grid;
    std::map<double, double> table;
    double tau = 0.0;
    std::size_t cells = 3 + rng.index(6);
    for (std::size_t i = 0; i < cells; ++i) {
      tau += rng.uniform(0.5, 3.0);
      grid.push_back(tau);
      table[tau] = rng.uniform(-0.2, 1.0);
    }
    double target = rng.uniform(0.0, 0.9);
    TauSweepResult r = sweep_tau_with(grid, target, true, stub_evaluator(table));
    double expected = -1.0;
    for (double g : grid) {
      if (table[g] >= target) {
        expected = g;
        break;
      }
    }
    CAPTURE(trial);
    if (expected < 0) {
      CHECK_FALSE(r.selected_tau.has_value());
    } else {
      REQUIRE(r.selected_tau.has_value());
      CHECK(*r.selected_tau == expected);
      // every smaller grid point fell short
      for (double g : grid) {
        if (g < expected) CHECK(table[g] < target);
      }
    }
  }
}

TEST_CASE("sweep rejects bad grids") {
  auto eval = stub_evaluator({{1.0, 0.5}});
  CHECK_THROWS_AS(sweep_tau_with({}, 0.5, false, eval), ConfigError);
  CHECK_THROWS_AS(sweep_tau_with({2.0, 1.0}, 0.5, false, eval), ConfigError);
}

TEST_CASE("linearly separable data trains to high accuracy") {
  Dataset data = synth_tabular(400, 6, 3, 21);
  // widen the class gap so the problem is separable
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double dir = data.labels[i] == 0 ? -1.0 : 1.0;
      data.features[i * 6 + j] =
          std::min(std::max(0.5 + dir * 0.35 + 0.02 * ((i * 7 % 13) / 13.0 - 0.5),
                            0.0),
                   1.0);
    }
  }
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 40;
  cfg.batch_size = 32;
  cfg.early_stop_patience = 10;
  cfg.seed = 5;
  Predictor d = train_predictor(preset_network("mlp", {6}, 2),
                                LossKind::CrossEntropy, data, cfg, 0.0);
  CHECK(d.accuracy(data) >= 0.99);
  CHECK(d.params->frozen());
}

TEST_CASE("l1 penalty shrinks weights toward zero") {
  Dataset data = synth_tabular(300, 8, 2, 33);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 25;
  cfg.batch_size = 32;
  cfg.seed = 6;
  Predictor plain = train_predictor(preset_network("linear", {8}, 2),
                                    LossKind::CrossEntropy, data, cfg, 0.0);
  Predictor penalized = train_predictor(preset_network("linear", {8}, 2),
                                        LossKind::CrossEntropy, data, cfg, 0.05);
  double plain_l1 = 0.0, pen_l1 = 0.0;
  for (const auto& e : plain.params->entries()) plain_l1 += e.value.abs_sum();
  for (const auto& e : penalized.params->entries()) pen_l1 += e.value.abs_sum();
  CHECK(pen_l1 < plain_l1);
}

TEST_CASE("divergent learning rates raise a divergence error") {
  // squared error compounds under a huge step size until it overflows
  // (cross-entropy is clamped and cannot leave the finite range)
  Dataset data = synth_linear_regression(100, {1.0, -2.0, 0.5, 1.5}, 0.1, 3);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 1e12;
  cfg.max_epochs = 30;
  cfg.batch_size = 16;
  cfg.seed = 2;
  CHECK_THROWS_AS(train_predictor(preset_network("linear", {4}, 1),
                                  LossKind::SquaredError, data, cfg, 0.0),
                  Error);
}

TEST_CASE("localizer training never touches the predictor parameters") {
  Dataset data = synth_tabular(240, 6, 2, 13);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 12;
  cfg.batch_size = 32;
  cfg.seed = 7;
  Predictor d = train_predictor(preset_network("mlp", {6}, 2),
                                LossKind::CrossEntropy, data, cfg, 0.0);
  std::string before = encode_checkpoint(*d.params);

  CaeConfig cc;
  cc.input_shape = {6};
  cc.encoder = {{4, 3}};
  cc.hidden = {8};
  cc.decoder = {{4, 3}};
  Localizer loc = Localizer::build_cae(cc, 2.0, 3);
  TrainConfig lcfg = cfg;
  lcfg.optimizer = OptimizerKind::Sgd;
  lcfg.learning_rate = 0.0;  // 10/tau rule
  lcfg.max_epochs = 8;
  TrainLog log = train_localizer(d, loc, data, lcfg);
  CHECK(log.epochs_run >= 1);
  CHECK(encode_checkpoint(*d.params) == before);  // bit-identical

  // an unfrozen predictor is rejected up front
  Predictor thawed = d;
  thawed.params = std::make_shared<ParameterSet>(decode_checkpoint(before));
  Localizer loc2 = Localizer::build_cae(cc, 2.0, 4);
  CHECK_THROWS_AS(train_localizer(thawed, loc2, data, lcfg), FrozenViolationError);
}

TEST_CASE("vanishing budget keeps r2 near zero") {
  Dataset data = synth_tabular(300, 6, 2, 17);
  auto parts = split(data, {0.7, 0.3}, 5);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 15;
  cfg.batch_size = 32;
  cfg.seed = 9;
  Predictor d = train_predictor(preset_network("mlp", {6}, 2),
                                LossKind::CrossEntropy, parts[0], cfg, 0.0);
  CaeConfig cc;
  cc.input_shape = {6};
  cc.encoder = {{4, 3}};
  cc.hidden = {8};
  cc.decoder = {{4, 3}};
  Localizer loc = Localizer::build_cae(cc, 1e-9, 3);
  TrainConfig lcfg = cfg;
  lcfg.optimizer = OptimizerKind::Sgd;
  lcfg.learning_rate = 0.5;  // 10/tau would explode the step size
  lcfg.max_epochs = 4;
  train_localizer(d, loc, parts[0], lcfg);
  double r2 = generalized_partial_r2(d, loc, parts[1], LossKind::CrossEntropy);
  CHECK(std::abs(r2) < 1e-6);
}

TEST_CASE("saturating budget converges to the zero-input loss") {
  Dataset data = synth_tabular(400, 5, 2, 19);
  auto parts = split(data, {0.7, 0.3}, 6);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 20;
  cfg.batch_size = 32;
  cfg.seed = 11;
  Predictor d = train_predictor(preset_network("mlp", {5}, 2),
                                LossKind::CrossEntropy, parts[0], cfg, 0.0);

  CaeConfig cc;
  cc.input_shape = {5};
  cc.encoder = {{4, 3}};
  cc.hidden = {8};
  cc.decoder = {{4, 3}};
  Localizer loc = Localizer::build_cae(cc, 5.0, 3);  // tau = p
  TrainConfig lcfg = cfg;
  lcfg.optimizer = OptimizerKind::Sgd;
  lcfg.learning_rate = 0.0;
  lcfg.max_epochs = 40;
  lcfg.early_stop_patience = 15;
  train_localizer(d, loc, parts[0], lcfg);

  // oracle: evaluate the predictor on all-zero inputs
  Dataset zeros = parts[1];
  zeros.features.fill(0.0);
  double zero_loss = mean_loss(d, zeros, LossKind::CrossEntropy);
  auto [full, disrupted] = per_instance_losses(d, loc, parts[1],
                                               LossKind::CrossEntropy);
  double dloss = 0.0;
  for (double v : disrupted) dloss += v;
  dloss /= static_cast<double>(disrupted.size());
  CHECK(dloss >= 0.85 * zero_loss);
}

TEST_CASE("epoch objective is non-decreasing within tolerance") {
  Dataset data = synth_tabular(300, 6, 3, 23);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 15;
  cfg.batch_size = 32;
  cfg.seed = 13;
  Predictor d = train_predictor(preset_network("mlp", {6}, 2),
                                LossKind::CrossEntropy, data, cfg, 0.0);
  CaeConfig cc;
  cc.input_shape = {6};
  cc.encoder = {{4, 3}};
  cc.hidden = {8};
  cc.decoder = {{4, 3}};
  Localizer loc = Localizer::build_cae(cc, 3.0, 5);
  TrainConfig lcfg = cfg;
  lcfg.optimizer = OptimizerKind::Sgd;
  lcfg.learning_rate = 0.0;
  lcfg.max_epochs = 25;
  TrainLog log = train_localizer(d, loc, data, lcfg);
  // 3-epoch moving average of the maximized objective should not sag
  std::vector<double> ma;
  for (std::size_t i = 2; i < log.epoch_objective.size(); ++i) {
    ma.push_back((log.epoch_objective[i] + log.epoch_objective[i - 1] +
                  log.epoch_objective[i - 2]) /
                 3.0);
  }
  for (std::size_t i = 1; i < ma.size(); ++i) {
    CHECK(ma[i] >= ma[i - 1] - 0.05);
  }
}

TEST_CASE("constant-delta training recovers the greedy coefficients") {
  std::vector<double> beta{2.5, -1.5, 0.8, 1.8, -0.6};
  Dataset data = synth_linear_regression(1200, beta, 0.05, 31);
  // frozen linear predictor with the true coefficients
  Predictor d;
  d.spec.input_shape = {5};
  d.spec.layers = {LayerSpec::dense(1)};
  d.loss = LossKind::SquaredError;
  d.params = std::make_shared<ParameterSet>();
  d.params->add("d.L0.weight", Tensor({5, 1}, beta));
  d.params->add("d.L0.bias", Tensor({1}));
  d.params->freeze();

  double tau = 1.5;
  Localizer loc = Localizer::build_constant(5, tau, 41);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 60;
  cfg.batch_size = 128;
  cfg.early_stop_patience = 60;
  cfg.seed = 51;
  train_localizer(d, loc, data, cfg);

  auto oracle = greedy_linear_delta(beta, tau);
  const Tensor& dv = loc.params()->value("delta");
  // the squared objective is symmetric in the sign of delta; canonicalize
  double align = 0.0;
  for (std::size_t j = 0; j < 5; ++j) align += dv[j] * beta[j];
  double flip = align >= 0 ? 1.0 : -1.0;
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(std::abs(flip * dv[j] - oracle[j]) <= 0.05);
  }
}

TEST_CASE("identical configs and seeds give identical sweep rows") {
  Dataset data = synth_sequences(160, 12, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 8;
  cfg.batch_size = 32;
  cfg.seed = 3;
  Predictor d = train_predictor(preset_network("seq-cnn", {12}, 2),
                                LossKind::CrossEntropy, data, cfg, 0.0);
  CaeConfig cc;
  cc.input_shape = {12};
  cc.encoder = {{4, 3}};
  cc.hidden = {8};
  cc.decoder = {{4, 3}};
  TrainConfig lcfg = cfg;
  lcfg.optimizer = OptimizerKind::Sgd;
  lcfg.learning_rate = 0.0;
  lcfg.max_epochs = 5;
  auto rows = architecture_sweep(d, {{"a", cc}, {"a-again", cc}}, 2.0, data,
                                 lcfg, 3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].ok());
  CHECK(rows[0].fold_r2 == rows[1].fold_r2);
  CHECK(rows[0].mean_r2 == rows[1].mean_r2);
  auto rows2 = architecture_sweep(d, {{"a", cc}}, 2.0, data, lcfg, 3);
  REQUIRE(rows2.size() == 1);  // single config: table with one row
  CHECK(rows[0].fold_r2 == rows2[0].fold_r2);
}
