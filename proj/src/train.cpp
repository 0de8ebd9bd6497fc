#include "dfl/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dfl/rng.hpp"

namespace dfl {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
  if (early_stop_patience < 1 || lr_reduce_patience < 1) {
    throw ConfigError("patience must be >= 1");
  }
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (lr_reduce_factor <= 0.0 || lr_reduce_factor >= 1.0) {
    throw ConfigError("lr reduce factor must lie in (0, 1)");
  }
}

namespace {

std::vector<Tensor> snapshot(const ParameterSet& params) {
  std::vector<Tensor> values;
  values.reserve(params.size());
  for (const auto& e : params.entries()) values.push_back(e.value);
  return values;
}

void restore(ParameterSet& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params.entries()[i].value = values[i];
  }
}

struct BatchPlan {
  std::vector<std::size_t> order;
  std::size_t batch_size;

  std::size_t batches() const {
    return (order.size() + batch_size - 1) / batch_size;
  }
  std::vector<std::size_t> batch(std::size_t b) const {
    std::size_t start = b * batch_size;
    std::size_t end = std::min(start + batch_size, order.size());
    return {order.begin() + start, order.begin() + end};
  }
};

double mean_of(const Tensor& t) {
  return t.sum() / static_cast<double>(t.numel());
}

// Evaluates mean loss of a loss-vector node over a dataset in eval batches.
double dataset_mean_loss(Executor& exec, const Dataset& data) {
  double total = 0.0;
  const std::size_t batch = 256;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::size_t end = std::min(start + batch, data.size());
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Dataset piece = data.subset(idx);
    const Tensor& lv = exec.forward(
        {{"x", piece.features}, {"y", label_tensor(piece)}});
    total += lv.sum();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

Predictor train_predictor(const NetworkSpec& spec, LossKind loss,
                          const Dataset& data, const TrainConfig& cfg,
                          double l1_weight, TrainLog* log) {
  cfg.validate();
  if (l1_weight < 0.0) throw ConfigError("l1 weight must be nonnegative");
  if (data.size() < 2) throw DataError("training needs at least 2 instances");
  std::size_t outputs = shape_numel(spec.output_tail());
  if (loss == LossKind::CrossEntropy) {
    int classes = data.num_classes();
    if (classes < 2) {
      throw DataError("classification training needs >= 2 classes, got " +
                      std::to_string(classes));
    }
    if (outputs != static_cast<std::size_t>(classes)) {
      throw ConfigError("network emits " + std::to_string(outputs) +
                        " scores for " + std::to_string(classes) + " classes");
    }
  }

  auto parts = split(data, {1.0 - cfg.validation_fraction, cfg.validation_fraction},
                     cfg.seed);
  const Dataset& train = parts[0];
  const Dataset& val = parts[1];

  Predictor pred;
  pred.spec = spec;
  pred.loss = loss;
  pred.params = std::make_shared<ParameterSet>();
  spec.init_params(*pred.params, "d.", cfg.seed);

  NodePtr x = placeholder("x");
  NodePtr y = placeholder("y");
  NodePtr scores = spec.build(x, pred.params, "d.");
  NodePtr loss_vec = loss == LossKind::CrossEntropy
                         ? cross_entropy(softmax(scores), y)
                         : squared_error(scores, y);
  NodePtr mean = reduce_mean(loss_vec);
  Executor exec(mean);
  Executor eval_exec(loss_vec);

  OptimizerState opt(cfg.optimizer, cfg.learning_rate, cfg.momentum,
                     cfg.weight_decay);
  PlateauSchedule plateau(cfg.lr_reduce_factor, cfg.lr_reduce_patience);
  EarlyStop stop(cfg.early_stop_patience);
  std::vector<Tensor> best = snapshot(*pred.params);
  double best_monitor = std::numeric_limits<double>::infinity();
  TrainLog local_log;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    BatchPlan plan;
    plan.batch_size = static_cast<std::size_t>(cfg.batch_size);
    plan.order.resize(train.size());
    for (std::size_t i = 0; i < plan.order.size(); ++i) plan.order[i] = i;
    Rng shuffle_rng = Rng::stream(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(plan.order);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < plan.batches(); ++b) {
      Dataset piece = train.subset(plan.batch(b));
      const Tensor& lv =
          exec.forward({{"x", piece.features}, {"y", label_tensor(piece)}});
      double batch_loss = lv[0];
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training loss diverged at epoch " +
                              std::to_string(epoch));
      }
      epoch_loss += batch_loss * static_cast<double>(piece.size());
      GradientMap grads = exec.backward();
      if (l1_weight > 0.0) {
        for (auto& [name, g] : grads) {
          const Tensor& p = pred.params->value(name);
          for (std::size_t i = 0; i < g.numel(); ++i) {
            g[i] += l1_weight * (p[i] > 0.0 ? 1.0 : p[i] < 0.0 ? -1.0 : 0.0);
          }
        }
      }
      opt.step(*pred.params, grads);
    }
    local_log.epoch_objective.push_back(epoch_loss /
                                        static_cast<double>(train.size()));
    local_log.epochs_run = epoch + 1;

    double val_loss = dataset_mean_loss(eval_exec, val);
    double monitor = val_loss;
    if (loss == LossKind::CrossEntropy) {
      monitor = -pred.accuracy(val);  // early stop tracks validation accuracy
    }
    if (monitor < best_monitor - 1e-12) {
      best_monitor = monitor;
      best = snapshot(*pred.params);
    }
    plateau.observe(val_loss, opt);
    if (stop.observe(monitor)) break;
  }
  restore(*pred.params, best);
  local_log.best_monitor = best_monitor;
  pred.params->freeze();
  if (log) *log = local_log;
  return pred;
}

TrainLog train_localizer(const Predictor& d, Localizer& loc, const Dataset& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (!d.params->frozen()) {
    throw FrozenViolationError("localizer training requires a frozen predictor");
  }
  if (data.size() < 2) throw DataError("training needs at least 2 instances");
  data.validate_feature_range();

  auto parts = split(data, {1.0 - cfg.validation_fraction, cfg.validation_fraction},
                     cfg.seed);
  const Dataset& train = parts[0];
  const Dataset& val = parts[1];

  NodePtr x = placeholder("x");
  NodePtr y = placeholder("y");
  NodePtr disrupted = loc.build_disrupted(x);
  NodePtr scores = d.build_scores(disrupted);
  NodePtr loss_vec = d.loss == LossKind::CrossEntropy
                         ? cross_entropy(softmax(scores), y)
                         : squared_error(scores, y);
  // maximize the disrupted risk: descend on its negation
  NodePtr objective = scale(reduce_mean(loss_vec), -1.0);
  Executor exec(objective);
  Executor eval_exec(loss_vec);

  double lr = cfg.learning_rate > 0.0 ? cfg.learning_rate : 10.0 / loc.tau();
  OptimizerState opt(cfg.optimizer, lr, cfg.momentum, cfg.weight_decay);
  PlateauSchedule plateau(cfg.lr_reduce_factor, cfg.lr_reduce_patience);
  EarlyStop stop(cfg.early_stop_patience);
  std::vector<Tensor> best = snapshot(*loc.params());
  double best_monitor = std::numeric_limits<double>::infinity();
  TrainLog log;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    BatchPlan plan;
    plan.batch_size = static_cast<std::size_t>(cfg.batch_size);
    plan.order.resize(train.size());
    for (std::size_t i = 0; i < plan.order.size(); ++i) plan.order[i] = i;
    Rng shuffle_rng = Rng::stream(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(plan.order);

    double epoch_objective = 0.0;
    for (std::size_t b = 0; b < plan.batches(); ++b) {
      Dataset piece = train.subset(plan.batch(b));
      const Tensor& neg =
          exec.forward({{"x", piece.features}, {"y", label_tensor(piece)}});
      if (!std::isfinite(neg[0])) {
        throw DivergenceError("localizer objective diverged at epoch " +
                              std::to_string(epoch));
      }
      epoch_objective += -neg[0] * static_cast<double>(piece.size());
      GradientMap grads = exec.backward();
      for (const auto& [name, g] : grads) {
        if (!loc.params()->contains(name)) {
          throw FrozenViolationError(
              "gradient produced for non-localizer parameter: " + name);
        }
      }
      opt.step(*loc.params(), grads);
      loc.apply_constraints();
    }
    log.epoch_objective.push_back(epoch_objective /
                                  static_cast<double>(train.size()));
    log.epochs_run = epoch + 1;

    // monitored quantity is negated so "no improvement" means "no increase"
    double val_disrupted = dataset_mean_loss(eval_exec, val);
    double monitor = -val_disrupted;
    if (monitor < best_monitor - 1e-12) {
      best_monitor = monitor;
      best = snapshot(*loc.params());
    }
    plateau.observe(monitor, opt);
    if (stop.observe(monitor)) break;
  }
  restore(*loc.params(), best);
  loc.apply_constraints();
  log.best_monitor = best_monitor;
  return log;
}

TauSweepResult sweep_tau_with(const std::vector<double>& grid, double target_r2,
                              bool full_sweep, const TauCellEvaluator& eval) {
  if (grid.empty()) throw ConfigError("empty tau grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) {
      throw ConfigError("tau grid must be strictly increasing");
    }
  }
  if (grid.front() <= 0.0) throw ConfigError("tau grid values must be positive");
  TauSweepResult result;
  result.target_r2 = target_r2;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    TauCell cell = eval(grid[i], i);
    result.grid.push_back(grid[i]);
    result.cells.push_back(cell);
    if (!result.selected_tau && cell.report.point_estimate >= target_r2) {
      result.selected_tau = grid[i];
      if (!full_sweep) break;
    }
  }
  return result;
}

TauCell evaluate_tau_cell(const Predictor& d, const LocalizerFactory& make_loc,
                          const Dataset& train, const Dataset& test, double tau,
                          std::size_t index, const TrainConfig& cfg,
                          int bootstrap_b, double bootstrap_level,
                          std::optional<Localizer>* out_localizer) {
  auto t0 = std::chrono::steady_clock::now();
  Localizer loc = make_loc(tau, mix_seed(cfg.seed, 7700 + index));
  TrainLog log = train_localizer(d, loc, train, cfg);
  R2Report report = bootstrap_r2_ci(d, loc, test, bootstrap_b, bootstrap_level,
                                    cfg.seed, d.loss);
  auto t1 = std::chrono::steady_clock::now();
  TauCell cell;
  cell.report = report;
  cell.epochs_run = log.epochs_run;
  cell.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  if (out_localizer) *out_localizer = std::move(loc);
  return cell;
}

TauSweepResult sweep_tau(const Predictor& d, const LocalizerFactory& make_loc,
                         const Dataset& train, const Dataset& test,
                         const std::vector<double>& grid, double target_r2,
                         const TrainConfig& cfg, int bootstrap_b,
                         double bootstrap_level, bool full_sweep) {
  auto evaluator = [&](double tau, std::size_t index) {
    return evaluate_tau_cell(d, make_loc, train, test, tau, index, cfg,
                             bootstrap_b, bootstrap_level);
  };
  return sweep_tau_with(grid, target_r2, full_sweep, evaluator);
}

std::string TauSweepResult::to_json() const {
  json j;
  j["grid"] = grid;
  j["target_r2"] = target_r2;
  if (selected_tau) {
    j["selected_tau"] = *selected_tau;
  } else {
    j["selected_tau"] = nullptr;
  }
  j["reports"] = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json r = json::parse(cells[i].report.to_json());
    r["epochs_run"] = cells[i].epochs_run;
    j["reports"].push_back(r);
  }
  return j.dump(2);
}

std::string TauSweepResult::to_csv() const {
  std::ostringstream out;
  out << "tau,r2,j_empirical,ci_lower,ci_upper,epochs_run,wall_seconds\n";
  out.precision(17);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const TauCell& c = cells[i];
    out << c.report.tau << "," << c.report.point_estimate << ","
        << c.report.empirical_j << "," << c.report.ci_lower << ","
        << c.report.ci_upper << "," << c.epochs_run << "," << c.wall_seconds
        << "\n";
  }
  return out.str();
}

std::vector<ArchSweepRow> architecture_sweep(
    const Predictor& d,
    const std::vector<std::pair<std::string, CaeConfig>>& configs,
    double fixed_tau, const Dataset& data, const TrainConfig& cfg, int k_folds) {
  if (configs.empty()) throw ConfigError("architecture sweep needs >= 1 config");
  if (k_folds < 2) throw ConfigError("architecture sweep needs k >= 2 folds");
  std::vector<double> fractions(k_folds, 1.0 / k_folds);
  fractions.back() = 1.0 - (k_folds - 1) * (1.0 / k_folds);
  std::vector<Dataset> folds = split(data, fractions, cfg.seed);

  std::vector<ArchSweepRow> rows;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    ArchSweepRow row;
    row.name = configs[c].first;
    try {
      for (int f = 0; f < k_folds; ++f) {
        Dataset train_fold;
        {
          // concatenate every fold but f
          std::vector<Dataset> others;
          std::size_t total = 0;
          for (int g = 0; g < k_folds; ++g) {
            if (g != f) total += folds[g].size();
          }
          Shape shape{total};
          for (auto dshape : data.feature_shape()) shape.push_back(dshape);
          Tensor feat(shape);
          train_fold.classification = data.classification;
          const std::size_t width = data.feature_count();
          std::size_t at = 0;
          for (int g = 0; g < k_folds; ++g) {
            if (g == f) continue;
            std::copy(folds[g].features.data(),
                      folds[g].features.data() + folds[g].features.numel(),
                      feat.data() + at * width);
            for (double y : folds[g].labels) train_fold.labels.push_back(y);
            at += folds[g].size();
          }
          train_fold.features = feat;
        }
        // seeds depend on the fold only, so identical configs get identical rows
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = mix_seed(cfg.seed, 8800 + static_cast<std::uint64_t>(f));
        Localizer loc =
            Localizer::build_cae(configs[c].second, fixed_tau, fold_cfg.seed);
        train_localizer(d, loc, train_fold, fold_cfg);
        row.fold_r2.push_back(
            generalized_partial_r2(d, loc, folds[f], d.loss));
      }
      double mean = 0.0;
      for (double v : row.fold_r2) mean += v;
      mean /= static_cast<double>(row.fold_r2.size());
      double var = 0.0;
      for (double v : row.fold_r2) var += (v - mean) * (v - mean);
      var /= static_cast<double>(row.fold_r2.size());
      row.mean_r2 = mean;
      row.std_r2 = std::sqrt(var);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string arch_sweep_json(const std::vector<ArchSweepRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    json row;
    row["name"] = r.name;
    row["fold_r2"] = r.fold_r2;
    row["mean_r2"] = r.mean_r2;
    row["std_r2"] = r.std_r2;
    if (!r.error.empty()) row["error"] = r.error;
    j.push_back(row);
  }
  return j.dump(2);
}

}  // namespace dfl
