#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dfl/metrics.hpp"
#include "dfl/optim.hpp"

namespace dfl {

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 0.001;  // localizer: <= 0 means the 10/tau rule
  double momentum = 0.0;
  double weight_decay = 0.0;
  int max_epochs = 100;
  int batch_size = 64;
  double validation_fraction = 0.2;
  int early_stop_patience = 10;
  double lr_reduce_factor = 0.382;
  int lr_reduce_patience = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainLog {
  std::vector<double> epoch_objective;  // train-split objective per epoch
  int epochs_run = 0;
  double best_monitor = 0.0;
};

/// Trains a predictor with an L1 penalty of the given weight on every
/// parameter, early stopping on validation accuracy (classification) or
/// validation loss (regression). Parameters come back frozen.
Predictor train_predictor(const NetworkSpec& spec, LossKind loss,
                          const Dataset& data, const TrainConfig& cfg,
                          double l1_weight, TrainLog* log = nullptr);

/// Maximizes the disrupted empirical risk of the frozen predictor by
/// gradient ascent on the localizer parameters (descent on the negated
/// objective). Epoch objective is the batchwise mean disrupted loss.
TrainLog train_localizer(const Predictor& d, Localizer& loc, const Dataset& train,
                         const TrainConfig& cfg);

struct TauCell {
  R2Report report;
  int epochs_run = 0;
  double wall_seconds = 0.0;  // excluded from report JSON
};

struct TauSweepResult {
  std::vector<double> grid;          // attempted cells, ascending
  std::vector<TauCell> cells;        // aligned with grid
  std::optional<double> selected_tau;
  double target_r2 = 0.0;

  std::string to_json() const;
  std::string to_csv() const;
};

using TauCellEvaluator = std::function<TauCell(double tau, std::size_t index)>;

/// Grid search core: evaluates cells ascending, selects the smallest tau
/// whose point estimate reaches the target, stops there unless full_sweep.
/// Grid exhaustion leaves selected_tau empty (an outcome, not an error).
TauSweepResult sweep_tau_with(const std::vector<double>& grid, double target_r2,
                              bool full_sweep, const TauCellEvaluator& eval);

using LocalizerFactory = std::function<Localizer(double tau, std::uint64_t seed)>;

/// Trains one fresh localizer at `tau` (cell seed derived from cfg.seed and
/// the grid index) and evaluates it on the test split. One cell is one
/// independent job; parallel sweeps own one localizer per job.
TauCell evaluate_tau_cell(const Predictor& d, const LocalizerFactory& make_loc,
                          const Dataset& train, const Dataset& test, double tau,
                          std::size_t index, const TrainConfig& cfg,
                          int bootstrap_b, double bootstrap_level,
                          std::optional<Localizer>* out_localizer = nullptr);

TauSweepResult sweep_tau(const Predictor& d, const LocalizerFactory& make_loc,
                         const Dataset& train, const Dataset& test,
                         const std::vector<double>& grid, double target_r2,
                         const TrainConfig& cfg, int bootstrap_b,
                         double bootstrap_level, bool full_sweep = false);

struct ArchSweepRow {
  std::string name;
  std::vector<double> fold_r2;
  double mean_r2 = 0.0;
  double std_r2 = 0.0;
  std::string error;  // per-cell failures are recorded, not fatal

  bool ok() const { return error.empty(); }
};

/// k-fold cross-validated R-squared per architecture at a fixed budget.
std::vector<ArchSweepRow> architecture_sweep(
    const Predictor& d,
    const std::vector<std::pair<std::string, CaeConfig>>& configs,
    double fixed_tau, const Dataset& data, const TrainConfig& cfg, int k_folds);

std::string arch_sweep_json(const std::vector<ArchSweepRow>& rows);

}  // namespace dfl
