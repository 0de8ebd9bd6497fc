#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dfl/params.hpp"

namespace dfl {

enum class OptimizerKind { Sgd, SgdMomentumWeightDecay, Adam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

/// Optimizer state: rule, hyperparameters, and per-parameter moments.
/// learning_rate is mutable so plateau schedules can shrink it in place.
class OptimizerState {
 public:
  OptimizerState(OptimizerKind kind, double learning_rate, double momentum = 0.0,
                 double weight_decay = 0.0);

  /// Applies one update. Requires a gradient for every trainable parameter;
  /// rejects gradients aimed at frozen sets or unknown names.
  void step(ParameterSet& params, const GradientMap& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr);
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }
  std::uint64_t step_count() const { return step_count_; }

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

 private:
  OptimizerKind kind_;
  double learning_rate_;
  double momentum_;
  double weight_decay_;
  std::uint64_t step_count_ = 0;
  std::map<std::string, Tensor> velocity_;
  std::map<std::string, Tensor> adam_m_;
  std::map<std::string, Tensor> adam_v_;
};

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without improvement of the monitored value (lower is better).
class PlateauSchedule {
 public:
  PlateauSchedule(double factor, int patience)
      : factor_(factor), patience_(patience) {}

  /// Returns true when the rate was just reduced.
  bool observe(double monitored, OptimizerState& opt);

 private:
  double factor_;
  int patience_;
  double best_ = 0.0;
  bool has_best_ = false;
  int stall_ = 0;
};

/// Stops after `patience` consecutive epochs without improvement
/// (lower is better); remembers which epoch was best.
class EarlyStop {
 public:
  explicit EarlyStop(int patience) : patience_(patience) {}

  /// Returns true when training should stop.
  bool observe(double monitored);
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }

 private:
  int patience_;
  double best_ = 0.0;
  bool has_best_ = false;
  int stall_ = 0;
  int epoch_ = -1;
  int best_epoch_ = -1;
};

}  // namespace dfl
