#include "dfl/optim.hpp"

#include <cmath>

namespace dfl {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "sgdw" || s == "sgd-momentum-weight-decay") {
    return OptimizerKind::SgdMomentumWeightDecay;
  }
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd:
      return "sgd";
    case OptimizerKind::SgdMomentumWeightDecay:
      return "sgdw";
    case OptimizerKind::Adam:
      return "adam";
  }
  return "?";
}

OptimizerState::OptimizerState(OptimizerKind kind, double learning_rate,
                               double momentum, double weight_decay)
    : kind_(kind),
      learning_rate_(learning_rate),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
}

void OptimizerState::set_learning_rate(double lr) {
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  learning_rate_ = lr;
}

void OptimizerState::step(ParameterSet& params, const GradientMap& grads) {
  if (params.frozen() && !grads.empty()) {
    throw FrozenViolationError(
        "optimizer step received gradients for a frozen parameter set");
  }
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) {
      throw ConfigError("gradient for unknown parameter: " + name);
    }
    if (!params.trainable(name)) {
      throw FrozenViolationError("gradient applied to frozen parameter: " + name);
    }
  }
  ++step_count_;
  for (auto& e : params.entries()) {
    if (!e.trainable || params.frozen()) continue;
    auto it = grads.find(e.name);
    if (it == grads.end()) {
      throw MissingGradientError("missing gradient for trainable parameter: " +
                                 e.name);
    }
    const Tensor& g = it->second;
    check_same_shape(e.value, g, "optimizer_step");
    Tensor& p = e.value;
    switch (kind_) {
      case OptimizerKind::Sgd: {
        for (std::size_t i = 0; i < p.numel(); ++i) {
          p[i] -= learning_rate_ * g[i];
        }
        break;
      }
      case OptimizerKind::SgdMomentumWeightDecay: {
        auto [vit, fresh] = velocity_.try_emplace(e.name, p.shape());
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
          v[i] = momentum_ * v[i] + g[i];
          // decoupled decay: shrink the parameter directly
          p[i] -= learning_rate_ * v[i] + learning_rate_ * weight_decay_ * p[i];
        }
        break;
      }
      case OptimizerKind::Adam: {
        auto [mit, mf] = adam_m_.try_emplace(e.name, p.shape());
        auto [vit, vf] = adam_v_.try_emplace(e.name, p.shape());
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        double t = static_cast<double>(step_count_);
        double bc1 = 1.0 - std::pow(adam_beta1, t);
        double bc2 = 1.0 - std::pow(adam_beta2, t);
        for (std::size_t i = 0; i < p.numel(); ++i) {
          m[i] = adam_beta1 * m[i] + (1.0 - adam_beta1) * g[i];
          v[i] = adam_beta2 * v[i] + (1.0 - adam_beta2) * g[i] * g[i];
          double mhat = m[i] / bc1;
          double vhat = v[i] / bc2;
          p[i] -= learning_rate_ * mhat / (std::sqrt(vhat) + adam_epsilon);
        }
        break;
      }
    }
  }
}

bool PlateauSchedule::observe(double monitored, OptimizerState& opt) {
  if (!has_best_ || monitored < best_ - 1e-12) {
    best_ = monitored;
    has_best_ = true;
    stall_ = 0;
    return false;
  }
  if (++stall_ >= patience_) {
    opt.set_learning_rate(opt.learning_rate() * factor_);
    stall_ = 0;
    return true;
  }
  return false;
}

bool EarlyStop::observe(double monitored) {
  ++epoch_;
  if (!has_best_ || monitored < best_ - 1e-12) {
    best_ = monitored;
    has_best_ = true;
    best_epoch_ = epoch_;
    stall_ = 0;
    return false;
  }
  return ++stall_ >= patience_;
}

}  // namespace dfl
