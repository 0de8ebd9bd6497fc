#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dfl/errors.hpp"

namespace dfl {

/// y = x' beta + noise.
struct LinearModel {
  std::vector<double> beta;
};

/// Piecewise linear regression: disjoint regions with one coefficient
/// vector each; every input must fall in exactly one region.
struct PiecewiseLinearModel {
  using Predicate = std::function<bool(std::span<const double>)>;
  std::vector<Predicate> regions;
  std::vector<std::vector<double>> betas;

  std::size_t region_of(std::span<const double> x) const;
};

/// Greedy closed-form maximizer of the disrupted squared risk under
/// ||delta||_1 <= tau, ||delta||_inf <= 1: sign(beta_j) on the floor(tau)
/// largest |beta_j|, the fractional remainder at the boundary rank, else 0.
/// |beta| ties at the boundary raise TieError (the formula is ill-defined
/// there); zero coefficients always get 0.
std::vector<double> greedy_linear_delta(const std::vector<double>& beta,
                                        double tau);

/// Lemma-split applied independently per region.
std::vector<std::vector<double>> greedy_piecewise_delta(
    const PiecewiseLinearModel& model, double tau);

/// Exhaustive maximizer of sum_j |delta_j beta_j| over the grid
/// {0, step, ..., 1} of |delta_j| with the budget discretized to
/// floor(tau/step) units (dynamic program over budget units, exact on the
/// grid). Independent of the greedy formula. Requires p <= 6, step <= 0.05.
std::vector<double> brute_force_linear_delta(const std::vector<double>& beta,
                                             double tau, double grid_step);

/// sum_j |delta_j beta_j|, the reduced objective both maximizers optimize.
double linear_disruption_objective(const std::vector<double>& beta,
                                   const std::vector<double>& delta);

}  // namespace dfl
