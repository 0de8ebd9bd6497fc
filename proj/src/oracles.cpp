#include "dfl/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace dfl {

std::size_t PiecewiseLinearModel::region_of(std::span<const double> x) const {
  std::size_t hit = regions.size();
  for (std::size_t v = 0; v < regions.size(); ++v) {
    if (regions[v](x)) {
      if (hit != regions.size()) {
        throw DataError("piecewise model regions overlap at an input");
      }
      hit = v;
    }
  }
  if (hit == regions.size()) {
    throw DataError("input belongs to no piecewise region");
  }
  return hit;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; }

void check_boundary_ties(const std::vector<double>& beta, std::size_t floor_tau,
                         double frac) {
  // group indices by |beta| and flag groups whose members would straddle the
  // floor(tau) rank or share the fractional slot
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < beta.size(); ++j) {
    groups[std::abs(beta[j])].push_back(j);
  }
  for (const auto& [mag, members] : groups) {
    if (mag == 0.0) continue;  // zeros are pinned to 0 regardless
    std::size_t larger = 0;
    for (std::size_t j = 0; j < beta.size(); ++j) {
      if (std::abs(beta[j]) > mag) ++larger;
    }
    bool straddles = larger < floor_tau && larger + members.size() > floor_tau;
    bool frac_shared = larger == floor_tau && members.size() > 1 && frac > 0.0;
    if (straddles || frac_shared) {
      std::string what = "|beta| tie at the budget boundary (rank " +
                         std::to_string(floor_tau) + "): indices";
      for (std::size_t j : members) what += " " + std::to_string(j);
      throw TieError(what, members);
    }
  }
}

}  // namespace

std::vector<double> greedy_linear_delta(const std::vector<double>& beta,
                                        double tau) {
  const std::size_t p = beta.size();
  if (p == 0) throw ConfigError("empty coefficient vector");
  if (!(tau > 0.0) || tau > static_cast<double>(p)) {
    throw ConfigError("tau must lie in (0, p]");
  }
  auto floor_tau = static_cast<std::size_t>(std::floor(tau));
  double frac = tau - static_cast<double>(floor_tau);
  check_boundary_ties(beta, floor_tau, frac);

  std::vector<double> delta(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    std::size_t larger = 0;
    for (std::size_t i = 0; i < p; ++i) {
      if (std::abs(beta[i]) > std::abs(beta[j])) ++larger;
    }
    if (larger < floor_tau) {
      delta[j] = sign(beta[j]);
    } else if (larger == floor_tau) {
      delta[j] = frac * sign(beta[j]);
    }
  }
  return delta;
}

std::vector<std::vector<double>> greedy_piecewise_delta(
    const PiecewiseLinearModel& model, double tau) {
  if (model.betas.empty()) throw ConfigError("piecewise model has no regions");
  std::vector<std::vector<double>> deltas;
  deltas.reserve(model.betas.size());
  for (std::size_t v = 0; v < model.betas.size(); ++v) {
    try {
      deltas.push_back(greedy_linear_delta(model.betas[v], tau));
    } catch (const TieError& e) {
      throw TieError("region " + std::to_string(v) + ": " + e.what(),
                     e.tied_indices);
    }
  }
  return deltas;
}

std::vector<double> brute_force_linear_delta(const std::vector<double>& beta,
                                             double tau, double grid_step) {
  const std::size_t p = beta.size();
  if (p == 0) throw ConfigError("empty coefficient vector");
  if (p > 6) {
    throw ConfigError("brute-force oracle limited to p <= 6, got p = " +
                      std::to_string(p));
  }
  if (!(grid_step > 0.0) || grid_step > 0.05) {
    throw ConfigError("grid step must lie in (0, 0.05]");
  }
  if (!(tau > 0.0) || tau > static_cast<double>(p)) {
    throw ConfigError("tau must lie in (0, p]");
  }
  const auto per_coord = static_cast<std::size_t>(std::llround(1.0 / grid_step));
  const auto budget =
      static_cast<std::size_t>(std::floor(tau / grid_step + 1e-9));

  // best[b]: max objective using the first j coordinates and b budget units;
  // choice[j][b]: units assigned to coordinate j at the optimum.
  std::vector<double> best(budget + 1, 0.0);
  std::vector<std::vector<std::size_t>> choice(
      p, std::vector<std::size_t>(budget + 1, 0));
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> next(budget + 1, 0.0);
    double gain = std::abs(beta[j]) * grid_step;
    for (std::size_t b = 0; b <= budget; ++b) {
      double bv = -1.0;
      std::size_t bk = 0;
      std::size_t kmax = std::min(per_coord, b);
      for (std::size_t k = 0; k <= kmax; ++k) {
        double v = best[b - k] + gain * static_cast<double>(k);
        if (v > bv + 1e-15) {  // strictly better only: ties keep k = 0
          bv = v;
          bk = k;
        }
      }
      next[b] = bv;
      choice[j][b] = bk;
    }
    best = std::move(next);
  }

  std::vector<double> delta(p, 0.0);
  std::size_t b = budget;
  for (std::size_t j = p; j-- > 0;) {
    std::size_t k = choice[j][b];
    delta[j] = sign(beta[j]) * grid_step * static_cast<double>(k);
    b -= k;
  }
  return delta;
}

double linear_disruption_objective(const std::vector<double>& beta,
                                   const std::vector<double>& delta) {
  if (beta.size() != delta.size()) {
    throw ConfigError("beta and delta dimensions differ");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j) {
    s += std::abs(delta[j] * beta[j]);
  }
  return s;
}

}  // namespace dfl
