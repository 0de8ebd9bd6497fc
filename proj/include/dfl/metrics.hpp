#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfl/localizer.hpp"
#include "dfl/net.hpp"

namespace dfl {

/// Point estimate of the generalized partial R-squared with its bootstrap
/// confidence interval ("unexplainable" band), the budget, and the realized
/// activity norm.
struct R2Report {
  double point_estimate = 0.0;
  double tau = 0.0;
  double empirical_j = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double ci_level = 0.0;
  int bootstrap_count = 0;

  std::string to_json() const;
  static R2Report from_json(const std::string& text);
};

double mean_loss(const Predictor& d, const Dataset& data, LossKind kind);

/// 1 - sum(full) / sum(disrupted). Negative values are reported as-is; a
/// disrupted-loss sum <= 1e-12 raises DegenerateLossError.
double r2_from_losses(const std::vector<double>& full,
                      const std::vector<double>& disrupted);

/// Cached per-instance losses aligned by index: (full, disrupted).
/// Bootstrap resamples index into these, so the model forwards only once.
std::pair<std::vector<double>, std::vector<double>> per_instance_losses(
    const Predictor& d, const Localizer& loc, const Dataset& data, LossKind kind);

double generalized_partial_r2(const Predictor& d, const Localizer& loc,
                              const Dataset& test, LossKind kind);

/// 1-based ordered-statistic indices floor((1-level)/2 * B) and
/// floor((1+level)/2 * B), clamped to [1, B].
std::pair<std::size_t, std::size_t> bootstrap_interval_indices(int B, double level);

/// Bootstrap over cached loss pairs. Replicate b draws from
/// Rng::stream(seed, b), so replicates are order-independent. Degenerate
/// resamples (zero disrupted loss) are redrawn up to 10 times.
R2Report bootstrap_r2_ci_from_losses(const std::vector<double>& full,
                                     const std::vector<double>& disrupted,
                                     double tau, double empirical_j, int B,
                                     double level, std::uint64_t seed);

/// Requires B >= 100, level in (0,1), and at least 30 test instances.
R2Report bootstrap_r2_ci(const Predictor& d, const Localizer& loc,
                         const Dataset& test, int B, double level,
                         std::uint64_t seed, LossKind kind);

}  // namespace dfl
