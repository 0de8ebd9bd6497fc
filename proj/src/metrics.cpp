#include "dfl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "dfl/rng.hpp"

namespace dfl {

using nlohmann::json;

std::string R2Report::to_json() const {
  json j;
  j["point_estimate"] = point_estimate;
  j["tau"] = tau;
  j["empirical_j"] = empirical_j;
  j["ci_lower"] = ci_lower;
  j["ci_upper"] = ci_upper;
  j["ci_level"] = ci_level;
  j["bootstrap_count"] = bootstrap_count;
  return j.dump(2);
}

R2Report R2Report::from_json(const std::string& text) {
  json j = json::parse(text);
  R2Report r;
  r.point_estimate = j.at("point_estimate").get<double>();
  r.tau = j.at("tau").get<double>();
  r.empirical_j = j.at("empirical_j").get<double>();
  r.ci_lower = j.at("ci_lower").get<double>();
  r.ci_upper = j.at("ci_upper").get<double>();
  r.ci_level = j.at("ci_level").get<double>();
  r.bootstrap_count = j.at("bootstrap_count").get<int>();
  return r;
}

double mean_loss(const Predictor& d, const Dataset& data, LossKind kind) {
  if (data.size() == 0) throw DataError("mean_loss of empty dataset");
  std::vector<double> losses = d.instance_losses(data, kind);
  double s = 0.0;
  for (double v : losses) s += v;
  return s / static_cast<double>(losses.size());
}

double r2_from_losses(const std::vector<double>& full,
                      const std::vector<double>& disrupted) {
  if (full.empty() || full.size() != disrupted.size()) {
    throw DataError("loss sequences must be nonempty and aligned");
  }
  double sf = 0.0, sd = 0.0;
  for (double v : full) sf += v;
  for (double v : disrupted) sd += v;
  if (sd <= 1e-12) {
    throw DegenerateLossError(
        "disrupted loss sum <= 1e-12: degenerate predictor/localizer pair");
  }
  return 1.0 - sf / sd;
}

std::pair<std::vector<double>, std::vector<double>> per_instance_losses(
    const Predictor& d, const Localizer& loc, const Dataset& data, LossKind kind) {
  if (data.size() == 0) throw DataError("per_instance_losses of empty dataset");
  std::vector<double> full = d.instance_losses(data, kind);
  LocalizeResult r = loc.localize(data.features);
  Dataset disrupted_data = data;
  disrupted_data.features = r.disrupted;
  std::vector<double> disrupted = d.instance_losses(disrupted_data, kind);
  return {std::move(full), std::move(disrupted)};
}

double generalized_partial_r2(const Predictor& d, const Localizer& loc,
                              const Dataset& test, LossKind kind) {
  auto [full, disrupted] = per_instance_losses(d, loc, test, kind);
  return r2_from_losses(full, disrupted);
}

std::pair<std::size_t, std::size_t> bootstrap_interval_indices(int B, double level) {
  auto clamp = [B](double v) {
    auto idx = static_cast<long>(std::floor(v));
    idx = std::max(idx, 1L);
    idx = std::min(idx, static_cast<long>(B));
    return static_cast<std::size_t>(idx);
  };
  return {clamp((1.0 - level) / 2.0 * B), clamp((1.0 + level) / 2.0 * B)};
}

R2Report bootstrap_r2_ci_from_losses(const std::vector<double>& full,
                                     const std::vector<double>& disrupted,
                                     double tau, double empirical_j, int B,
                                     double level, std::uint64_t seed) {
  if (B < 100) throw ConfigError("bootstrap count must be >= 100");
  if (level <= 0.0 || level >= 1.0) throw ConfigError("ci level must lie in (0,1)");
  const std::size_t n = full.size();
  if (n != disrupted.size() || n == 0) {
    throw DataError("loss sequences must be nonempty and aligned");
  }
  R2Report report;
  report.point_estimate = r2_from_losses(full, disrupted);
  report.tau = tau;
  report.empirical_j = empirical_j;
  report.ci_level = level;
  report.bootstrap_count = B;

  std::vector<double> estimates(B);
  for (int b = 0; b < B; ++b) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b) + 1);
    double r2 = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
      double sf = 0.0, sd = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = rng.index(n);
        sf += full[k];
        sd += disrupted[k];
      }
      if (sd > 1e-12) {
        r2 = 1.0 - sf / sd;
        ok = true;
      }
    }
    if (!ok) {
      throw DegenerateLossError("bootstrap replicate " + std::to_string(b + 1) +
                                " degenerate after 10 redraws");
    }
    estimates[b] = r2;
  }
  std::sort(estimates.begin(), estimates.end());
  auto [lo, hi] = bootstrap_interval_indices(B, level);
  report.ci_lower = estimates[lo - 1];
  report.ci_upper = estimates[hi - 1];
  return report;
}

R2Report bootstrap_r2_ci(const Predictor& d, const Localizer& loc,
                         const Dataset& test, int B, double level,
                         std::uint64_t seed, LossKind kind) {
  if (test.size() < 30) {
    throw DataError("bootstrap needs a test set of at least 30 instances");
  }
  auto [full, disrupted] = per_instance_losses(d, loc, test, kind);
  double j = loc.empirical_activity_norm(test);
  return bootstrap_r2_ci_from_losses(full, disrupted, loc.tau(), j, B, level, seed);
}

}  // namespace dfl
