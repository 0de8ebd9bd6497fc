#include "dfl/synth.hpp"

#include <algorithm>
#include <cmath>

#include "dfl/rng.hpp"

namespace dfl {
namespace {

struct Point {
  double x, y;
};

double dist_to_segment(Point p, Point a, Point b) {
  double vx = b.x - a.x, vy = b.y - a.y;
  double wx = p.x - a.x, wy = p.y - a.y;
  double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

double dist_to_circle(Point p, Point c, double r) {
  double dx = p.x - c.x, dy = p.y - c.y;
  return std::abs(std::sqrt(dx * dx + dy * dy) - r);
}

struct Stroke {
  enum class Kind { Segment, Circle } kind;
  Point a, b;      // segment ends / circle center in a
  double r = 0.0;  // circle radius
};

void render(Tensor& out, std::size_t index, const std::vector<Stroke>& strokes,
            double width, double intensity, Rng& rng) {
  double* img = out.data() + index * 28 * 28;
  for (int row = 0; row < 28; ++row) {
    for (int col = 0; col < 28; ++col) {
      Point p{static_cast<double>(col), static_cast<double>(row)};
      double best = 1e9;
      for (const auto& s : strokes) {
        double d = s.kind == Stroke::Kind::Segment ? dist_to_segment(p, s.a, s.b)
                                                   : dist_to_circle(p, s.a, s.r);
        best = std::min(best, d);
      }
      double v = intensity * std::exp(-best * best / (2.0 * width * width));
      v += 0.02 * rng.uniform();  // sensor-style floor noise
      img[row * 28 + col] = std::clamp(v, 0.0, 1.0);
    }
  }
}

}  // namespace

Dataset synth_digits(std::size_t n, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xd161));
  Dataset data;
  data.features = Tensor({n, 28, 28});
  data.labels.reserve(n);
  data.classification = true;
  data.class_names = {{1, "one"}, {7, "seven"}, {9, "nine"}};
  for (std::size_t i = 0; i < n; ++i) {
    int cls = 0;
    double u = rng.uniform();
    // mostly 7s and 9s with a small slice of 1s so class filtering has work
    cls = u < 0.45 ? 7 : u < 0.9 ? 9 : 1;
    double cx = 13.5 + rng.uniform(-2.0, 2.0);
    double cy = 13.5 + rng.uniform(-1.5, 1.5);
    double slant = rng.uniform(-0.15, 0.15);
    double width = rng.uniform(0.8, 1.25);
    double intensity = rng.uniform(0.75, 1.0);
    std::vector<Stroke> strokes;
    if (cls == 7) {
      Point tl{cx - 5 + slant * 8, cy - 8};
      Point tr{cx + 5 + slant * 8, cy - 7.2};
      Point bottom{cx - 2 - slant * 6, cy + 9};
      strokes.push_back({Stroke::Kind::Segment, tl, tr});
      strokes.push_back({Stroke::Kind::Segment, tr, bottom});
    } else if (cls == 9) {
      Point loop{cx - 0.5, cy - 4.2};
      double r = rng.uniform(3.4, 4.4);
      strokes.push_back({Stroke::Kind::Circle, loop, {}, r});
      Point tail_top{loop.x + r, loop.y + 0.3};
      Point tail_bot{loop.x + r - 2.0 - slant * 6, cy + 9};
      strokes.push_back({Stroke::Kind::Segment, tail_top, tail_bot});
    } else {
      Point top{cx + slant * 8, cy - 8.5};
      Point bot{cx - slant * 8, cy + 8.5};
      strokes.push_back({Stroke::Kind::Segment, top, bot});
    }
    render(data.features, i, strokes, width, intensity, rng);
    data.labels.push_back(cls);
  }
  return data;
}

void write_digit_idx_files(const Dataset& digits, const std::string& images_path,
                           const std::string& labels_path) {
  write_idx_file(digits.features, images_path);
  Tensor labels({digits.size()});
  for (std::size_t i = 0; i < digits.size(); ++i) {
    labels[i] = digits.labels[i] / 255.0;  // serializer scales back to bytes
  }
  write_idx_file(labels, labels_path);
}

Dataset synth_sequences(std::size_t n, std::size_t length, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5e9));
  Dataset data;
  data.features = Tensor({n, length});
  data.labels.reserve(n);
  data.classification = true;
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i < n; ++i) {
    int cls = rng.uniform() < 0.5 ? 0 : 1;
    double phase = rng.uniform(0.0, 2.0 * pi);
    double amp = rng.uniform(0.15, 0.25);
    double* row = data.features.data() + i * length;
    for (std::size_t t = 0; t < length; ++t) {
      double u = static_cast<double>(t) / static_cast<double>(length);
      row[t] = 0.45 + amp * std::sin(2.0 * pi * u + phase) +
               0.05 * std::sin(6.0 * pi * u + 2.0 * phase);
    }
    // class-dependent bump motif with per-instance position jitter
    double center = (cls == 0 ? 0.3 : 0.62) + rng.uniform(-0.08, 0.08);
    double sigma = (cls == 0 ? 0.018 : 0.03) * static_cast<double>(length);
    double height = rng.uniform(0.35, 0.5) * (cls == 0 ? 1.0 : -0.9);
    double mu = center * static_cast<double>(length);
    for (std::size_t t = 0; t < length; ++t) {
      double d = (static_cast<double>(t) - mu) / sigma;
      row[t] += height * std::exp(-0.5 * d * d);
      row[t] += 0.01 * rng.normal();
      row[t] = std::clamp(row[t], 0.0, 1.0);
    }
    data.labels.push_back(cls);
  }
  return data;
}

Dataset synth_tabular(std::size_t n, std::size_t p, std::size_t informative,
                      std::uint64_t seed) {
  if (informative > p) throw ConfigError("more informative features than features");
  Rng rng(mix_seed(seed, 0x7ab));
  Dataset data;
  data.features = Tensor({n, p});
  data.labels.reserve(n);
  data.classification = true;
  for (std::size_t i = 0; i < n; ++i) {
    int cls = rng.uniform() < 0.5 ? 0 : 1;
    double dir = cls == 0 ? -1.0 : 1.0;
    double* row = data.features.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      if (j < informative) {
        double shift = 0.30 - 0.05 * static_cast<double>(j);
        row[j] = std::clamp(0.5 + 0.5 * dir * shift + 0.16 * rng.normal(), 0.0, 1.0);
      } else {
        row[j] = rng.uniform();
      }
    }
    data.labels.push_back(cls);
  }
  return data;
}

Dataset synth_linear_regression(std::size_t n, const std::vector<double>& beta,
                                double noise_sd, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x11e));
  const std::size_t p = beta.size();
  Dataset data;
  data.features = Tensor({n, p});
  data.labels.reserve(n);
  data.classification = false;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = data.features.data() + i * p;
    double y = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      row[j] = rng.uniform();
      y += row[j] * beta[j];
    }
    data.labels.push_back(y + noise_sd * rng.normal());
  }
  return data;
}

}  // namespace dfl
