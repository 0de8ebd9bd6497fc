#include "dfl/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dfl/checkpoint.hpp"

namespace dfl {

using nlohmann::json;

StructuredActivationKind activation_kind_from_string(const std::string& s) {
  if (s == "trelu-softmax") return StructuredActivationKind::TReluSoftmax;
  if (s == "tanh-relu-softmax") return StructuredActivationKind::TanhReluSoftmax;
  throw ConfigError("unknown structured activation: " + s);
}

std::string to_string(StructuredActivationKind kind) {
  return kind == StructuredActivationKind::TReluSoftmax ? "trelu-softmax"
                                                        : "tanh-relu-softmax";
}

Tensor structured_activation(const Tensor& z, double tau,
                             StructuredActivationKind kind) {
  if (tau <= 0.0) throw ConfigError("structured activation requires tau > 0");
  if (!z.all_finite()) throw NonFiniteError("structured_activation: z not finite");
  const std::size_t n = z.rank() <= 1 ? 1 : z.dim(0);
  const std::size_t inner = z.numel() / n;
  Tensor out = z;
  for (std::size_t b = 0; b < n; ++b) {
    double* row = out.data() + b * inner;
    double mx = row[0];
    for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      row[i] = std::exp(row[i] - mx);
      sum += row[i];
    }
    for (std::size_t i = 0; i < inner; ++i) {
      double u = tau * row[i] / sum;
      if (kind == StructuredActivationKind::TReluSoftmax) {
        row[i] = std::min(std::max(u, 0.0), 1.0);
      } else {
        row[i] = std::tanh(std::max(u, 0.0));
      }
    }
  }
  return out;
}

NodePtr structured_activation_node(NodePtr z, double tau,
                                   StructuredActivationKind kind) {
  if (tau <= 0.0) throw ConfigError("structured activation requires tau > 0");
  NodePtr scaled = scale(softmax(std::move(z)), tau);
  if (kind == StructuredActivationKind::TReluSoftmax) return trelu(scaled);
  return tanh_op(relu(scaled));
}

// ---------------------------------------------------------------------------
// CaeConfig
// ---------------------------------------------------------------------------

CaeConfig CaeConfig::default_1d(std::size_t length) {
  CaeConfig c;
  c.input_shape = {length};
  c.encoder = {{16, 3}, {8, 3}};
  c.hidden = {32};
  c.decoder = {{8, 3}, {16, 3}};
  return c;
}

CaeConfig CaeConfig::default_2d(std::size_t height, std::size_t width) {
  CaeConfig c;
  c.input_shape = {height, width};
  c.encoder = {{16, 3}, {8, 3}};
  c.hidden = {32};
  c.decoder = {{8, 3}, {16, 3}};
  return c;
}

CaeConfig CaeConfig::cae_1d(std::size_t length, std::size_t ch, std::size_t k) {
  CaeConfig c;
  c.input_shape = {length};
  c.encoder = {{ch, k}, {ch / 2, k}};
  c.decoder = {{ch / 2, k}, {ch, k}};
  return c;
}

CaeConfig CaeConfig::mlp_1d(std::size_t length, std::size_t w) {
  CaeConfig c;
  c.input_shape = {length};
  c.hidden = {w, w / 2, w / 4, length};
  return c;
}

NetworkSpec CaeConfig::to_network() const {
  if (input_shape.empty() || input_shape.size() > 2) {
    throw ConfigError("CAE input shape must be 1-d or 2-d, got " +
                      shape_str(input_shape));
  }
  for (auto d : input_shape) {
    if (d == 0) throw ConfigError("CAE input dims must be positive");
  }
  const bool twod = input_shape.size() == 2;
  NetworkSpec net;
  net.input_shape = input_shape;
  auto conv = [&](std::size_t f, std::size_t k) {
    return twod ? LayerSpec::conv2d(f, k, Padding::Same, weight_norm)
                : LayerSpec::conv1d(f, k, Padding::Same, weight_norm);
  };
  auto conv_t = [&](std::size_t f, std::size_t k) {
    return twod ? LayerSpec::conv_t2d(f, k, weight_norm)
                : LayerSpec::conv_t1d(f, k, weight_norm);
  };

  for (const auto& [f, k] : encoder) {
    if (f == 0 || k == 0) throw ConfigError("encoder filter counts/sizes must be positive");
    net.layers.push_back(conv(f, k));
    net.layers.push_back(LayerSpec::relu());
  }
  std::size_t enc_channels = encoder.empty() ? 1 : encoder.back().first;
  const std::size_t spatial = shape_numel(input_shape);

  if (!hidden.empty()) {
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      if (hidden[i] == 0) throw ConfigError("hidden widths must be positive");
      net.layers.push_back(LayerSpec::dense(hidden[i], weight_norm));
      bool is_output = decoder.empty() && i + 1 == hidden.size() &&
                       hidden[i] == spatial;
      if (!is_output) net.layers.push_back(LayerSpec::relu());
    }
    if (!decoder.empty()) {
      // back to feature maps for the transposed stack
      net.layers.push_back(LayerSpec::dense(enc_channels * spatial, weight_norm));
      net.layers.push_back(LayerSpec::relu());
      Shape maps{enc_channels};
      for (auto d : input_shape) maps.push_back(d);
      net.layers.push_back(LayerSpec::reshape(maps));
    }
  }

  std::size_t cur_channels = enc_channels;
  if (!decoder.empty()) {
    // reshape handled by the conv walker; record channel trail
    for (std::size_t i = 0; i < decoder.size(); ++i) {
      auto [f, k] = decoder[i];
      if (f == 0 || k == 0) throw ConfigError("decoder filter counts/sizes must be positive");
      net.layers.push_back(conv_t(f, k));
      cur_channels = f;
      bool is_output = i + 1 == decoder.size() && f == 1;
      if (!is_output) net.layers.push_back(LayerSpec::relu());
    }
    if (cur_channels != 1) {
      std::size_t k = decoder.back().second;
      net.layers.push_back(conv_t(1, k));
    }
  } else if (hidden.empty() || hidden.back() != spatial) {
    net.layers.push_back(LayerSpec::dense(spatial, weight_norm));
  }

  // network emits (1, spatial...) or (spatial,); callers reshape to the
  // input shape, so only the element count must reconcile
  Shape tail = net.output_tail();
  if (shape_numel(tail) != spatial) {
    throw ConfigError("CAE stack output " + shape_str(tail) +
                      " cannot reconcile with input " + shape_str(input_shape));
  }
  return net;
}

namespace {

json pairs_to_json(const std::vector<std::pair<std::size_t, std::size_t>>& v) {
  json a = json::array();
  for (const auto& [f, k] : v) a.push_back({f, k});
  return a;
}

std::vector<std::pair<std::size_t, std::size_t>> pairs_from_json(const json& a) {
  std::vector<std::pair<std::size_t, std::size_t>> v;
  for (const auto& e : a) v.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  return v;
}

}  // namespace

std::string CaeConfig::to_json() const {
  json j;
  j["input_shape"] = input_shape;
  j["encoder"] = pairs_to_json(encoder);
  j["hidden"] = hidden;
  j["decoder"] = pairs_to_json(decoder);
  j["activation"] = dfl::to_string(activation);
  j["weight_norm"] = weight_norm;
  return j.dump(2);
}

CaeConfig CaeConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  CaeConfig c;
  c.input_shape = j.at("input_shape").get<Shape>();
  c.encoder = pairs_from_json(j.at("encoder"));
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.decoder = pairs_from_json(j.at("decoder"));
  c.activation = activation_kind_from_string(j.at("activation").get<std::string>());
  c.weight_norm = j.at("weight_norm").get<bool>();
  return c;
}

// ---------------------------------------------------------------------------
// Localizer
// ---------------------------------------------------------------------------

Localizer Localizer::build_cae(const CaeConfig& config, double tau,
                               std::uint64_t seed) {
  if (tau <= 0.0) throw ConfigError("localizer budget tau must be positive");
  Localizer loc;
  loc.head_ = Head::Cae;
  loc.config_ = config;
  loc.network_ = config.to_network();
  loc.params_ = std::make_shared<ParameterSet>();
  loc.network_.init_params(*loc.params_, "cae.", seed);
  loc.tau_ = tau;
  loc.seed_ = seed;
  return loc;
}

Localizer Localizer::build_constant(std::size_t p, double tau, std::uint64_t seed) {
  if (tau <= 0.0) throw ConfigError("localizer budget tau must be positive");
  if (p == 0) throw ConfigError("constant localizer needs p > 0");
  Localizer loc;
  loc.head_ = Head::ConstantDelta;
  loc.p_ = p;
  loc.params_ = std::make_shared<ParameterSet>();
  Rng rng(mix_seed(seed, 0xde1));
  Tensor delta({p});
  for (std::size_t i = 0; i < p; ++i) delta[i] = 0.01 * rng.normal();
  loc.params_->add("delta", std::move(delta));
  loc.tau_ = tau;
  loc.seed_ = seed;
  return loc;
}

void Localizer::validate_input(const Tensor& x, std::size_t* batch) const {
  Shape tail = head_ == Head::Cae ? config_.input_shape : Shape{p_};
  if (x.shape() == tail) {
    *batch = 0;  // single instance
    return;
  }
  Shape xt(x.shape().begin() + (x.rank() > tail.size() ? 1 : 0), x.shape().end());
  if (x.rank() == tail.size() + 1 && xt == tail) {
    *batch = x.dim(0);
    return;
  }
  throw ShapeError("localizer input " + shape_str(x.shape()) +
                   " does not match feature shape " + shape_str(tail));
}

NodePtr Localizer::build_raw_scores(NodePtr x) const {
  if (head_ != Head::Cae) {
    throw ConfigError("raw scores only exist for the CAE head");
  }
  NodePtr z = network_.build(std::move(x), params_, "cae.");
  // collapse any channel axis so scores share the input shape
  return reshape_tail(z, config_.input_shape);
}

NodePtr Localizer::build_pi(NodePtr x) const {
  return structured_activation_node(build_raw_scores(std::move(x)), tau_,
                                    config_.activation);
}

NodePtr Localizer::build_disrupted(NodePtr x) const {
  if (head_ == Head::Cae) {
    NodePtr pi = build_pi(x);
    return sub(x, mul(x, pi));
  }
  return bias_add(x, scale(parameter(params_, "delta"), -1.0));
}

LocalizeResult Localizer::localize(const Tensor& x) const {
  std::size_t batch = 0;
  validate_input(x, &batch);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!(x[i] >= -1e-9 && x[i] <= 1.0 + 1e-9)) {
      throw DataError("localizer input outside [0,1]: value " +
                      std::to_string(x[i]) + " at flat index " + std::to_string(i));
    }
  }
  Tensor xb = x;
  if (batch == 0) {
    Shape s{1};
    for (auto d : x.shape()) s.push_back(d);
    xb = x.reshaped(s);
  }
  LocalizeResult r;
  if (head_ == Head::Cae) {
    NodePtr xph = placeholder("x");
    Executor exec(build_pi(xph));
    r.pi = exec.forward({{"x", xb}});
  } else {
    const Tensor& d = params_->value("delta");
    r.pi = Tensor(xb.shape());
    for (std::size_t i = 0; i < xb.dim(0); ++i) {
      std::copy(d.data(), d.data() + p_, r.pi.data() + i * p_);
    }
  }
  r.delta = Tensor(xb.shape());
  r.disrupted = Tensor(xb.shape());
  if (head_ == Head::Cae) {
    for (std::size_t i = 0; i < xb.numel(); ++i) {
      double a = xb[i] * r.pi[i];
      double d = xb[i] - a;
      // Recomputing delta = x - disrupted makes delta + disrupted == x hold
      // bitwise (Dekker: x - fl(x - a) is exactly representable for a in [0, x]).
      r.disrupted[i] = d;
      r.delta[i] = xb[i] - d;
    }
  } else {
    for (std::size_t i = 0; i < xb.dim(0); ++i) {
      for (std::size_t j = 0; j < p_; ++j) {
        double d = xb[i * p_ + j] - r.pi[i * p_ + j];
        r.disrupted[i * p_ + j] = d;
        r.delta[i * p_ + j] = xb[i * p_ + j] - d;
      }
    }
  }
  if (batch == 0) {
    r.pi = r.pi.reshaped(x.shape());
    r.delta = r.delta.reshaped(x.shape());
    r.disrupted = r.disrupted.reshaped(x.shape());
  }
  return r;
}

std::vector<double> project_l1_box(std::vector<double> v, double tau) {
  double clipped_sum = 0.0;
  double max_abs = 0.0;
  for (double& x : v) {
    x = std::min(std::max(x, -1.0), 1.0);
    clipped_sum += std::abs(x);
    max_abs = std::max(max_abs, std::abs(x));
  }
  if (clipped_sum <= tau) return v;
  double lo = 0.0, hi = max_abs;
  auto mass = [&](double lambda) {
    double s = 0.0;
    for (double x : v) {
      s += std::min(std::max(std::abs(x) - lambda, 0.0), 1.0);
    }
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mass(mid) > tau) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double lambda = hi;
  for (double& x : v) {
    double m = std::min(std::max(std::abs(x) - lambda, 0.0), 1.0);
    x = x < 0 ? -m : m;
  }
  return v;
}

void Localizer::apply_constraints() {
  if (head_ != Head::ConstantDelta) return;
  Tensor& d = params_->value("delta");
  std::vector<double> v(d.data(), d.data() + d.numel());
  v = project_l1_box(std::move(v), tau_);
  std::copy(v.begin(), v.end(), d.data());
}

double Localizer::empirical_activity_norm(const Dataset& data) const {
  if (data.size() == 0) {
    throw DataError("empirical activity norm of empty dataset");
  }
  double worst = 0.0;
  const std::size_t batch = 256;
  const std::size_t f = data.feature_count();
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::size_t end = std::min(start + batch, data.size());
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    LocalizeResult r = localize(data.subset(idx).features);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < f; ++j) s += std::abs(r.delta[i * f + j]);
      worst = std::max(worst, s);
    }
  }
  return worst;
}

void Localizer::save(const std::string& checkpoint_path,
                     const std::string& sidecar_path) const {
  save_checkpoint(*params_, checkpoint_path);
  json j;
  j["head"] = head_ == Head::Cae ? "cae" : "constant-delta";
  j["tau"] = tau_;
  j["seed"] = seed_;
  if (head_ == Head::Cae) {
    j["config"] = json::parse(config_.to_json());
  } else {
    j["p"] = p_;
  }
  std::ofstream f(sidecar_path);
  if (!f) throw DataError("cannot write localizer sidecar: " + sidecar_path);
  f << j.dump(2) << "\n";
}

Localizer Localizer::load(const std::string& checkpoint_path,
                          const std::string& sidecar_path) {
  std::ifstream f(sidecar_path);
  if (!f) throw DataError("cannot open localizer sidecar: " + sidecar_path);
  json j = json::parse(std::string((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>()));
  Localizer loc;
  loc.tau_ = j.at("tau").get<double>();
  loc.seed_ = j.at("seed").get<std::uint64_t>();
  loc.params_ = std::make_shared<ParameterSet>(load_checkpoint(checkpoint_path));
  if (j.at("head") == "cae") {
    loc.head_ = Head::Cae;
    loc.config_ = CaeConfig::from_json(j.at("config").dump());
    loc.network_ = loc.config_.to_network();
  } else {
    loc.head_ = Head::ConstantDelta;
    loc.p_ = j.at("p").get<std::size_t>();
  }
  return loc;
}

}  // namespace dfl
