#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dfl/data.hpp"
#include "dfl/net.hpp"

namespace dfl {

enum class StructuredActivationKind { TReluSoftmax, TanhReluSoftmax };

StructuredActivationKind activation_kind_from_string(const std::string& s);
std::string to_string(StructuredActivationKind kind);

/// Applies the budgeted activation to raw scores: TReLU(tau*softmax(z)) or
/// Tanh(ReLU(tau*softmax(z))). Softmax is joint over all non-batch axes, so
/// the budget is global per instance. Output lies in [0,1] elementwise with
/// per-instance sum <= tau.
Tensor structured_activation(const Tensor& z, double tau,
                             StructuredActivationKind kind);

/// Graph form of the same map.
NodePtr structured_activation_node(NodePtr z, double tau,
                                   StructuredActivationKind kind);

/// Auto-encoder topology: conv encoder stack, dense bottleneck, transposed
/// conv decoder stack. Spatial sizes are preserved (stride 1, same padding),
/// only channel counts vary, and a final projection maps back to the input
/// shape whenever the configured stack does not already end there.
struct CaeConfig {
  Shape input_shape;                                       // non-batch dims
  std::vector<std::pair<std::size_t, std::size_t>> encoder;  // (filters, size)
  std::vector<std::size_t> hidden;                           // dense widths
  std::vector<std::pair<std::size_t, std::size_t>> decoder;  // (filters, size)
  StructuredActivationKind activation = StructuredActivationKind::TReluSoftmax;
  bool weight_norm = true;

  static CaeConfig default_1d(std::size_t length);
  static CaeConfig default_2d(std::size_t height, std::size_t width);
  /// Conv1D(c)+Conv1D(c/2)+Conv1DTranspose(c/2)+Conv1DTranspose(c), no
  /// bottleneck, kernel size k.
  static CaeConfig cae_1d(std::size_t length, std::size_t c, std::size_t k);
  /// Dense(w)+Dense(w/2)+Dense(w/4)+Dense(length).
  static CaeConfig mlp_1d(std::size_t length, std::size_t w);

  /// Raw-score network ending exactly at input_shape; throws ConfigError if
  /// the stack cannot reconcile.
  NetworkSpec to_network() const;

  std::string to_json() const;
  static CaeConfig from_json(const std::string& text);
};

struct LocalizeResult {
  Tensor pi;         // disruption proportion in [0,1]
  Tensor delta;      // removed mass
  Tensor disrupted;  // x - delta; delta + disrupted == x bitwise
};

/// Parameterized disruption network delta(x) = x (*) A_tau(CAE(x)) with
/// budget tau, or the constant-delta head used for linear models where
/// delta(x) = delta with feasibility kept by projection.
class Localizer {
 public:
  enum class Head { Cae, ConstantDelta };

  /// CAE head with freshly initialized parameters.
  static Localizer build_cae(const CaeConfig& config, double tau,
                             std::uint64_t seed);
  /// Constant-delta head over p features, delta initialized near zero.
  static Localizer build_constant(std::size_t p, double tau, std::uint64_t seed);

  Head head() const { return head_; }
  const CaeConfig& config() const { return config_; }
  double tau() const { return tau_; }
  std::uint64_t seed() const { return seed_; }
  std::shared_ptr<ParameterSet> params() const { return params_; }

  /// Disruption proportions / constant delta evaluated on a batch
  /// (n, input-shape...) or a single instance (input-shape...).
  LocalizeResult localize(const Tensor& x) const;

  /// Wires the disrupted input x - delta(x) as a graph over placeholder/node
  /// `x`; gradients flow into this localizer's parameters.
  NodePtr build_disrupted(NodePtr x) const;
  /// Raw CAE scores (before the structured activation); CAE head only.
  NodePtr build_raw_scores(NodePtr x) const;
  /// pi node (CAE head) for heatmap export.
  NodePtr build_pi(NodePtr x) const;

  /// Post-optimizer-step feasibility hook. CAE parameters are free (the
  /// activation enforces the budget); the constant head projects onto
  /// {||d||_1 <= tau, ||d||_inf <= 1}.
  void apply_constraints();

  /// max over instances of ||delta(x_i)||_1; empirical surrogate of the
  /// activity supremum.
  double empirical_activity_norm(const Dataset& data) const;

  void save(const std::string& checkpoint_path, const std::string& sidecar_path) const;
  static Localizer load(const std::string& checkpoint_path,
                        const std::string& sidecar_path);

 private:
  Localizer() = default;
  void validate_input(const Tensor& x, std::size_t* batch) const;

  Head head_ = Head::Cae;
  CaeConfig config_;
  NetworkSpec network_;  // derived from config_ (CAE head)
  std::shared_ptr<ParameterSet> params_;
  double tau_ = 1.0;
  std::uint64_t seed_ = 0;
  std::size_t p_ = 0;  // constant head feature count
};

/// Projection of v onto the intersection of the L1 ball of radius tau and
/// the unit Linf box, by bisection on the soft threshold.
std::vector<double> project_l1_box(std::vector<double> v, double tau);

}  // namespace dfl
