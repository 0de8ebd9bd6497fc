#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dfl/data.hpp"
#include "dfl/ops.hpp"
#include "dfl/rng.hpp"

namespace dfl {

enum class LossKind { CrossEntropy, SquaredError };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind kind);

enum class LayerKind {
  Dense,
  Conv1d,
  Conv2d,
  ConvTranspose1d,
  ConvTranspose2d,
  Relu,
  Tanh,
  Flatten,
  Reshape,
};

struct LayerSpec {
  LayerKind kind;
  std::size_t units = 0;    // dense
  std::size_t filters = 0;  // conv
  std::size_t ksize = 0;    // conv
  Padding padding = Padding::Same;
  bool weight_norm = false;
  Shape tail;  // reshape target (non-batch dims)

  static LayerSpec dense(std::size_t units, bool wn = false) {
    LayerSpec s{LayerKind::Dense};
    s.units = units;
    s.weight_norm = wn;
    return s;
  }
  static LayerSpec conv1d(std::size_t filters, std::size_t k,
                          Padding pad = Padding::Same, bool wn = false) {
    LayerSpec s{LayerKind::Conv1d};
    s.filters = filters;
    s.ksize = k;
    s.padding = pad;
    s.weight_norm = wn;
    return s;
  }
  static LayerSpec conv2d(std::size_t filters, std::size_t k,
                          Padding pad = Padding::Same, bool wn = false) {
    LayerSpec s{LayerKind::Conv2d};
    s.filters = filters;
    s.ksize = k;
    s.padding = pad;
    s.weight_norm = wn;
    return s;
  }
  static LayerSpec conv_t1d(std::size_t filters, std::size_t k, bool wn = false) {
    LayerSpec s{LayerKind::ConvTranspose1d};
    s.filters = filters;
    s.ksize = k;
    s.weight_norm = wn;
    return s;
  }
  static LayerSpec conv_t2d(std::size_t filters, std::size_t k, bool wn = false) {
    LayerSpec s{LayerKind::ConvTranspose2d};
    s.filters = filters;
    s.ksize = k;
    s.weight_norm = wn;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::Relu}; }
  static LayerSpec tanh() { return LayerSpec{LayerKind::Tanh}; }
  static LayerSpec flatten() { return LayerSpec{LayerKind::Flatten}; }
  static LayerSpec reshape(Shape tail) {
    LayerSpec s{LayerKind::Reshape};
    s.tail = std::move(tail);
    return s;
  }
};

/// Declarative feed-forward network over a fixed feature shape (batch axis
/// stays dynamic). Convolutions get an implicit channel axis when the
/// incoming tail has none; dense layers flatten implicitly.
struct NetworkSpec {
  Shape input_shape;  // non-batch dims
  std::vector<LayerSpec> layers;

  /// Creates parameters (Glorot-uniform weights, zero biases) under
  /// `prefix` using a generator seeded by `seed`.
  void init_params(ParameterSet& params, const std::string& prefix,
                   std::uint64_t seed) const;

  /// Wires the layer stack onto `input` with parameter nodes drawn from
  /// `set` under `prefix`. Input is (n, input_shape...).
  NodePtr build(NodePtr input, std::shared_ptr<ParameterSet> set,
                const std::string& prefix) const;

  /// Non-batch output shape implied by the layer stack.
  Shape output_tail() const;

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);
};

/// Frozen differentiable model d mapping features to scores.
struct Predictor {
  NetworkSpec spec;
  std::shared_ptr<ParameterSet> params;
  LossKind loss = LossKind::CrossEntropy;

  NodePtr build_scores(NodePtr input) const {
    return spec.build(std::move(input), params, "d.");
  }

  /// Raw scores for a feature batch (n, feature-shape...).
  Tensor scores(const Tensor& batch) const;
  /// Per-instance losses against labels, batched internally.
  std::vector<double> instance_losses(const Dataset& data) const {
    return instance_losses(data, loss);
  }
  std::vector<double> instance_losses(const Dataset& data, LossKind kind) const;
  double accuracy(const Dataset& data) const;

  void save(const std::string& checkpoint_path, const std::string& spec_path) const;
  static Predictor load(const std::string& checkpoint_path,
                        const std::string& spec_path);
};

/// Named reference architectures used by the CLI and tests.
NetworkSpec preset_network(const std::string& name, const Shape& input_shape,
                           std::size_t outputs);

/// Labels in the layout loss nodes expect: (n,) class ids for
/// classification, (n,1) targets for regression.
Tensor label_tensor(const Dataset& data);

}  // namespace dfl
