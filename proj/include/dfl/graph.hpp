#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dfl/params.hpp"
#include "dfl/tensor.hpp"

namespace dfl {

class Node;
using NodePtr = std::shared_ptr<Node>;

enum class OpKind {
  Placeholder,
  Parameter,
  Constant,
  Add,
  Sub,
  BiasAdd,
  Mul,
  Scale,
  MatMul,
  Conv1d,
  Conv2d,
  ConvTranspose1d,
  ConvTranspose2d,
  Relu,
  TRelu,
  Tanh,
  Softmax,
  CrossEntropy,
  SquaredError,
  ReduceMean,
  ElementwiseProduct,  // alias kind for Mul used by builder bookkeeping
  WeightNorm,
  Reshape,
};

/// One node of the computation graph: cached output, cached gradient, and
/// references to parents. Graphs are acyclic by construction (builders only
/// compose existing nodes).
class Node {
 public:
  Node(OpKind kind, std::string label, std::vector<NodePtr> inputs)
      : kind(kind), label(std::move(label)), inputs(std::move(inputs)) {}
  virtual ~Node() = default;

  /// Computes `value` from the inputs' cached values.
  virtual void forward() = 0;
  /// Accumulates into the inputs' `grad` given this node's `grad`.
  virtual void backward() {}

  OpKind kind;
  std::string label;
  std::vector<NodePtr> inputs;
  Tensor value;
  Tensor grad;
  bool needs_grad = false;
};

/// Base for parameter leaves; the executor collects gradients through it.
class ParameterNodeBase : public Node {
 public:
  using Node::Node;
  virtual const std::string& param_name() const = 0;
  virtual bool trainable() const = 0;
};

/// Reverse topological machinery for a fixed root. Binding placeholders and
/// re-running forward reuses the same node set, so one graph serves all
/// batch sizes.
class Executor {
 public:
  explicit Executor(NodePtr root);

  /// Binds placeholder values by label, then evaluates every node in
  /// topological order. Throws NonFiniteError naming the first node whose
  /// output contains NaN/Inf, ShapeError on inconsistent operands.
  const Tensor& forward(const std::map<std::string, Tensor>& bindings);

  /// Plain re-evaluation with previously bound placeholders.
  const Tensor& forward();

  /// Reverse pass from a scalar root. Returns gradients for every trainable
  /// parameter node reachable from the root; frozen or non-trainable
  /// parameters get no entry.
  GradientMap backward();

  /// Turns off the per-node finite check (training loops detect divergence
  /// at the loss instead).
  void set_check_finite(bool on) { check_finite_ = on; }

  const std::vector<Node*>& order() const { return order_; }
  NodePtr root() const { return root_; }

 private:
  NodePtr root_;
  std::vector<Node*> order_;
  bool check_finite_ = true;
};

/// Per-parameter maximum relative error between backward gradients and
/// central finite differences.
struct FiniteDiffReport {
  std::map<std::string, double> max_rel_error;
  double worst = 0.0;
  bool passed(double tolerance) const { return worst <= tolerance; }
};

/// Central-difference check of backward() against the loss landscape.
/// `subset` empty means every trainable parameter. Step must lie in
/// [1e-7, 1e-3].
FiniteDiffReport finite_difference_check(Executor& exec, ParameterSet& params,
                                         const std::vector<std::string>& subset,
                                         double step);

}  // namespace dfl
