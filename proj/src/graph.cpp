#include "dfl/graph.hpp"

#include <algorithm>
#include <unordered_set>

#include "dfl/ops.hpp"

namespace dfl {

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

namespace {

void topo_visit(Node* node, std::unordered_set<Node*>& seen,
                std::vector<Node*>& order) {
  if (seen.count(node)) return;
  seen.insert(node);
  for (const auto& in : node->inputs) topo_visit(in.get(), seen, order);
  order.push_back(node);
}

}  // namespace

Executor::Executor(NodePtr root) : root_(std::move(root)) {
  std::unordered_set<Node*> seen;
  topo_visit(root_.get(), seen, order_);
  for (Node* n : order_) {
    if (n->kind == OpKind::Parameter) {
      // Frozen parameters never need gradients; graphs are rebuilt after
      // freezing, so construction-time trainability is authoritative.
      n->needs_grad = static_cast<ParameterNodeBase*>(n)->trainable();
    }
    for (const auto& in : n->inputs) {
      if (in->needs_grad) n->needs_grad = true;
    }
  }
}

const Tensor& Executor::forward(const std::map<std::string, Tensor>& bindings) {
  for (Node* n : order_) {
    if (n->kind == OpKind::Placeholder) {
      auto it = bindings.find(n->label);
      if (it != bindings.end()) n->value = it->second;
    }
  }
  return forward();
}

const Tensor& Executor::forward() {
  for (Node* n : order_) {
    if (n->kind == OpKind::Placeholder) {
      if (n->value.numel() == 0) {
        throw ConfigError("unbound placeholder: " + n->label);
      }
      continue;
    }
    n->forward();
    if (check_finite_ && !n->value.all_finite()) {
      throw NonFiniteError("non-finite output at node " + n->label);
    }
  }
  return root_->value;
}

GradientMap Executor::backward() {
  if (root_->value.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_str(root_->value.shape()));
  }
  for (Node* n : order_) {
    n->grad = Tensor(n->value.shape());
  }
  root_->grad.fill(1.0);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (!n->needs_grad) continue;
    n->backward();
  }
  GradientMap grads;
  for (Node* n : order_) {
    if (n->kind != OpKind::Parameter) continue;
    auto* p = static_cast<ParameterNodeBase*>(n);
    if (!p->trainable()) continue;
    auto [it, inserted] = grads.emplace(p->param_name(), n->grad);
    if (!inserted) {
      // same parameter referenced by two nodes: accumulate
      Tensor& g = it->second;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n->grad[i];
    }
  }
  return grads;
}

FiniteDiffReport finite_difference_check(Executor& exec, ParameterSet& params,
                                         const std::vector<std::string>& subset,
                                         double step) {
  if (step < 1e-7 || step > 1e-3) {
    throw ConfigError("finite-difference step must lie in [1e-7, 1e-3]");
  }
  std::vector<std::string> names = subset;
  if (names.empty()) {
    for (const auto& e : params.entries()) {
      if (e.trainable && !params.frozen()) names.push_back(e.name);
    }
  }
  exec.forward();
  GradientMap analytic = exec.backward();

  FiniteDiffReport report;
  for (const auto& name : names) {
    Tensor& value = params.value(name);
    const Tensor* bp = nullptr;
    auto it = analytic.find(name);
    if (it != analytic.end()) bp = &it->second;
    double worst = 0.0;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      double saved = value[i];
      value[i] = saved + step;
      double up = exec.forward()[0];
      value[i] = saved - step;
      double down = exec.forward()[0];
      value[i] = saved;
      double fd = (up - down) / (2.0 * step);
      double an = bp ? (*bp)[i] : 0.0;
      double denom = std::max(std::abs(fd), std::abs(an));
      double rel = denom < 1e-10 ? 0.0 : std::abs(fd - an) / denom;
      worst = std::max(worst, rel);
    }
    report.max_rel_error[name] = worst;
    report.worst = std::max(report.worst, worst);
  }
  exec.forward();  // restore cached activations
  return report;
}

}  // namespace dfl
