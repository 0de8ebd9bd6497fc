#pragma once

#include <memory>

#include "dfl/graph.hpp"

namespace dfl {

enum class Padding { Same, Valid };

/// Weight-normalization slice convention: which axis indexes the output
/// channel whose slice is scaled to unit Frobenius norm.
enum class WeightNormMode { PerRow, PerColumn, Whole };

NodePtr placeholder(const std::string& label);
NodePtr parameter(std::shared_ptr<ParameterSet> set, const std::string& name);
NodePtr constant(Tensor value, const std::string& label = "const");

NodePtr add(NodePtr a, NodePtr b);
NodePtr sub(NodePtr a, NodePtr b);
/// Broadcasts a rank-1 bias over axis 1 of a rank >= 2 operand.
NodePtr bias_add(NodePtr a, NodePtr bias);
/// Elementwise (Hadamard) product of same-shape operands.
NodePtr mul(NodePtr a, NodePtr b);
NodePtr scale(NodePtr a, double c);
NodePtr matmul(NodePtr a, NodePtr b);

/// x: (n, c_in, len), w: (c_out, c_in, k); stride 1. Same padding needs odd k.
NodePtr conv1d(NodePtr x, NodePtr w, Padding pad);
/// x: (n, c_in, h, w), kernel: (c_out, c_in, kh, kw); stride 1.
NodePtr conv2d(NodePtr x, NodePtr w, Padding pad);
/// Stride-1 transposed convolutions preserving spatial size.
/// w: (c_in, c_out, k) resp. (c_in, c_out, kh, kw).
NodePtr conv_transpose1d(NodePtr x, NodePtr w);
NodePtr conv_transpose2d(NodePtr x, NodePtr w);

NodePtr relu(NodePtr x);
/// min(max(u, 0), 1); subgradient 0 at both kinks.
NodePtr trelu(NodePtr x);
NodePtr tanh_op(NodePtr x);

/// Max-subtracted softmax, jointly over all non-batch axes (whole tensor
/// when rank 1).
NodePtr softmax(NodePtr z);

/// Per-instance -log(p_y) with probabilities clamped at 1e-12.
/// probs: (n, classes); labels: rank-1 constant of class ids. Output (n,).
NodePtr cross_entropy(NodePtr probs, NodePtr labels);

/// Per-instance squared error summed over non-batch axes. Output (n,).
NodePtr squared_error(NodePtr pred, NodePtr target);

NodePtr reduce_mean(NodePtr x);

/// Rescales kernel slices to unit Frobenius norm.
NodePtr weight_norm(NodePtr w, WeightNormMode mode);

/// Reshape keeping the batch axis: out shape = (n, tail...).
NodePtr reshape_tail(NodePtr x, Shape tail);

/// Plain (non-graph) weight normalization; conv kernels use PerRow,
/// dense matrices PerColumn, rank-1 kernels Whole.
Tensor weight_normalize(const Tensor& kernel, WeightNormMode mode);

}  // namespace dfl
