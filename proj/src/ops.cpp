#include "dfl/ops.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <utility>

namespace dfl {
namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::string next_label(const char* op) {
  static std::atomic<std::uint64_t> counter{0};
  return std::string(op) + "#" + std::to_string(counter.fetch_add(1));
}

struct PlaceholderNode final : Node {
  explicit PlaceholderNode(std::string label)
      : Node(OpKind::Placeholder, std::move(label), {}) {}
  void forward() override {}
};

struct ParameterNode final : ParameterNodeBase {
  ParameterNode(std::shared_ptr<ParameterSet> set, std::string name)
      : ParameterNodeBase(OpKind::Parameter, "param:" + name, {}),
        set_(std::move(set)),
        name_(std::move(name)) {
    if (!set_->contains(name_)) {
      throw ConfigError("parameter node references unknown parameter: " + name_);
    }
  }
  void forward() override { value = set_->value(name_); }
  const std::string& param_name() const override { return name_; }
  bool trainable() const override { return set_->trainable(name_); }

  std::shared_ptr<ParameterSet> set_;
  std::string name_;
};

struct ConstantNode final : Node {
  ConstantNode(Tensor v, std::string label)
      : Node(OpKind::Constant, std::move(label), {}) {
    value = std::move(v);
  }
  void forward() override {}
};

struct AddNode final : Node {
  AddNode(NodePtr a, NodePtr b)
      : Node(OpKind::Add, next_label("add"), {std::move(a), std::move(b)}) {}
  void forward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    check_same_shape(a, b, label.c_str());
    value = a;
    for (std::size_t i = 0; i < value.numel(); ++i) value[i] += b[i];
  }
  void backward() override {
    for (int k = 0; k < 2; ++k) {
      if (!inputs[k]->needs_grad) continue;
      Tensor& g = inputs[k]->grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i];
    }
  }
};

struct SubNode final : Node {
  SubNode(NodePtr a, NodePtr b)
      : Node(OpKind::Sub, next_label("sub"), {std::move(a), std::move(b)}) {}
  void forward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    check_same_shape(a, b, label.c_str());
    value = a;
    for (std::size_t i = 0; i < value.numel(); ++i) value[i] -= b[i];
  }
  void backward() override {
    if (inputs[0]->needs_grad) {
      Tensor& g = inputs[0]->grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i];
    }
    if (inputs[1]->needs_grad) {
      Tensor& g = inputs[1]->grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= grad[i];
    }
  }
};

struct BiasAddNode final : Node {
  BiasAddNode(NodePtr a, NodePtr bias)
      : Node(OpKind::BiasAdd, next_label("bias_add"),
             {std::move(a), std::move(bias)}) {}
  void forward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    if (a.rank() < 2 || b.rank() != 1 || b.dim(0) != a.dim(1)) {
      throw ShapeError(label + ": bias " + shape_str(b.shape()) +
                       " does not broadcast over axis 1 of " +
                       shape_str(a.shape()));
    }
    value = a;
    const std::size_t n = a.dim(0);
    const std::size_t c = a.dim(1);
    const std::size_t inner = a.numel() / (n * c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        double bj = b[j];
        double* row = value.data() + (i * c + j) * inner;
        for (std::size_t t = 0; t < inner; ++t) row[t] += bj;
      }
    }
  }
  void backward() override {
    const Tensor& a = inputs[0]->value;
    const std::size_t n = a.dim(0);
    const std::size_t c = a.dim(1);
    const std::size_t inner = a.numel() / (n * c);
    if (inputs[0]->needs_grad) {
      Tensor& g = inputs[0]->grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i];
    }
    if (inputs[1]->needs_grad) {
      Tensor& gb = inputs[1]->grad;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          const double* row = grad.data() + (i * c + j) * inner;
          double s = 0.0;
          for (std::size_t t = 0; t < inner; ++t) s += row[t];
          gb[j] += s;
        }
      }
    }
  }
};

struct MulNode final : Node {
  MulNode(NodePtr a, NodePtr b)
      : Node(OpKind::Mul, next_label("mul"), {std::move(a), std::move(b)}) {}
  void forward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    check_same_shape(a, b, label.c_str());
    value = a;
    for (std::size_t i = 0; i < value.numel(); ++i) value[i] *= b[i];
  }
  void backward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    if (inputs[0]->needs_grad) {
      Tensor& g = inputs[0]->grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i] * b[i];
    }
    if (inputs[1]->needs_grad) {
      Tensor& g = inputs[1]->grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i] * a[i];
    }
  }
};

struct ScaleNode final : Node {
  ScaleNode(NodePtr a, double c)
      : Node(OpKind::Scale, next_label("scale"), {std::move(a)}), c_(c) {}
  void forward() override {
    value = inputs[0]->value;
    for (std::size_t i = 0; i < value.numel(); ++i) value[i] *= c_;
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    Tensor& g = inputs[0]->grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i] * c_;
  }
  double c_;
};

struct MatMulNode final : Node {
  MatMulNode(NodePtr a, NodePtr b)
      : Node(OpKind::MatMul, next_label("matmul"), {std::move(a), std::move(b)}) {}
  void forward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
      throw ShapeError(label + ": cannot multiply " + shape_str(a.shape()) +
                       " by " + shape_str(b.shape()));
    }
    value = Tensor({a.dim(0), b.dim(1)});
    CMapRM ma(a.data(), a.dim(0), a.dim(1));
    CMapRM mb(b.data(), b.dim(0), b.dim(1));
    MapRM mo(value.data(), a.dim(0), b.dim(1));
    mo.noalias() = ma * mb;
  }
  void backward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    CMapRM ma(a.data(), a.dim(0), a.dim(1));
    CMapRM mb(b.data(), b.dim(0), b.dim(1));
    CMapRM mg(grad.data(), a.dim(0), b.dim(1));
    if (inputs[0]->needs_grad) {
      MapRM ga(inputs[0]->grad.data(), a.dim(0), a.dim(1));
      ga.noalias() += mg * mb.transpose();
    }
    if (inputs[1]->needs_grad) {
      MapRM gb(inputs[1]->grad.data(), b.dim(0), b.dim(1));
      gb.noalias() += ma.transpose() * mg;
    }
  }
};

// ---------------------------------------------------------------------------
// Convolutions: im2col + gemm. Patch matrices are (n*out_positions, c_in*k)
// so both the forward product and both backward products are plain gemms.
// ---------------------------------------------------------------------------

struct ConvGeometry {
  std::size_t batch = 0, c_in = 0, c_out = 0;
  std::vector<std::size_t> in_spatial;   // 1 or 2 dims
  std::vector<std::size_t> k_spatial;    // kernel dims
  std::vector<std::size_t> out_spatial;  // output dims
  std::vector<long> pad;                 // per dim
  std::size_t out_positions() const {
    std::size_t n = 1;
    for (auto d : out_spatial) n *= d;
    return n;
  }
  std::size_t patch() const {
    std::size_t n = c_in;
    for (auto d : k_spatial) n *= d;
    return n;
  }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, Padding pad,
                           std::size_t spatial_rank, const std::string& label) {
  if (x.rank() != 2 + spatial_rank || w.rank() != 2 + spatial_rank) {
    throw ShapeError(label + ": expected rank " + std::to_string(2 + spatial_rank) +
                     " input and kernel, got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError(label + ": input channels " + std::to_string(x.dim(1)) +
                     " != kernel channels " + std::to_string(w.dim(1)));
  }
  ConvGeometry g;
  g.batch = x.dim(0);
  g.c_in = x.dim(1);
  g.c_out = w.dim(0);
  for (std::size_t d = 0; d < spatial_rank; ++d) {
    std::size_t in = x.dim(2 + d);
    std::size_t k = w.dim(2 + d);
    if (pad == Padding::Same) {
      if (k % 2 == 0) {
        throw ShapeError(label + ": same padding requires odd kernel size, got " +
                         std::to_string(k));
      }
      g.pad.push_back(static_cast<long>(k / 2));
      g.out_spatial.push_back(in);
    } else {
      if (in < k) {
        throw ShapeError(label + ": kernel " + std::to_string(k) +
                         " larger than input " + std::to_string(in));
      }
      g.pad.push_back(0);
      g.out_spatial.push_back(in - k + 1);
    }
    g.in_spatial.push_back(in);
    g.k_spatial.push_back(k);
  }
  return g;
}

// cols: (n*out_positions, c_in*prod(k)). Out-of-range taps contribute zero.
void im2col(const Tensor& x, const ConvGeometry& g, std::vector<double>& cols) {
  const std::size_t patch = g.patch();
  const std::size_t rows = g.batch * g.out_positions();
  cols.assign(rows * patch, 0.0);
  if (g.in_spatial.size() == 1) {
    const long L = static_cast<long>(g.in_spatial[0]);
    const long K = static_cast<long>(g.k_spatial[0]);
    const long P = g.pad[0];
    const long Lo = static_cast<long>(g.out_spatial[0]);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (long t = 0; t < Lo; ++t) {
        double* row = cols.data() + ((b * Lo) + t) * patch;
        for (std::size_t c = 0; c < g.c_in; ++c) {
          const double* src = x.data() + (b * g.c_in + c) * L;
          for (long k = 0; k < K; ++k) {
            long s = t + k - P;
            if (s >= 0 && s < L) row[c * K + k] = src[s];
          }
        }
      }
    }
  } else {
    const long H = static_cast<long>(g.in_spatial[0]);
    const long W = static_cast<long>(g.in_spatial[1]);
    const long KH = static_cast<long>(g.k_spatial[0]);
    const long KW = static_cast<long>(g.k_spatial[1]);
    const long PH = g.pad[0], PW = g.pad[1];
    const long Ho = static_cast<long>(g.out_spatial[0]);
    const long Wo = static_cast<long>(g.out_spatial[1]);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (long i = 0; i < Ho; ++i) {
        for (long j = 0; j < Wo; ++j) {
          double* row = cols.data() + ((b * Ho + i) * Wo + j) * patch;
          for (std::size_t c = 0; c < g.c_in; ++c) {
            const double* src = x.data() + (b * g.c_in + c) * H * W;
            for (long ki = 0; ki < KH; ++ki) {
              long si = i + ki - PH;
              if (si < 0 || si >= H) continue;
              for (long kj = 0; kj < KW; ++kj) {
                long sj = j + kj - PW;
                if (sj >= 0 && sj < W) {
                  row[(c * KH + ki) * KW + kj] = src[si * W + sj];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-add of patch-gradients back onto the input layout.
void col2im_add(const std::vector<double>& cols, const ConvGeometry& g,
                Tensor& dx) {
  const std::size_t patch = g.patch();
  if (g.in_spatial.size() == 1) {
    const long L = static_cast<long>(g.in_spatial[0]);
    const long K = static_cast<long>(g.k_spatial[0]);
    const long P = g.pad[0];
    const long Lo = static_cast<long>(g.out_spatial[0]);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (long t = 0; t < Lo; ++t) {
        const double* row = cols.data() + ((b * Lo) + t) * patch;
        for (std::size_t c = 0; c < g.c_in; ++c) {
          double* dst = dx.data() + (b * g.c_in + c) * L;
          for (long k = 0; k < K; ++k) {
            long s = t + k - P;
            if (s >= 0 && s < L) dst[s] += row[c * K + k];
          }
        }
      }
    }
  } else {
    const long H = static_cast<long>(g.in_spatial[0]);
    const long W = static_cast<long>(g.in_spatial[1]);
    const long KH = static_cast<long>(g.k_spatial[0]);
    const long KW = static_cast<long>(g.k_spatial[1]);
    const long PH = g.pad[0], PW = g.pad[1];
    const long Ho = static_cast<long>(g.out_spatial[0]);
    const long Wo = static_cast<long>(g.out_spatial[1]);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (long i = 0; i < Ho; ++i) {
        for (long j = 0; j < Wo; ++j) {
          const double* row = cols.data() + ((b * Ho + i) * Wo + j) * patch;
          for (std::size_t c = 0; c < g.c_in; ++c) {
            double* dst = dx.data() + (b * g.c_in + c) * H * W;
            for (long ki = 0; ki < KH; ++ki) {
              long si = i + ki - PH;
              if (si < 0 || si >= H) continue;
              for (long kj = 0; kj < KW; ++kj) {
                long sj = j + kj - PW;
                if (sj >= 0 && sj < W) {
                  dst[si * W + sj] += row[(c * KH + ki) * KW + kj];
                }
              }
            }
          }
        }
      }
    }
  }
}

struct ConvNode : Node {
  ConvNode(OpKind kind, NodePtr x, NodePtr w, Padding pad,
           std::size_t spatial_rank, const char* name)
      : Node(kind, next_label(name), {std::move(x), std::move(w)}),
        pad_(pad),
        spatial_rank_(spatial_rank) {}

  // Kernel as seen by the gemm; transposed variants override to remap.
  virtual const Tensor& effective_kernel() { return inputs[1]->value; }
  virtual void push_kernel_grad(const Tensor& dw_eff) {
    Tensor& gw = inputs[1]->grad;
    for (std::size_t i = 0; i < gw.numel(); ++i) gw[i] += dw_eff[i];
  }

  void forward() override {
    const Tensor& x = inputs[0]->value;
    const Tensor& w = effective_kernel();
    geom_ = conv_geometry(x, w, pad_, spatial_rank_, label);
    im2col(x, geom_, cols_);
    const std::size_t rows = geom_.batch * geom_.out_positions();
    const std::size_t patch = geom_.patch();
    Shape out_shape{geom_.batch, geom_.c_out};
    for (auto d : geom_.out_spatial) out_shape.push_back(d);
    value = Tensor(out_shape);
    // out_mat (rows, c_out) = cols (rows, patch) * W^T (patch, c_out)
    out_mat_.assign(rows * geom_.c_out, 0.0);
    CMapRM mc(cols_.data(), rows, patch);
    CMapRM mw(w.data(), geom_.c_out, patch);
    MapRM mo(out_mat_.data(), rows, geom_.c_out);
    mo.noalias() = mc * mw.transpose();
    const std::size_t opos = geom_.out_positions();
    for (std::size_t b = 0; b < geom_.batch; ++b) {
      for (std::size_t o = 0; o < geom_.c_out; ++o) {
        double* dst = value.data() + (b * geom_.c_out + o) * opos;
        const double* src = out_mat_.data() + b * opos * geom_.c_out + o;
        for (std::size_t t = 0; t < opos; ++t) dst[t] = src[t * geom_.c_out];
      }
    }
  }

  void backward() override {
    const std::size_t rows = geom_.batch * geom_.out_positions();
    const std::size_t patch = geom_.patch();
    const std::size_t opos = geom_.out_positions();
    std::vector<double> dy_mat(rows * geom_.c_out);
    for (std::size_t b = 0; b < geom_.batch; ++b) {
      for (std::size_t o = 0; o < geom_.c_out; ++o) {
        const double* src = grad.data() + (b * geom_.c_out + o) * opos;
        double* dst = dy_mat.data() + b * opos * geom_.c_out + o;
        for (std::size_t t = 0; t < opos; ++t) dst[t * geom_.c_out] = src[t];
      }
    }
    CMapRM mdy(dy_mat.data(), rows, geom_.c_out);
    if (inputs[1]->needs_grad) {
      Tensor dw_eff(effective_kernel().shape());
      MapRM mdw(dw_eff.data(), geom_.c_out, patch);
      CMapRM mc(cols_.data(), rows, patch);
      mdw.noalias() = mdy.transpose() * mc;
      push_kernel_grad(dw_eff);
    }
    if (inputs[0]->needs_grad) {
      std::vector<double> dcols(rows * patch);
      MapRM mdc(dcols.data(), rows, patch);
      CMapRM mw(effective_kernel().data(), geom_.c_out, patch);
      mdc.noalias() = mdy * mw;
      col2im_add(dcols, geom_, inputs[0]->grad);
    }
  }

  Padding pad_;
  std::size_t spatial_rank_;
  ConvGeometry geom_;
  std::vector<double> cols_;
  std::vector<double> out_mat_;
};

// Stride-1 transposed convolution == convolution with the kernel flipped in
// space and swapped in channels; gradients are remapped through the same
// permutation.
struct ConvTransposeNode final : ConvNode {
  ConvTransposeNode(NodePtr x, NodePtr w, std::size_t spatial_rank)
      : ConvNode(spatial_rank == 1 ? OpKind::ConvTranspose1d
                                   : OpKind::ConvTranspose2d,
                 std::move(x), std::move(w), Padding::Same, spatial_rank,
                 spatial_rank == 1 ? "conv_t1d" : "conv_t2d") {}

  const Tensor& effective_kernel() override {
    const Tensor& w = inputs[1]->value;
    if (w.rank() != 2 + spatial_rank_) {
      throw ShapeError(label + ": bad transposed kernel rank for " +
                       shape_str(w.shape()));
    }
    const std::size_t ci = w.dim(0), co = w.dim(1);
    Shape eshape{co, ci};
    std::size_t ksz = 1;
    for (std::size_t d = 0; d < spatial_rank_; ++d) {
      eshape.push_back(w.dim(2 + d));
      ksz *= w.dim(2 + d);
    }
    eff_ = Tensor(eshape);
    for (std::size_t i = 0; i < ci; ++i) {
      for (std::size_t o = 0; o < co; ++o) {
        const double* src = w.data() + (i * co + o) * ksz;
        double* dst = eff_.data() + (o * ci + i) * ksz;
        for (std::size_t k = 0; k < ksz; ++k) dst[k] = src[ksz - 1 - k];
      }
    }
    return eff_;
  }

  void push_kernel_grad(const Tensor& dw_eff) override {
    const Tensor& w = inputs[1]->value;
    const std::size_t ci = w.dim(0), co = w.dim(1);
    const std::size_t ksz = w.numel() / (ci * co);
    Tensor& gw = inputs[1]->grad;
    for (std::size_t i = 0; i < ci; ++i) {
      for (std::size_t o = 0; o < co; ++o) {
        const double* src = dw_eff.data() + (o * ci + i) * ksz;
        double* dst = gw.data() + (i * co + o) * ksz;
        for (std::size_t k = 0; k < ksz; ++k) dst[k] += src[ksz - 1 - k];
      }
    }
  }

  Tensor eff_;
};

struct ReluNode final : Node {
  explicit ReluNode(NodePtr x)
      : Node(OpKind::Relu, next_label("relu"), {std::move(x)}) {}
  void forward() override {
    value = inputs[0]->value;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      if (value[i] < 0.0) value[i] = 0.0;
    }
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    const Tensor& x = inputs[0]->value;
    Tensor& g = inputs[0]->grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (x[i] > 0.0) g[i] += grad[i];
    }
  }
};

struct TReluNode final : Node {
  explicit TReluNode(NodePtr x)
      : Node(OpKind::TRelu, next_label("trelu"), {std::move(x)}) {}
  void forward() override {
    value = inputs[0]->value;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      value[i] = std::min(std::max(value[i], 0.0), 1.0);
    }
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    const Tensor& x = inputs[0]->value;
    Tensor& g = inputs[0]->grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (x[i] > 0.0 && x[i] < 1.0) g[i] += grad[i];
    }
  }
};

struct TanhNode final : Node {
  explicit TanhNode(NodePtr x)
      : Node(OpKind::Tanh, next_label("tanh"), {std::move(x)}) {}
  void forward() override {
    value = inputs[0]->value;
    for (std::size_t i = 0; i < value.numel(); ++i) value[i] = std::tanh(value[i]);
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    Tensor& g = inputs[0]->grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g[i] += grad[i] * (1.0 - value[i] * value[i]);
    }
  }
};

struct SoftmaxNode final : Node {
  explicit SoftmaxNode(NodePtr z)
      : Node(OpKind::Softmax, next_label("softmax"), {std::move(z)}) {}
  // Joint softmax over all non-batch axes; max-subtracted for stability.
  void forward() override {
    const Tensor& z = inputs[0]->value;
    value = z;
    const std::size_t n = z.rank() <= 1 ? 1 : z.dim(0);
    const std::size_t inner = z.numel() / n;
    for (std::size_t b = 0; b < n; ++b) {
      double* row = value.data() + b * inner;
      double mx = row[0];
      for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, row[i]);
      double sum = 0.0;
      for (std::size_t i = 0; i < inner; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
      }
      for (std::size_t i = 0; i < inner; ++i) row[i] /= sum;
    }
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    const std::size_t n = value.rank() <= 1 ? 1 : value.dim(0);
    const std::size_t inner = value.numel() / n;
    Tensor& g = inputs[0]->grad;
    for (std::size_t b = 0; b < n; ++b) {
      const double* s = value.data() + b * inner;
      const double* dy = grad.data() + b * inner;
      double dot = 0.0;
      for (std::size_t i = 0; i < inner; ++i) dot += s[i] * dy[i];
      double* dst = g.data() + b * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += s[i] * (dy[i] - dot);
    }
  }
};

constexpr double kProbFloor = 1e-12;

struct CrossEntropyNode final : Node {
  CrossEntropyNode(NodePtr probs, NodePtr labels)
      : Node(OpKind::CrossEntropy, next_label("cross_entropy"),
             {std::move(probs), std::move(labels)}) {}
  void forward() override {
    const Tensor& p = inputs[0]->value;
    const Tensor& y = inputs[1]->value;
    if (p.rank() != 2) {
      throw ShapeError(label + ": probabilities must be (n, classes), got " +
                       shape_str(p.shape()));
    }
    if (y.numel() != p.dim(0)) {
      throw ShapeError(label + ": " + std::to_string(y.numel()) + " labels for " +
                       std::to_string(p.dim(0)) + " rows");
    }
    const std::size_t n = p.dim(0), k = p.dim(1);
    value = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) {
      auto cls = static_cast<std::size_t>(y[i]);
      if (cls >= k) {
        throw DataError(label + ": label " + std::to_string(cls) +
                        " out of range for " + std::to_string(k) + " classes");
      }
      value[i] = -std::log(std::max(p[i * k + cls], kProbFloor));
    }
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    const Tensor& p = inputs[0]->value;
    const Tensor& y = inputs[1]->value;
    const std::size_t n = p.dim(0), k = p.dim(1);
    Tensor& g = inputs[0]->grad;
    for (std::size_t i = 0; i < n; ++i) {
      auto cls = static_cast<std::size_t>(y[i]);
      double pv = p[i * k + cls];
      // Inside the clamp region the loss is constant, so the subgradient is 0.
      if (pv > kProbFloor) g[i * k + cls] += grad[i] * (-1.0 / pv);
    }
  }
};

struct SquaredErrorNode final : Node {
  SquaredErrorNode(NodePtr pred, NodePtr target)
      : Node(OpKind::SquaredError, next_label("squared_error"),
             {std::move(pred), std::move(target)}) {}
  void forward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    check_same_shape(a, b, label.c_str());
    const std::size_t n = a.rank() <= 1 ? a.numel() : a.dim(0);
    const std::size_t inner = a.numel() / n;
    value = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < inner; ++j) {
        double d = a[i * inner + j] - b[i * inner + j];
        s += d * d;
      }
      value[i] = s;
    }
  }
  void backward() override {
    const Tensor& a = inputs[0]->value;
    const Tensor& b = inputs[1]->value;
    const std::size_t n = value.numel();
    const std::size_t inner = a.numel() / n;
    for (int which = 0; which < 2; ++which) {
      if (!inputs[which]->needs_grad) continue;
      double sign = which == 0 ? 2.0 : -2.0;
      Tensor& g = inputs[which]->grad;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < inner; ++j) {
          g[i * inner + j] += sign * grad[i] * (a[i * inner + j] - b[i * inner + j]);
        }
      }
    }
  }
};

struct ReduceMeanNode final : Node {
  explicit ReduceMeanNode(NodePtr x)
      : Node(OpKind::ReduceMean, next_label("reduce_mean"), {std::move(x)}) {}
  void forward() override {
    const Tensor& x = inputs[0]->value;
    value = Tensor({1}, x.sum() / static_cast<double>(x.numel()));
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    Tensor& g = inputs[0]->grad;
    double share = grad[0] / static_cast<double>(g.numel());
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += share;
  }
};

struct SliceSpec {
  std::size_t count = 0;   // number of slices
  std::size_t stride = 0;  // elements between consecutive members of a slice
  std::size_t run = 0;     // contiguous members per stride step
};

SliceSpec wn_slices(const Tensor& w, WeightNormMode mode) {
  SliceSpec s;
  switch (mode) {
    case WeightNormMode::PerRow:
      s.count = w.rank() == 0 ? 1 : w.dim(0);
      s.run = w.numel() / s.count;
      s.stride = 0;
      break;
    case WeightNormMode::PerColumn:
      if (w.rank() != 2) {
        throw ShapeError("per-column weight norm requires a rank-2 kernel");
      }
      s.count = w.dim(1);
      s.run = 1;
      s.stride = w.dim(1);
      break;
    case WeightNormMode::Whole:
      s.count = 1;
      s.run = w.numel();
      s.stride = 0;
      break;
  }
  return s;
}

struct WeightNormNode final : Node {
  WeightNormNode(NodePtr w, WeightNormMode mode)
      : Node(OpKind::WeightNorm, next_label("weight_norm"), {std::move(w)}),
        mode_(mode) {}
  void forward() override {
    value = weight_normalize(inputs[0]->value, mode_);
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    const Tensor& w = inputs[0]->value;
    SliceSpec s = wn_slices(w, mode_);
    const std::size_t members = w.numel() / s.count;
    Tensor& g = inputs[0]->grad;
    for (std::size_t c = 0; c < s.count; ++c) {
      double norm = 0.0, dot = 0.0;
      for (std::size_t m = 0; m < members; ++m) {
        std::size_t idx = slice_index(s, c, m);
        norm += w[idx] * w[idx];
      }
      norm = std::sqrt(norm);
      for (std::size_t m = 0; m < members; ++m) {
        std::size_t idx = slice_index(s, c, m);
        dot += value[idx] * grad[idx];
      }
      for (std::size_t m = 0; m < members; ++m) {
        std::size_t idx = slice_index(s, c, m);
        g[idx] += (grad[idx] - value[idx] * dot) / norm;
      }
    }
  }
  static std::size_t slice_index(const SliceSpec& s, std::size_t c, std::size_t m) {
    if (s.stride == 0) return c * s.run + m;
    return m * s.stride + c;  // per-column: walk rows
  }
  WeightNormMode mode_;
};

struct ReshapeNode final : Node {
  ReshapeNode(NodePtr x, Shape tail)
      : Node(OpKind::Reshape, next_label("reshape"), {std::move(x)}),
        tail_(std::move(tail)) {}
  void forward() override {
    const Tensor& x = inputs[0]->value;
    Shape out{x.dim(0)};
    for (auto d : tail_) out.push_back(d);
    value = x.reshaped(out);
  }
  void backward() override {
    if (!inputs[0]->needs_grad) return;
    Tensor& g = inputs[0]->grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i];
  }
  Shape tail_;
};

}  // namespace

Tensor weight_normalize(const Tensor& kernel, WeightNormMode mode) {
  SliceSpec s = wn_slices(kernel, mode);
  const std::size_t members = kernel.numel() / s.count;
  Tensor out = kernel;
  for (std::size_t c = 0; c < s.count; ++c) {
    double norm = 0.0;
    for (std::size_t m = 0; m < members; ++m) {
      std::size_t idx = WeightNormNode::slice_index(s, c, m);
      norm += kernel[idx] * kernel[idx];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-150) {
      throw DegenerateLossError("weight_normalize: zero kernel slice " +
                                std::to_string(c));
    }
    for (std::size_t m = 0; m < members; ++m) {
      std::size_t idx = WeightNormNode::slice_index(s, c, m);
      out[idx] = kernel[idx] / norm;
    }
  }
  return out;
}

NodePtr placeholder(const std::string& label) {
  return std::make_shared<PlaceholderNode>(label);
}
NodePtr parameter(std::shared_ptr<ParameterSet> set, const std::string& name) {
  return std::make_shared<ParameterNode>(std::move(set), name);
}
NodePtr constant(Tensor value, const std::string& label) {
  return std::make_shared<ConstantNode>(std::move(value), label);
}
NodePtr add(NodePtr a, NodePtr b) {
  return std::make_shared<AddNode>(std::move(a), std::move(b));
}
NodePtr sub(NodePtr a, NodePtr b) {
  return std::make_shared<SubNode>(std::move(a), std::move(b));
}
NodePtr bias_add(NodePtr a, NodePtr bias) {
  return std::make_shared<BiasAddNode>(std::move(a), std::move(bias));
}
NodePtr mul(NodePtr a, NodePtr b) {
  return std::make_shared<MulNode>(std::move(a), std::move(b));
}
NodePtr scale(NodePtr a, double c) {
  return std::make_shared<ScaleNode>(std::move(a), c);
}
NodePtr matmul(NodePtr a, NodePtr b) {
  return std::make_shared<MatMulNode>(std::move(a), std::move(b));
}
NodePtr conv1d(NodePtr x, NodePtr w, Padding pad) {
  return std::make_shared<ConvNode>(OpKind::Conv1d, std::move(x), std::move(w),
                                    pad, 1, "conv1d");
}
NodePtr conv2d(NodePtr x, NodePtr w, Padding pad) {
  return std::make_shared<ConvNode>(OpKind::Conv2d, std::move(x), std::move(w),
                                    pad, 2, "conv2d");
}
NodePtr conv_transpose1d(NodePtr x, NodePtr w) {
  return std::make_shared<ConvTransposeNode>(std::move(x), std::move(w), 1);
}
NodePtr conv_transpose2d(NodePtr x, NodePtr w) {
  return std::make_shared<ConvTransposeNode>(std::move(x), std::move(w), 2);
}
NodePtr relu(NodePtr x) { return std::make_shared<ReluNode>(std::move(x)); }
NodePtr trelu(NodePtr x) { return std::make_shared<TReluNode>(std::move(x)); }
NodePtr tanh_op(NodePtr x) { return std::make_shared<TanhNode>(std::move(x)); }
NodePtr softmax(NodePtr z) { return std::make_shared<SoftmaxNode>(std::move(z)); }
NodePtr cross_entropy(NodePtr probs, NodePtr labels) {
  return std::make_shared<CrossEntropyNode>(std::move(probs), std::move(labels));
}
NodePtr squared_error(NodePtr pred, NodePtr target) {
  return std::make_shared<SquaredErrorNode>(std::move(pred), std::move(target));
}
NodePtr reduce_mean(NodePtr x) {
  return std::make_shared<ReduceMeanNode>(std::move(x));
}
NodePtr weight_norm(NodePtr w, WeightNormMode mode) {
  return std::make_shared<WeightNormNode>(std::move(w), mode);
}
NodePtr reshape_tail(NodePtr x, Shape tail) {
  return std::make_shared<ReshapeNode>(std::move(x), std::move(tail));
}

}  // namespace dfl
