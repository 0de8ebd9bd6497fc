#include "dfl/net.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dfl/checkpoint.hpp"

namespace dfl {

using nlohmann::json;

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross-entropy") return LossKind::CrossEntropy;
  if (s == "squared-error") return LossKind::SquaredError;
  throw ConfigError("unknown loss kind: " + s);
}

std::string to_string(LossKind kind) {
  return kind == LossKind::CrossEntropy ? "cross-entropy" : "squared-error";
}

namespace {

struct BuildState {
  Shape tail;  // current non-batch shape
};

Shape conv_kernel_shape(LayerKind kind, std::size_t in_c, std::size_t out_c,
                        std::size_t k) {
  switch (kind) {
    case LayerKind::Conv1d:
      return {out_c, in_c, k};
    case LayerKind::Conv2d:
      return {out_c, in_c, k, k};
    case LayerKind::ConvTranspose1d:
      return {in_c, out_c, k};
    case LayerKind::ConvTranspose2d:
      return {in_c, out_c, k, k};
    default:
      throw ConfigError("not a convolution layer");
  }
}

// Channel count the incoming tail presents to a conv layer; tails without a
// channel axis get an implicit channel of 1.
std::size_t tail_channels(const Shape& tail, std::size_t spatial_rank) {
  if (tail.size() == spatial_rank) return 1;
  if (tail.size() == spatial_rank + 1) return tail[0];
  throw ShapeError("cannot feed shape " + shape_str(tail) + " to a " +
                   std::to_string(spatial_rank) + "-d convolution");
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

std::string layer_name(const std::string& prefix, std::size_t i) {
  return prefix + "L" + std::to_string(i);
}

std::string kind_str(LayerKind k) {
  switch (k) {
    case LayerKind::Dense:
      return "dense";
    case LayerKind::Conv1d:
      return "conv1d";
    case LayerKind::Conv2d:
      return "conv2d";
    case LayerKind::ConvTranspose1d:
      return "conv-transpose1d";
    case LayerKind::ConvTranspose2d:
      return "conv-transpose2d";
    case LayerKind::Relu:
      return "relu";
    case LayerKind::Tanh:
      return "tanh";
    case LayerKind::Flatten:
      return "flatten";
    case LayerKind::Reshape:
      return "reshape";
  }
  return "?";
}

LayerKind kind_from_str(const std::string& s) {
  if (s == "dense") return LayerKind::Dense;
  if (s == "conv1d") return LayerKind::Conv1d;
  if (s == "conv2d") return LayerKind::Conv2d;
  if (s == "conv-transpose1d") return LayerKind::ConvTranspose1d;
  if (s == "conv-transpose2d") return LayerKind::ConvTranspose2d;
  if (s == "relu") return LayerKind::Relu;
  if (s == "tanh") return LayerKind::Tanh;
  if (s == "flatten") return LayerKind::Flatten;
  if (s == "reshape") return LayerKind::Reshape;
  throw ConfigError("unknown layer kind: " + s);
}

// Walks the layer stack tracking the non-batch shape; optionally creates
// parameters, optionally wires nodes.
struct Walker {
  const NetworkSpec& net;
  ParameterSet* create_into = nullptr;
  Rng* rng = nullptr;
  std::shared_ptr<ParameterSet> bind_from;
  NodePtr node;  // current node when wiring
  std::string prefix;

  Shape run() {
    Shape tail = net.input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const LayerSpec& l = net.layers[i];
      switch (l.kind) {
        case LayerKind::Relu:
          if (node) node = relu(node);
          break;
        case LayerKind::Tanh:
          if (node) node = tanh_op(node);
          break;
        case LayerKind::Flatten:
          tail = {shape_numel(tail)};
          if (node) node = reshape_tail(node, tail);
          break;
        case LayerKind::Reshape:
          if (shape_numel(l.tail) != shape_numel(tail)) {
            throw ShapeError("reshape from " + shape_str(tail) + " to " +
                             shape_str(l.tail) + " changes element count");
          }
          tail = l.tail;
          if (node) node = reshape_tail(node, tail);
          break;
        case LayerKind::Dense: {
          if (tail.size() != 1) {
            Shape flat{shape_numel(tail)};
            if (node) node = reshape_tail(node, flat);
            tail = flat;
          }
          std::size_t in = tail[0];
          if (l.units == 0) throw ConfigError("dense layer needs units > 0");
          add_dense(i, in, l);
          tail = {l.units};
          break;
        }
        case LayerKind::Conv1d:
        case LayerKind::ConvTranspose1d: {
          std::size_t c = tail_channels(tail, 1);
          if (tail.size() == 1) {
            Shape with_c{1, tail[0]};
            if (node) node = reshape_tail(node, with_c);
            tail = with_c;
          }
          std::size_t len = tail[1];
          std::size_t out_len = len;
          if (l.kind == LayerKind::Conv1d && l.padding == Padding::Valid) {
            if (len < l.ksize) {
              throw ConfigError("valid conv1d kernel exceeds input length");
            }
            out_len = len - l.ksize + 1;
          }
          add_conv(i, l, c);
          tail = {l.filters, out_len};
          break;
        }
        case LayerKind::Conv2d:
        case LayerKind::ConvTranspose2d: {
          std::size_t c = tail_channels(tail, 2);
          if (tail.size() == 2) {
            Shape with_c{1, tail[0], tail[1]};
            if (node) node = reshape_tail(node, with_c);
            tail = with_c;
          }
          std::size_t h = tail[1], w = tail[2];
          std::size_t oh = h, ow = w;
          if (l.kind == LayerKind::Conv2d && l.padding == Padding::Valid) {
            if (h < l.ksize || w < l.ksize) {
              throw ConfigError("valid conv2d kernel exceeds input size");
            }
            oh = h - l.ksize + 1;
            ow = w - l.ksize + 1;
          }
          add_conv(i, l, c);
          tail = {l.filters, oh, ow};
          break;
        }
      }
    }
    return tail;
  }

  void add_dense(std::size_t i, std::size_t in, const LayerSpec& l) {
    std::string base = layer_name(prefix, i);
    if (create_into) {
      create_into->add(base + ".weight",
                       glorot_uniform({in, l.units}, in, l.units, *rng));
      create_into->add(base + ".bias", Tensor({l.units}));
    }
    if (node) {
      NodePtr w = parameter(bind_from, base + ".weight");
      if (l.weight_norm) w = weight_norm(w, WeightNormMode::PerColumn);
      node = bias_add(matmul(node, w), parameter(bind_from, base + ".bias"));
    }
  }

  void add_conv(std::size_t i, const LayerSpec& l, std::size_t in_c) {
    if (l.filters == 0 || l.ksize == 0) {
      throw ConfigError("conv layer needs filters > 0 and size > 0");
    }
    std::string base = layer_name(prefix, i);
    Shape kshape = conv_kernel_shape(l.kind, in_c, l.filters, l.ksize);
    std::size_t ktaps = l.ksize * (l.kind == LayerKind::Conv2d ||
                                           l.kind == LayerKind::ConvTranspose2d
                                       ? l.ksize
                                       : 1);
    if (create_into) {
      create_into->add(base + ".weight",
                       glorot_uniform(kshape, in_c * ktaps, l.filters * ktaps, *rng));
      create_into->add(base + ".bias", Tensor({l.filters}));
    }
    if (node) {
      NodePtr w = parameter(bind_from, base + ".weight");
      if (l.weight_norm) w = weight_norm(w, WeightNormMode::PerRow);
      NodePtr y;
      switch (l.kind) {
        case LayerKind::Conv1d:
          y = conv1d(node, w, l.padding);
          break;
        case LayerKind::Conv2d:
          y = conv2d(node, w, l.padding);
          break;
        case LayerKind::ConvTranspose1d:
          y = conv_transpose1d(node, w);
          break;
        default:
          y = conv_transpose2d(node, w);
          break;
      }
      node = bias_add(y, parameter(bind_from, base + ".bias"));
    }
  }
};

}  // namespace

void NetworkSpec::init_params(ParameterSet& params, const std::string& prefix,
                              std::uint64_t seed) const {
  Rng rng(mix_seed(seed, 0x1a7e5));
  Walker w{*this};
  w.create_into = &params;
  w.rng = &rng;
  w.prefix = prefix;
  w.run();
}

NodePtr NetworkSpec::build(NodePtr input, std::shared_ptr<ParameterSet> set,
                           const std::string& prefix) const {
  Walker w{*this};
  w.bind_from = std::move(set);
  w.node = std::move(input);
  w.prefix = prefix;
  w.run();
  return w.node;
}

Shape NetworkSpec::output_tail() const {
  Walker w{*this};
  return w.run();
}

std::string NetworkSpec::to_json() const {
  json j;
  j["input_shape"] = input_shape;
  j["layers"] = json::array();
  for (const auto& l : layers) {
    json lj;
    lj["kind"] = kind_str(l.kind);
    if (l.kind == LayerKind::Dense) lj["units"] = l.units;
    if (l.filters) lj["filters"] = l.filters;
    if (l.ksize) lj["size"] = l.ksize;
    if (l.kind == LayerKind::Conv1d || l.kind == LayerKind::Conv2d) {
      lj["padding"] = l.padding == Padding::Same ? "same" : "valid";
    }
    if (l.weight_norm) lj["weight_norm"] = true;
    if (l.kind == LayerKind::Reshape) lj["tail"] = l.tail;
    j["layers"].push_back(lj);
  }
  return j.dump(2);
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  NetworkSpec spec;
  spec.input_shape = j.at("input_shape").get<Shape>();
  for (const auto& lj : j.at("layers")) {
    LayerSpec l{kind_from_str(lj.at("kind").get<std::string>())};
    if (lj.contains("units")) l.units = lj["units"].get<std::size_t>();
    if (lj.contains("filters")) l.filters = lj["filters"].get<std::size_t>();
    if (lj.contains("size")) l.ksize = lj["size"].get<std::size_t>();
    if (lj.contains("padding")) {
      l.padding = lj["padding"] == "same" ? Padding::Same : Padding::Valid;
    }
    if (lj.contains("weight_norm")) l.weight_norm = lj["weight_norm"].get<bool>();
    if (lj.contains("tail")) l.tail = lj["tail"].get<Shape>();
    spec.layers.push_back(l);
  }
  return spec;
}

Tensor Predictor::scores(const Tensor& batch) const {
  NodePtr x = placeholder("x");
  Executor exec(build_scores(x));
  return exec.forward({{"x", batch}});
}

std::vector<double> Predictor::instance_losses(const Dataset& data,
                                               LossKind kind) const {
  if (data.size() == 0) throw DataError("empty dataset");
  NodePtr x = placeholder("x");
  NodePtr y = placeholder("y");
  NodePtr out = build_scores(x);
  NodePtr losses = kind == LossKind::CrossEntropy
                       ? cross_entropy(softmax(out), y)
                       : squared_error(out, y);
  Executor exec(losses);
  std::vector<double> result;
  result.reserve(data.size());
  const std::size_t batch = 256;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::size_t end = std::min(start + batch, data.size());
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Dataset piece = data.subset(idx);
    Tensor labels = label_tensor(piece);
    const Tensor& lv = exec.forward({{"x", piece.features}, {"y", labels}});
    for (std::size_t i = 0; i < lv.numel(); ++i) result.push_back(lv[i]);
  }
  return result;
}

double Predictor::accuracy(const Dataset& data) const {
  if (loss != LossKind::CrossEntropy) {
    throw ConfigError("accuracy requires a classification predictor");
  }
  NodePtr x = placeholder("x");
  Executor exec(build_scores(x));
  std::size_t correct = 0;
  const std::size_t batch = 256;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::size_t end = std::min(start + batch, data.size());
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Dataset piece = data.subset(idx);
    const Tensor& s = exec.forward({{"x", piece.features}});
    const std::size_t k = s.dim(1);
    for (std::size_t i = 0; i < piece.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (s[i * k + j] > s[i * k + best]) best = j;
      }
      if (best == static_cast<std::size_t>(piece.labels[i])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void Predictor::save(const std::string& checkpoint_path,
                     const std::string& spec_path) const {
  save_checkpoint(*params, checkpoint_path);
  json j = json::parse(spec.to_json());
  j["loss"] = to_string(loss);
  std::ofstream f(spec_path);
  if (!f) throw DataError("cannot write predictor spec: " + spec_path);
  f << j.dump(2) << "\n";
}

Predictor Predictor::load(const std::string& checkpoint_path,
                          const std::string& spec_path) {
  std::ifstream f(spec_path);
  if (!f) throw DataError("cannot open predictor spec: " + spec_path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  json j = json::parse(text);
  Predictor p;
  p.spec = NetworkSpec::from_json(text);
  p.loss = loss_kind_from_string(j.at("loss").get<std::string>());
  p.params = std::make_shared<ParameterSet>(load_checkpoint(checkpoint_path));
  p.params->freeze();
  return p;
}

NetworkSpec preset_network(const std::string& name, const Shape& input_shape,
                           std::size_t outputs) {
  NetworkSpec spec;
  spec.input_shape = input_shape;
  if (name == "image-cnn") {
    spec.layers = {LayerSpec::conv2d(6, 5, Padding::Valid), LayerSpec::relu(),
                   LayerSpec::conv2d(12, 5, Padding::Valid), LayerSpec::relu(),
                   LayerSpec::flatten(), LayerSpec::dense(32), LayerSpec::relu(),
                   LayerSpec::dense(outputs)};
  } else if (name == "seq-cnn") {
    spec.layers = {LayerSpec::conv1d(8, 5), LayerSpec::relu(),
                   LayerSpec::conv1d(8, 5), LayerSpec::relu(),
                   LayerSpec::flatten(), LayerSpec::dense(32), LayerSpec::relu(),
                   LayerSpec::dense(outputs)};
  } else if (name == "mlp") {
    spec.layers = {LayerSpec::dense(64), LayerSpec::relu(), LayerSpec::dense(32),
                   LayerSpec::relu(), LayerSpec::dense(outputs)};
  } else if (name == "linear") {
    spec.layers = {LayerSpec::dense(outputs)};
  } else {
    throw ConfigError("unknown network preset: " + name);
  }
  return spec;
}

Tensor label_tensor(const Dataset& data) {
  if (data.classification) {
    return Tensor({data.size()}, data.labels);
  }
  return Tensor({data.size(), 1}, data.labels);
}

}  // namespace dfl
