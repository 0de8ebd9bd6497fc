#include "dfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dfl/rng.hpp"

namespace dfl {

Tensor Dataset::instance(std::size_t i) const {
  if (i >= size()) {
    throw DataError("instance index " + std::to_string(i) +
                    " out of range for dataset of size " + std::to_string(size()));
  }
  Shape shape{1};
  for (auto d : feature_shape()) shape.push_back(d);
  const std::size_t f = feature_count();
  std::vector<double> data(features.data() + i * f, features.data() + (i + 1) * f);
  return Tensor(std::move(shape), std::move(data));
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.classification = classification;
  out.class_names = class_names;
  out.rescale = rescale;
  const std::size_t f = feature_count();
  Shape shape{indices.size()};
  for (auto d : feature_shape()) shape.push_back(d);
  std::vector<double> data(indices.size() * f);
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::size_t i = indices[k];
    if (i >= size()) {
      throw DataError("subset index out of range: " + std::to_string(i));
    }
    std::copy(features.data() + i * f, features.data() + (i + 1) * f,
              data.data() + k * f);
    out.labels.push_back(labels[i]);
  }
  out.features = Tensor(std::move(shape), std::move(data));
  return out;
}

int Dataset::num_classes() const {
  if (!classification) return 0;
  int mx = -1;
  for (double y : labels) mx = std::max(mx, static_cast<int>(y));
  return mx + 1;
}

void Dataset::validate_feature_range() const {
  for (std::size_t i = 0; i < features.numel(); ++i) {
    double v = features[i];
    if (!(v >= -1e-9 && v <= 1.0 + 1e-9)) {
      throw DataError("feature entry " + std::to_string(v) +
                      " outside [0,1] at flat index " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) {
    throw DataError("truncated IDX header at offset " + std::to_string(offset));
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

}  // namespace

Tensor parse_idx(const std::string& bytes) {
  if (bytes.size() < 4) {
    throw DataError("IDX file shorter than 4-byte magic (offset 0)");
  }
  if (bytes[0] != 0 || bytes[1] != 0) {
    throw DataError("malformed IDX magic at offset 0: first two bytes not zero");
  }
  unsigned char type = static_cast<unsigned char>(bytes[2]);
  unsigned char rank = static_cast<unsigned char>(bytes[3]);
  if (type != 0x08) {
    throw DataError("unsupported IDX payload type 0x" + std::to_string(type) +
                    " at offset 2 (only unsigned byte 0x08 accepted)");
  }
  Shape shape(rank);
  std::size_t offset = 4;
  for (unsigned r = 0; r < rank; ++r) {
    shape[r] = read_be32(bytes, offset);
    offset += 4;
  }
  std::size_t n = shape_numel(shape);
  if (offset + n > bytes.size()) {
    throw DataError("truncated IDX payload: expected " + std::to_string(n) +
                    " bytes at offset " + std::to_string(offset) + ", file has " +
                    std::to_string(bytes.size() - offset));
  }
  if (offset + n < bytes.size()) {
    throw DataError("trailing bytes after IDX payload at offset " +
                    std::to_string(offset + n));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
  }
  return Tensor(std::move(shape), std::move(data));
}

std::string serialize_idx(const Tensor& t) {
  std::string out;
  out.push_back(0);
  out.push_back(0);
  out.push_back(0x08);
  out.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) {
    auto v = static_cast<std::uint32_t>(d);
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  for (double v : t.flat()) {
    double b = std::round(v * 255.0);
    b = std::min(std::max(b, 0.0), 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(b)));
  }
  return out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

Tensor parse_idx_file(const std::string& path) { return parse_idx(read_file(path)); }

void write_idx_file(const Tensor& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file for writing: " + path);
  std::string bytes = serialize_idx(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Dataset load_idx_dataset(const std::string& images_path,
                         const std::string& labels_path) {
  Tensor images = parse_idx_file(images_path);
  Tensor labels = parse_idx_file(labels_path);
  if (labels.rank() != 1) {
    throw DataError("IDX label file must be rank 1, got " +
                    shape_str(labels.shape()));
  }
  if (images.rank() < 2 || images.dim(0) != labels.dim(0)) {
    throw DataError("IDX image/label count mismatch: " +
                    shape_str(images.shape()) + " vs " + shape_str(labels.shape()));
  }
  Dataset data;
  data.features = images;
  data.labels.reserve(labels.numel());
  // label bytes come back scaled by 1/255
  for (double v : labels.flat()) {
    data.labels.push_back(std::round(v * 255.0));
  }
  data.classification = true;
  return data;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

Dataset parse_csv_dataset(const std::string& text, long label_column,
                          bool rescale, bool has_header) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    if (has_header && line_no == 1) continue;
    auto cells = split_csv_line(line);
    if (width == 0) {
      width = cells.size();
    } else if (cells.size() != width) {
      throw DataError("ragged CSV row " + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " cells, got " +
                      std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        double v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
        row.push_back(v);
      } catch (const std::exception&) {
        throw DataError("non-numeric CSV cell at row " + std::to_string(line_no) +
                        ", column " + std::to_string(c + 1) + ": '" + cells[c] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("empty CSV dataset");
  long ncols = static_cast<long>(width);
  long lc = label_column < 0 ? ncols + label_column : label_column;
  if (lc < 0 || lc >= ncols) {
    throw DataError("label column " + std::to_string(label_column) +
                    " out of range for " + std::to_string(ncols) + " columns");
  }
  Dataset data;
  std::size_t p = width - 1;
  std::vector<double> feat(rows.size() * p);
  data.labels.reserve(rows.size());
  bool integer_labels = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t k = 0;
    for (long c = 0; c < ncols; ++c) {
      if (c == lc) {
        double y = rows[i][c];
        if (std::round(y) != y) integer_labels = false;
        data.labels.push_back(y);
      } else {
        feat[i * p + k++] = rows[i][c];
      }
    }
  }
  data.features = Tensor({rows.size(), p}, std::move(feat));
  data.classification = integer_labels;
  if (rescale) {
    RescaleStats stats = compute_rescale_stats(data);
    data = apply_rescale(data, stats);
  }
  return data;
}

Dataset load_csv_dataset(const std::string& path, long label_column, bool rescale,
                         bool has_header) {
  return parse_csv_dataset(read_file(path), label_column, rescale, has_header);
}

RescaleStats compute_rescale_stats(const Dataset& data) {
  const std::size_t p = data.feature_count();
  const std::size_t n = data.size();
  if (n == 0) throw DataError("cannot compute rescale statistics of empty dataset");
  RescaleStats stats;
  stats.min.assign(p, 0.0);
  stats.max.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double lo = data.features[j], hi = data.features[j];
    for (std::size_t i = 1; i < n; ++i) {
      double v = data.features[i * p + j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    stats.min[j] = lo;
    stats.max[j] = hi;
  }
  return stats;
}

Dataset apply_rescale(const Dataset& data, const RescaleStats& stats) {
  const std::size_t p = data.feature_count();
  if (stats.min.size() != p || stats.max.size() != p) {
    throw DataError("rescale statistics cover " + std::to_string(stats.min.size()) +
                    " columns, dataset has " + std::to_string(p));
  }
  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double range = stats.max[j] - stats.min[j];
      double v = data.features[i * p + j];
      // constant columns rescale to 0; out-of-range test values clip
      double scaled = range <= 0.0 ? 0.0 : (v - stats.min[j]) / range;
      out.features[i * p + j] = std::min(std::max(scaled, 0.0), 1.0);
    }
  }
  out.rescale = stats;
  return out;
}

Dataset filter_classes(const Dataset& data, const std::vector<int>& keep,
                       bool relabel) {
  std::set<int> present;
  for (double y : data.labels) present.insert(static_cast<int>(y));
  std::map<int, double> remap;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (!present.count(keep[k])) {
      throw DataError("class " + std::to_string(keep[k]) + " not present in dataset");
    }
    remap[keep[k]] = relabel ? static_cast<double>(k) : static_cast<double>(keep[k]);
  }
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (remap.count(static_cast<int>(data.labels[i]))) indices.push_back(i);
  }
  Dataset out = data.subset(indices);
  for (double& y : out.labels) y = remap[static_cast<int>(y)];
  if (relabel) {
    std::map<int, std::string> names;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      auto it = data.class_names.find(keep[k]);
      names[static_cast<int>(k)] =
          it != data.class_names.end() ? it->second : std::to_string(keep[k]);
    }
    out.class_names = names;
  }
  return out;
}

std::vector<Dataset> split(const Dataset& data, const std::vector<double>& fractions,
                           std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(total));
  }
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Dataset> parts;
  double cum = 0.0;
  std::size_t start = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    cum += fractions[k];
    std::size_t end = k + 1 == fractions.size()
                          ? data.size()
                          : static_cast<std::size_t>(
                                std::floor(cum * static_cast<double>(data.size()) + 1e-9));
    std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
    parts.push_back(data.subset(idx));
    start = end;
  }
  return parts;
}

}  // namespace dfl
