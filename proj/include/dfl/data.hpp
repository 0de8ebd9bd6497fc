#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfl/tensor.hpp"

namespace dfl {

/// Per-column min/max recorded by rescaling, kept for inverse mapping and
/// for applying train-split statistics to test data.
struct RescaleStats {
  std::vector<double> min;
  std::vector<double> max;
};

/// Instances with features in [0,1] plus labels. Labels are class ids for
/// classification, real targets for regression.
struct Dataset {
  Tensor features;  // (n, feature-shape...)
  std::vector<double> labels;
  bool classification = true;
  std::map<int, std::string> class_names;
  std::optional<RescaleStats> rescale;

  std::size_t size() const { return labels.size(); }
  Shape feature_shape() const {
    Shape s(features.shape().begin() + 1, features.shape().end());
    return s;
  }
  std::size_t feature_count() const {
    return size() == 0 ? 0 : features.numel() / size();
  }
  /// Features of instance i, copied into an (1, feature-shape...) layout.
  Tensor instance(std::size_t i) const;
  /// Subset by instance indices (duplication allowed: bootstrap resamples).
  Dataset subset(const std::vector<std::size_t>& indices) const;
  int num_classes() const;
  /// Entries must lie in [0,1] within 1e-9.
  void validate_feature_range() const;
};

/// IDX (MNIST container) parsing: magic 0x00 0x00 <type> <rank>, big-endian
/// u32 dims, payload. Only the unsigned-byte payload type is accepted;
/// bytes map to [0,1] by division by 255.
Tensor parse_idx(const std::string& bytes);
Tensor parse_idx_file(const std::string& path);

/// Inverse of parse_idx for [0,1] tensors (values are rounded to bytes).
std::string serialize_idx(const Tensor& t);
void write_idx_file(const Tensor& t, const std::string& path);

/// Builds a dataset from IDX image + label files.
Dataset load_idx_dataset(const std::string& images_path,
                         const std::string& labels_path);

/// RFC-4180-style numeric CSV. label_column indexes columns (negative counts
/// from the end). When rescale is set, per-column min-max statistics are
/// computed from this data and recorded.
Dataset parse_csv_dataset(const std::string& text, long label_column,
                          bool rescale, bool has_header = false);
Dataset load_csv_dataset(const std::string& path, long label_column,
                         bool rescale, bool has_header = false);

/// Min-max statistics of the feature columns (flattened feature shape).
RescaleStats compute_rescale_stats(const Dataset& data);
/// Applies recorded statistics; constant columns map to 0.
Dataset apply_rescale(const Dataset& data, const RescaleStats& stats);

Dataset filter_classes(const Dataset& data, const std::vector<int>& keep,
                       bool relabel);

/// Seeded-shuffle partition; fractions must sum to 1 within 1e-9.
std::vector<Dataset> split(const Dataset& data,
                           const std::vector<double>& fractions,
                           std::uint64_t seed);

}  // namespace dfl
