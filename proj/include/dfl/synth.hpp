#pragma once

#include <cstdint>

#include "dfl/data.hpp"

namespace dfl {

/// Procedural 28x28 grayscale digit glyphs (classes 1, 7, 9) with jittered
/// position, slant, stroke width, and intensity. Deterministic in the seed.
/// The discriminative 7-vs-9 cue is the loop closure of the 9 against the
/// open top of the 7, so budgeted localization has a compact target.
Dataset synth_digits(std::size_t n, std::uint64_t seed);

/// Writes synth_digits output as a standard IDX image/label file pair.
void write_digit_idx_files(const Dataset& digits, const std::string& images_path,
                           const std::string& labels_path);

/// Two-class 1-d signals: smooth background plus a class-dependent bump
/// motif whose position jitters per instance, which rewards translation-
/// aware localizers. Features rescaled to [0,1].
Dataset synth_sequences(std::size_t n, std::size_t length, std::uint64_t seed);

/// Two-class tabular data with `informative` shifted coordinates (descending
/// strength) and the rest uniform noise. Features lie in [0,1].
Dataset synth_tabular(std::size_t n, std::size_t p, std::size_t informative,
                      std::uint64_t seed);

/// y = x' beta + eps with x uniform in [0,1]^p; labels are real targets.
Dataset synth_linear_regression(std::size_t n, const std::vector<double>& beta,
                                double noise_sd, std::uint64_t seed);

}  // namespace dfl
