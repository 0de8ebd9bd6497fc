#pragma once

#include <string>

#include "dfl/tensor.hpp"

namespace dfl {

/// Binary PPM (P6, maxval 255) from packed RGB bytes.
void write_ppm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<unsigned char>& rgb);

/// Heatmap overlay for a 2-d instance: channel 1 carries the grayscale
/// base, channel 2 the disruption proportion, channel 3 is zero. Both
/// tensors are (h, w) in [0,1].
std::vector<unsigned char> heatmap_rgb(const Tensor& image, const Tensor& pi);

void write_heatmap_ppm(const std::string& path, const Tensor& image,
                       const Tensor& pi);

}  // namespace dfl
