#include "dfl/ppm.hpp"

#include <cmath>
#include <fstream>

namespace dfl {

void write_ppm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<unsigned char>& rgb) {
  if (rgb.size() != width * height * 3) {
    throw DataError("PPM payload size does not match " + std::to_string(width) +
                    "x" + std::to_string(height));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open PPM for writing: " + path);
  f << "P6\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
}

namespace {

unsigned char to_byte(double v) {
  double b = std::round(std::min(std::max(v, 0.0), 1.0) * 255.0);
  return static_cast<unsigned char>(b);
}

}  // namespace

std::vector<unsigned char> heatmap_rgb(const Tensor& image, const Tensor& pi) {
  if (image.rank() != 2 || !image.same_shape(pi)) {
    throw ShapeError("heatmap needs matching rank-2 image and pi tensors");
  }
  std::vector<unsigned char> rgb(image.numel() * 3);
  for (std::size_t i = 0; i < image.numel(); ++i) {
    rgb[i * 3 + 0] = to_byte(image[i]);
    rgb[i * 3 + 1] = to_byte(pi[i]);
    rgb[i * 3 + 2] = 0;
  }
  return rgb;
}

void write_heatmap_ppm(const std::string& path, const Tensor& image,
                       const Tensor& pi) {
  write_ppm(path, image.dim(1), image.dim(0), heatmap_rgb(image, pi));
}

}  // namespace dfl
