#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lumina/tensor.hpp"

namespace lumina {

/// CPU image: interleaved RGB rows, double precision, values in [0,1].
/// Double pixels keep metric arithmetic exact enough for the dB-level
/// tolerances the metrics are tested to.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // height * width * 3, row-major, RGB

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0.0) {}

  double& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
  bool same_size(const Image& other) const {
    return width == other.width && height == other.height;
  }
};

/// Planar 1 x 3 x H x W tensor from an interleaved image.
template <class S>
Tensor<S> to_tensor(const Image& img) {
  Tensor<S> t({1, 3, img.height, img.width});
  S* v = t.data();
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        v[c * plane + static_cast<int64_t>(y) * img.width + x] =
            static_cast<S>(img.at(y, x, c));
  return t;
}

/// Interleaved image from a 1 x 3 x H x W (or 1 x 1 x H x W, replicated)
/// tensor, clamped to [0,1].
template <class S>
Image from_tensor(const Tensor<S>& t) {
  if (t.rank() != 4 || t.dim(0) != 1 || (t.dim(1) != 3 && t.dim(1) != 1))
    throw DimensionError("from_tensor: expected 1x3xHxW or 1x1xHxW, got " +
                         shape_str(t.shape()));
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Image img(w, h);
  const S* v = t.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const int src = c == 1 ? 0 : ch;
        double val = static_cast<double>(v[src * plane + static_cast<int64_t>(y) * w + x]);
        img.at(y, x, ch) = std::min(std::max(val, 0.0), 1.0);
      }
  return img;
}

}  // namespace lumina
