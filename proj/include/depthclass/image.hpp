#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace depthclass {

/// 8-bit RGB image, planar layout (all R, then G, then B), row-major planes.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height

  Image() = default;
  Image(int w, int h)
      : width(w), height(h), data(3u * static_cast<std::size_t>(w) * h, 0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("Image: bad size");
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  std::uint8_t& at(int channel, int x, int y) {
    return data[channel * pixel_count() + static_cast<std::size_t>(y) * width +
                x];
  }
  std::uint8_t at(int channel, int x, int y) const {
    return data[channel * pixel_count() + static_cast<std::size_t>(y) * width +
                x];
  }
};

}  // namespace depthclass
