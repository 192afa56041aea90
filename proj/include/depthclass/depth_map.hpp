#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace depthclass {

/// Per-pixel metric depth in meters with a validity mask. Values at invalid
/// pixels carry no meaning (serialized as NaN). Row-major storage.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        values(static_cast<std::size_t>(w) * h,
               std::numeric_limits<double>::quiet_NaN()),
        valid(static_cast<std::size_t>(w) * h, 0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("DepthMap: bad size");
  }

  std::size_t size() const { return values.size(); }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  double at(int x, int y) const { return values[index(x, y)]; }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }

  void set(int x, int y, double d) {
    const std::size_t i = index(x, y);
    values[i] = d;
    valid[i] = 1;
  }
  void set_invalid(int x, int y) {
    const std::size_t i = index(x, y);
    values[i] = std::numeric_limits<double>::quiet_NaN();
    valid[i] = 0;
  }

  /// Every valid depth must be finite and positive.
  void check() const {
    if (values.size() != static_cast<std::size_t>(width) * height ||
        valid.size() != values.size())
      throw std::invalid_argument("DepthMap: grid size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (valid[i] && !(std::isfinite(values[i]) && values[i] > 0.0))
        throw std::invalid_argument("DepthMap: invalid depth at valid pixel");
    }
  }
};

/// Per-pixel discrete bin indices in [0, bin_count). Same masking rules as
/// DepthMap.
struct LabelMap {
  int width = 0;
  int height = 0;
  int bin_count = 0;
  std::vector<int> labels;
  std::vector<std::uint8_t> valid;

  LabelMap() = default;
  LabelMap(int w, int h, int bins)
      : width(w),
        height(h),
        bin_count(bins),
        labels(static_cast<std::size_t>(w) * h, 0),
        valid(static_cast<std::size_t>(w) * h, 0) {
    if (w <= 0 || h <= 0 || bins <= 0)
      throw std::invalid_argument("LabelMap: bad size");
  }

  std::size_t size() const { return labels.size(); }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }

  void set(int x, int y, int label) {
    const std::size_t i = index(x, y);
    labels[i] = label;
    valid[i] = 1;
  }

  void check() const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (valid[i] && (labels[i] < 0 || labels[i] >= bin_count))
        throw std::invalid_argument("LabelMap: label out of range");
    }
  }
};

}  // namespace depthclass
