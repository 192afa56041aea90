#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "depthclass/depth_map.hpp"

namespace depthclass {

enum class VolumeKind { Logits, Probabilities };

/// Per-pixel length-B score vector: raw classifier logits or normalized
/// probabilities. Storage is pixel-major, bins contiguous per pixel.
struct ScoreVolume {
  int width = 0;
  int height = 0;
  int bin_count = 0;
  VolumeKind kind = VolumeKind::Logits;
  std::vector<double> data;

  ScoreVolume() = default;
  ScoreVolume(int w, int h, int bins, VolumeKind k)
      : width(w),
        height(h),
        bin_count(bins),
        kind(k),
        data(static_cast<std::size_t>(w) * h * bins, 0.0) {
    if (w <= 0 || h <= 0 || bins <= 0)
      throw std::invalid_argument("ScoreVolume: bad size");
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  std::size_t offset(std::size_t pixel) const { return pixel * bin_count; }
  double* pixel(std::size_t i) { return data.data() + offset(i); }
  const double* pixel(std::size_t i) const { return data.data() + offset(i); }
  double& at(int x, int y, int bin) {
    return data[(static_cast<std::size_t>(y) * width + x) * bin_count + bin];
  }
  double at(int x, int y, int bin) const {
    return data[(static_cast<std::size_t>(y) * width + x) * bin_count + bin];
  }

  /// Probability volumes must be nonnegative and sum to 1 per pixel.
  void check(double tol = 1e-9) const {
    if (data.size() != pixel_count() * bin_count)
      throw std::invalid_argument("ScoreVolume: data size mismatch");
    if (kind != VolumeKind::Probabilities) return;
    for (std::size_t i = 0; i < pixel_count(); ++i) {
      const double* p = pixel(i);
      double sum = 0.0;
      for (int b = 0; b < bin_count; ++b) {
        if (p[b] < 0.0)
          throw std::invalid_argument("ScoreVolume: negative probability");
        sum += p[b];
      }
      if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("ScoreVolume: pixel not normalized");
    }
  }
};

/// Per-pixel stabilized softmax. Input must be logits with finite entries.
inline ScoreVolume softmax_pixelwise(const ScoreVolume& logits) {
  if (logits.kind != VolumeKind::Logits)
    throw std::invalid_argument("softmax_pixelwise: expected logits");
  ScoreVolume out(logits.width, logits.height, logits.bin_count,
                  VolumeKind::Probabilities);
  const int B = logits.bin_count;
  for (std::size_t i = 0; i < logits.pixel_count(); ++i) {
    const double* z = logits.pixel(i);
    double* p = out.pixel(i);
    double m = z[0];
    for (int b = 0; b < B; ++b) {
      if (!std::isfinite(z[b]))
        throw std::invalid_argument("softmax_pixelwise: non-finite logit");
      m = std::max(m, z[b]);
    }
    double sum = 0.0;
    for (int b = 0; b < B; ++b) {
      p[b] = std::exp(z[b] - m);
      sum += p[b];
    }
    const double inv = 1.0 / sum;
    for (int b = 0; b < B; ++b) p[b] *= inv;
  }
  return out;
}

/// Index of the largest score per pixel; ties break to the lowest index.
inline int argmax_bin(const double* scores, int bin_count) {
  int best = 0;
  for (int b = 1; b < bin_count; ++b) {
    if (scores[b] > scores[best]) best = b;
  }
  return best;
}

/// Per-pixel maximum probability, each value in [1/B, 1].
inline std::vector<double> confidence_map(const ScoreVolume& probs) {
  if (probs.kind != VolumeKind::Probabilities)
    throw std::invalid_argument("confidence_map: expected probabilities");
  std::vector<double> conf(probs.pixel_count());
  for (std::size_t i = 0; i < probs.pixel_count(); ++i) {
    conf[i] = probs.pixel(i)[argmax_bin(probs.pixel(i), probs.bin_count)];
  }
  return conf;
}

}  // namespace depthclass
