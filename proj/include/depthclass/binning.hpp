#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "depthclass/depth_map.hpp"
#include "depthclass/score_volume.hpp"

namespace depthclass {

enum class BinSpace { Linear, Log };

/// Discretization of the depth range [d_min, d_max] into B bins. Log space
/// puts the edges uniformly in ln(d), so quantization error is a fixed ratio;
/// linear space puts them uniformly in d. A bin decodes to its center, which
/// is the geometric (log) or arithmetic (linear) mean of its two edges.
struct DepthBinning {
  int bin_count = 0;
  double d_min = 0.0;
  double d_max = 0.0;
  BinSpace space = BinSpace::Log;
  std::vector<double> edges;    // bin_count + 1, strictly increasing
  std::vector<double> centers;  // bin_count decode values
};

inline DepthBinning make_binning(int bin_count, double d_min, double d_max,
                                 BinSpace space) {
  if (bin_count < 1)
    throw std::invalid_argument("make_binning: bin_count must be >= 1");
  if (!(d_min > 0.0) || !std::isfinite(d_min))
    throw std::invalid_argument("make_binning: d_min must be positive");
  if (!(d_max > d_min) || !std::isfinite(d_max))
    throw std::invalid_argument("make_binning: d_max must exceed d_min");

  DepthBinning b;
  b.bin_count = bin_count;
  b.d_min = d_min;
  b.d_max = d_max;
  b.space = space;
  b.edges.resize(bin_count + 1);
  b.centers.resize(bin_count);

  if (space == BinSpace::Log) {
    const double lo = std::log(d_min), hi = std::log(d_max);
    for (int k = 0; k <= bin_count; ++k)
      b.edges[k] = std::exp(lo + (hi - lo) * k / bin_count);
    for (int k = 0; k < bin_count; ++k)
      b.centers[k] = std::sqrt(b.edges[k] * b.edges[k + 1]);
  } else {
    for (int k = 0; k <= bin_count; ++k)
      b.edges[k] = d_min + (d_max - d_min) * k / bin_count;
    for (int k = 0; k < bin_count; ++k)
      b.centers[k] = 0.5 * (b.edges[k] + b.edges[k + 1]);
  }
  // Pin the endpoints; the loop above can drift by an ulp.
  b.edges.front() = d_min;
  b.edges.back() = d_max;
  return b;
}

/// Bin index k with edges[k] <= d < edges[k+1]. Depths outside the range
/// clamp to the first or last bin.
inline int depth_to_label(double d, const DepthBinning& binning) {
  if (!std::isfinite(d) || d <= 0.0)
    throw std::invalid_argument("depth_to_label: depth must be finite and > 0");
  const auto it =
      std::upper_bound(binning.edges.begin(), binning.edges.end(), d);
  const int k = static_cast<int>(it - binning.edges.begin()) - 1;
  return std::clamp(k, 0, binning.bin_count - 1);
}

inline double label_to_depth(int label, const DepthBinning& binning) {
  if (label < 0 || label >= binning.bin_count)
    throw std::out_of_range("label_to_depth: label out of range");
  return binning.centers[label];
}

/// Snap every valid pixel to the center of its bin; invalid pixels untouched.
inline DepthMap quantize_depthmap(const DepthMap& gt,
                                  const DepthBinning& binning) {
  DepthMap out = gt;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i)) continue;
    out.values[i] = binning.centers[depth_to_label(gt.values[i], binning)];
  }
  return out;
}

/// Per-pixel argmax labeling and its decoded depth map. Works on logits or
/// probabilities (argmax is the same either way).
inline std::pair<LabelMap, DepthMap> argmax_decode(const ScoreVolume& scores,
                                                   const DepthBinning& binning) {
  if (scores.bin_count != binning.bin_count)
    throw std::invalid_argument("argmax_decode: bin count mismatch");
  LabelMap labels(scores.width, scores.height, scores.bin_count);
  DepthMap depth(scores.width, scores.height);
  for (int y = 0; y < scores.height; ++y) {
    for (int x = 0; x < scores.width; ++x) {
      const std::size_t i = labels.index(x, y);
      const int k = argmax_bin(scores.pixel(i), scores.bin_count);
      labels.set(x, y, k);
      depth.set(x, y, binning.centers[k]);
    }
  }
  return {std::move(labels), std::move(depth)};
}

/// Quantize a valid depth map to labels under the given binning.
inline LabelMap depthmap_to_labels(const DepthMap& gt,
                                   const DepthBinning& binning) {
  LabelMap out(gt.width, gt.height, binning.bin_count);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i)) continue;
    out.labels[i] = depth_to_label(gt.values[i], binning);
    out.valid[i] = 1;
  }
  return out;
}

/// Decode a label map through bin centers.
inline DepthMap labels_to_depthmap(const LabelMap& labels,
                                   const DepthBinning& binning) {
  if (labels.bin_count != binning.bin_count)
    throw std::invalid_argument("labels_to_depthmap: bin count mismatch");
  DepthMap out(labels.width, labels.height);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels.is_valid(i)) continue;
    out.values[i] = label_to_depth(labels.labels[i], binning);
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace depthclass
