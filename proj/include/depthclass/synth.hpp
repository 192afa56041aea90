#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "depthclass/depth_map.hpp"
#include "depthclass/image.hpp"
#include "depthclass/io.hpp"
#include "depthclass/rng.hpp"

namespace depthclass {

enum class SceneLayout { GradientPlane, TwoRegions, Blocks };

/// Deterministic synthetic RGB-D scene description. The same spec always
/// produces the same bytes. The red channel encodes a monotone cue of depth
/// (nearer = brighter), which is what makes the scenes learnable; TwoRegions
/// additionally separates the regions in the blue channel by region_contrast.
struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  double d_min = 0.7;
  double d_max = 10.0;
  SceneLayout layout = SceneLayout::GradientPlane;
  double noise_sigma = 0.0;       // meters
  double missing_fraction = 0.0;  // [0, 1)
  double region_contrast = 1.0;   // TwoRegions only, [0, 1]
};

struct Sample {
  Image rgb;
  DepthMap depth;
};

namespace detail {

inline std::uint8_t depth_cue(double d, const SceneSpec& spec) {
  const double lo = std::log(spec.d_min), hi = std::log(spec.d_max);
  const double t = (hi - std::log(d)) / (hi - lo);
  const double v = std::round(255.0 * std::clamp(t, 0.0, 1.0));
  return static_cast<std::uint8_t>(v);
}

}  // namespace detail

inline Sample generate(const SceneSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0)
    throw std::invalid_argument("generate: bad scene size");
  if (!(spec.d_min > 0.0) || !(spec.d_max > spec.d_min))
    throw std::invalid_argument("generate: bad depth range");
  if (!(spec.missing_fraction >= 0.0) || spec.missing_fraction >= 1.0)
    throw std::invalid_argument("generate: missing_fraction must be in [0,1)");
  if (spec.noise_sigma < 0.0)
    throw std::invalid_argument("generate: negative noise_sigma");

  Rng rng(spec.seed);
  const int w = spec.width, h = spec.height;
  const double span = spec.d_max - spec.d_min;

  // Layout parameters are drawn before the pixel loop so the draw order is
  // stable across layouts.
  int split_col = 0;
  double region_depth[2] = {0.0, 0.0};
  struct Block {
    int x0, y0, x1, y1;
    double depth;
  };
  std::vector<Block> blocks;
  if (spec.layout == SceneLayout::TwoRegions) {
    split_col = w / 3 + static_cast<int>(rng.next_below(
                            static_cast<std::uint64_t>(std::max(1, w / 3))));
    const double lo = std::log(spec.d_min), hi = std::log(spec.d_max);
    region_depth[0] = std::exp(lo + 0.30 * (hi - lo));
    region_depth[1] = std::exp(lo + 0.70 * (hi - lo));
  } else if (spec.layout == SceneLayout::Blocks) {
    const int count = 2 + static_cast<int>(rng.next_below(3));
    for (int k = 0; k < count; ++k) {
      Block b;
      b.x0 = static_cast<int>(rng.next_below(std::max(1, w - 2)));
      b.y0 = static_cast<int>(rng.next_below(std::max(1, h - 2)));
      b.x1 = std::min<int>(w, b.x0 + 2 + static_cast<int>(rng.next_below(
                                              std::max(2, w / 2))));
      b.y1 = std::min<int>(h, b.y0 + 2 + static_cast<int>(rng.next_below(
                                              std::max(2, h / 2))));
      b.depth = spec.d_min + span * (0.1 + 0.8 * rng.uniform01());
      blocks.push_back(b);
    }
  }

  Sample out;
  out.rgb = Image(w, h);
  out.depth = DepthMap(w, h);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double d;
      bool right_region = false;
      switch (spec.layout) {
        case SceneLayout::GradientPlane:
          d = h > 1 ? spec.d_min + span * y / (h - 1) : spec.d_min;
          break;
        case SceneLayout::TwoRegions:
          right_region = x >= split_col;
          d = region_depth[right_region ? 1 : 0];
          break;
        case SceneLayout::Blocks: {
          d = spec.d_min + 0.85 * span;  // background plane
          for (const Block& b : blocks) {
            if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) d = b.depth;
          }
          break;
        }
      }
      if (spec.noise_sigma > 0.0) d += spec.noise_sigma * rng.normal();
      d = std::clamp(d, spec.d_min, spec.d_max);
      // Round through binary32 so serialization is lossless.
      d = static_cast<double>(static_cast<float>(d));
      out.depth.set(x, y, d);

      out.rgb.at(0, x, y) = detail::depth_cue(d, spec);
      const double texture = rng.uniform(-8.0, 8.0);
      out.rgb.at(1, x, y) =
          static_cast<std::uint8_t>(std::clamp(128.0 + texture, 0.0, 255.0));
      double blue = 64.0;
      if (spec.layout == SceneLayout::TwoRegions && right_region)
        blue += 128.0 * spec.region_contrast;
      out.rgb.at(2, x, y) =
          static_cast<std::uint8_t>(std::clamp(blue, 0.0, 255.0));
    }
  }

  // Exactly floor(missing_fraction * N) pixels go invalid, chosen by a
  // seeded shuffle.
  const std::size_t n = out.depth.size();
  const std::size_t missing =
      static_cast<std::size_t>(spec.missing_fraction * static_cast<double>(n));
  if (missing > 0) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    for (std::size_t i = 0; i < missing; ++i) {
      out.depth.valid[order[i]] = 0;
      out.depth.values[order[i]] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

/// Writes <prefix>.ppm and <prefix>.dmap.
inline void write_sample(const std::string& prefix, const Sample& sample) {
  write_ppm(prefix + ".ppm", sample.rgb);
  write_dmap(prefix + ".dmap", sample.depth);
}

inline Sample read_sample(const std::string& prefix) {
  Sample s;
  s.rgb = read_ppm(prefix + ".ppm");
  s.depth = read_dmap(prefix + ".dmap");
  return s;
}

}  // namespace depthclass
