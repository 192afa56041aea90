#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "depthclass/depth_map.hpp"

namespace depthclass {

/// The standard depth evaluation measures, pooled over all compared pixels.
/// Accuracies are percentages; T is the pixel count that entered the pool.
struct MetricsReport {
  double rms = 0.0;     // sqrt(mean squared depth error), meters
  double rel = 0.0;     // mean |error| / gt
  double log10 = 0.0;   // mean |log10 gt - log10 pred|
  double rmslog = 0.0;  // sqrt(mean squared natural-log error)
  double delta1 = 0.0;  // % of pixels with max ratio < 1.25
  double delta2 = 0.0;  // ... < 1.25^2
  double delta3 = 0.0;  // ... < 1.25^3
  std::uint64_t pixel_count = 0;
};

namespace detail {

// Compensated accumulator so the result does not depend on traversal order
// beyond ~1e-16 per step.
struct KahanSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

struct MetricAccum {
  KahanSum sq, rel, l10, sqlog;
  std::uint64_t n = 0, d1 = 0, d2 = 0, d3 = 0;

  void add(double gt, double pred) {
    const double diff = gt - pred;
    sq.add(diff * diff);
    rel.add(std::abs(diff) / gt);
    l10.add(std::abs(std::log10(gt) - std::log10(pred)));
    const double dlog = std::log(gt) - std::log(pred);
    sqlog.add(dlog * dlog);
    const double ratio = std::max(gt / pred, pred / gt);
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
    ++n;
  }

  MetricsReport report() const {
    MetricsReport r;
    r.pixel_count = n;
    const double inv = 1.0 / static_cast<double>(n);
    r.rms = std::sqrt(sq.sum * inv);
    r.rel = rel.sum * inv;
    r.log10 = l10.sum * inv;
    r.rmslog = std::sqrt(sqlog.sum * inv);
    r.delta1 = 100.0 * static_cast<double>(d1) * inv;
    r.delta2 = 100.0 * static_cast<double>(d2) * inv;
    r.delta3 = 100.0 * static_cast<double>(d3) * inv;
    return r;
  }
};

inline void check_pair(const DepthMap& gt, const DepthMap& pred) {
  if (gt.width != pred.width || gt.height != pred.height)
    throw std::invalid_argument("evaluate: dimension mismatch");
}

}  // namespace detail

/// Evaluate pred against gt over pixels valid in both maps. All compared
/// depths must be positive. The delta thresholds use strict inequality.
inline MetricsReport evaluate(const DepthMap& gt, const DepthMap& pred) {
  detail::check_pair(gt, pred);
  detail::MetricAccum acc;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i) || !pred.is_valid(i)) continue;
    if (!(gt.values[i] > 0.0) || !(pred.values[i] > 0.0))
      throw std::invalid_argument("evaluate: non-positive depth");
    acc.add(gt.values[i], pred.values[i]);
  }
  if (acc.n == 0)
    throw std::invalid_argument("evaluate: no pixel valid in both maps");
  return acc.report();
}

/// Accumulates several image pairs into one globally pooled report.
class MetricsPool {
 public:
  void add(const DepthMap& gt, const DepthMap& pred) {
    detail::check_pair(gt, pred);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!gt.is_valid(i) || !pred.is_valid(i)) continue;
      if (!(gt.values[i] > 0.0) || !(pred.values[i] > 0.0))
        throw std::invalid_argument("evaluate: non-positive depth");
      acc_.add(gt.values[i], pred.values[i]);
    }
  }
  std::uint64_t pixel_count() const { return acc_.n; }
  MetricsReport report() const {
    if (acc_.n == 0)
      throw std::invalid_argument("evaluate: no pixel valid in both maps");
    return acc_.report();
  }

 private:
  detail::MetricAccum acc_;
};

struct DepthRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// One report per range, restricting the mask to lo <= d_gt < hi. Ranges with
/// no pixels yield nullopt. Ranges must be well-formed and non-overlapping.
inline std::vector<std::optional<MetricsReport>> evaluate_by_range(
    const DepthMap& gt, const DepthMap& pred,
    const std::vector<DepthRange>& ranges) {
  detail::check_pair(gt, pred);
  for (std::size_t a = 0; a < ranges.size(); ++a) {
    if (!(ranges[a].lo < ranges[a].hi))
      throw std::invalid_argument("evaluate_by_range: malformed range");
    for (std::size_t b = a + 1; b < ranges.size(); ++b) {
      if (ranges[a].lo < ranges[b].hi && ranges[b].lo < ranges[a].hi)
        throw std::invalid_argument("evaluate_by_range: overlapping ranges");
    }
  }
  std::vector<detail::MetricAccum> accs(ranges.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i) || !pred.is_valid(i)) continue;
    if (!(gt.values[i] > 0.0) || !(pred.values[i] > 0.0))
      throw std::invalid_argument("evaluate: non-positive depth");
    for (std::size_t r = 0; r < ranges.size(); ++r) {
      if (gt.values[i] >= ranges[r].lo && gt.values[i] < ranges[r].hi) {
        accs[r].add(gt.values[i], pred.values[i]);
        break;
      }
    }
  }
  std::vector<std::optional<MetricsReport>> out(ranges.size());
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    if (accs[r].n > 0) out[r] = accs[r].report();
  }
  return out;
}

/// Flat key=value serialization, one metric per line, 6 significant digits.
inline std::string format_report(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "rms=%.6g\nrel=%.6g\nlog10=%.6g\nrmslog=%.6g\n"
                "delta1=%.6g\ndelta2=%.6g\ndelta3=%.6g\npixels=%llu\n",
                r.rms, r.rel, r.log10, r.rmslog, r.delta1, r.delta2, r.delta3,
                static_cast<unsigned long long>(r.pixel_count));
  return buf;
}

}  // namespace depthclass
