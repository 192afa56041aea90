#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "depthclass/depth_map.hpp"
#include "depthclass/metrics.hpp"
#include "depthclass/score_volume.hpp"

namespace depthclass {

/// B x B label-similarity matrix with entries exp(-alpha * (p - q)^2).
/// Symmetric with unit diagonal; alpha = 0 gives the all-ones matrix and a
/// large alpha recovers a plain one-hot target. Rows weight how much each
/// label's log-probability contributes to the loss of a given target label,
/// so near-miss predictions still drive the gradient.
struct InfoGainMatrix {
  int bin_count = 0;
  double alpha = 0.0;
  std::vector<double> values;  // row-major B x B

  double at(int p, int q) const {
    return values[static_cast<std::size_t>(p) * bin_count + q];
  }
  const double* row(int p) const {
    return values.data() + static_cast<std::size_t>(p) * bin_count;
  }
};

inline InfoGainMatrix build_infogain(int bin_count, double alpha) {
  if (bin_count < 1)
    throw std::invalid_argument("build_infogain: bin_count must be >= 1");
  if (!(alpha >= 0.0))
    throw std::invalid_argument("build_infogain: alpha must be >= 0");
  InfoGainMatrix h;
  h.bin_count = bin_count;
  h.alpha = alpha;
  h.values.resize(static_cast<std::size_t>(bin_count) * bin_count);
  for (int p = 0; p < bin_count; ++p) {
    for (int q = 0; q < bin_count; ++q) {
      const double d = static_cast<double>(p - q);
      h.values[static_cast<std::size_t>(p) * bin_count + q] =
          std::exp(-alpha * d * d);
    }
  }
  return h;
}

/// Loss value (mean over valid pixels) and its exact gradient with respect to
/// the logits. Invalid pixels contribute nothing and get zero gradient.
struct LossResult {
  double value = 0.0;
  ScoreVolume grad;  // kind Logits, same shape as the input
};

/// Similarity-weighted multinomial logistic loss over a logit volume:
///
///   L = -(1/N) sum_i sum_d H(t_i, d) * ln P(d | z_i)
///
/// with P the per-pixel softmax, t_i the target label, and N the number of
/// valid pixels. The gradient per valid pixel i and bin d is
///
///   dL/dz_{i,d} = (1/N) * (P(d | z_i) * S_i - H(t_i, d)),   S_i = sum_d H(t_i, d)
///
/// which sums to zero over d. Note rows of H are not normalized, so the loss
/// does not reach zero even at a perfect prediction unless alpha is large.
inline LossResult loss_forward_backward(const ScoreVolume& logits,
                                        const LabelMap& target,
                                        const InfoGainMatrix& h) {
  if (logits.kind != VolumeKind::Logits)
    throw std::invalid_argument("loss_forward_backward: expected logits");
  if (logits.width != target.width || logits.height != target.height)
    throw std::invalid_argument("loss_forward_backward: shape mismatch");
  if (logits.bin_count != h.bin_count)
    throw std::invalid_argument("loss_forward_backward: bin count mismatch");

  const int B = logits.bin_count;
  LossResult out;
  out.grad =
      ScoreVolume(logits.width, logits.height, B, VolumeKind::Logits);

  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target.is_valid(i)) ++n_valid;
  if (n_valid == 0)
    throw std::invalid_argument("loss_forward_backward: no valid pixels");
  const double inv_n = 1.0 / static_cast<double>(n_valid);

  detail::KahanSum total;
  std::vector<double> p(B);
  for (std::size_t i = 0; i < logits.pixel_count(); ++i) {
    if (!target.is_valid(i)) continue;
    const int t = target.labels[i];
    if (t < 0 || t >= B)
      throw std::invalid_argument("loss_forward_backward: label out of range");
    const double* z = logits.pixel(i);

    double m = z[0];
    for (int b = 1; b < B; ++b) m = std::max(m, z[b]);
    double sum = 0.0;
    for (int b = 0; b < B; ++b) {
      p[b] = std::exp(z[b] - m);
      sum += p[b];
    }
    const double lse = m + std::log(sum);
    const double inv_sum = 1.0 / sum;

    const double* hrow = h.row(t);
    double s_i = 0.0;
    double weighted = 0.0;  // sum_d H(t,d) * z_d
    for (int b = 0; b < B; ++b) {
      s_i += hrow[b];
      weighted += hrow[b] * z[b];
    }
    total.add(s_i * lse - weighted);

    double* g = out.grad.pixel(i);
    for (int b = 0; b < B; ++b) {
      g[b] = inv_n * (p[b] * inv_sum * s_i - hrow[b]);
    }
  }
  out.value = total.sum * inv_n;
  return out;
}

/// Central finite differences against the analytic gradient. Returns the
/// largest entrywise discrepancy relative to the max gradient magnitude.
/// Intended for small instances; cost is two loss evaluations per entry.
inline double check_gradient(const ScoreVolume& logits, const LabelMap& target,
                             const InfoGainMatrix& h, double step = 1e-5) {
  const LossResult analytic = loss_forward_backward(logits, target, h);
  ScoreVolume z = logits;
  double scale = 0.0;
  for (double g : analytic.grad.data) scale = std::max(scale, std::abs(g));

  double worst = 0.0;
  for (std::size_t k = 0; k < z.data.size(); ++k) {
    const double saved = z.data[k];
    z.data[k] = saved + step;
    const double up = loss_forward_backward(z, target, h).value;
    z.data[k] = saved - step;
    const double dn = loss_forward_backward(z, target, h).value;
    z.data[k] = saved;
    const double fd = (up - dn) / (2.0 * step);
    scale = std::max(scale, std::abs(fd));
    worst = std::max(worst, std::abs(fd - analytic.grad.data[k]));
  }
  return scale > 0.0 ? worst / scale : worst;
}

}  // namespace depthclass
