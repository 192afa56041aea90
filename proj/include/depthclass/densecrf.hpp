#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "depthclass/depth_map.hpp"
#include "depthclass/image.hpp"
#include "depthclass/parallel.hpp"
#include "depthclass/permutohedral.hpp"
#include "depthclass/score_volume.hpp"

namespace depthclass {

/// Pairwise kernel weights and bandwidths. The first (appearance) kernel is a
/// bilateral Gaussian over position and color; the second (smoothness) kernel
/// is spatial only. sigma_alpha/sigma_gamma are in pixels, sigma_beta in
/// 0-255 color units.
struct KernelParams {
  double w1 = 3.0;
  double w2 = 1.0;
  double sigma_alpha = 60.0;
  double sigma_beta = 10.0;
  double sigma_gamma = 3.0;

  void check() const {
    if (!(w1 >= 0.0) || !(w2 >= 0.0))
      throw std::invalid_argument("KernelParams: weights must be >= 0");
    if (!(sigma_alpha > 0.0) || !(sigma_beta > 0.0) || !(sigma_gamma > 0.0))
      throw std::invalid_argument("KernelParams: bandwidths must be > 0");
  }
};

/// Fully-connected CRF over per-pixel depth labels. The unary cost is the
/// negative log-probability from the classifier; every pixel pair is coupled
/// by |l_i - l_j| times the two-kernel Gaussian. Label distance is used raw,
/// so the pairwise pull grows with the number of bins.
struct CrfModel {
  int width = 0;
  int height = 0;
  int bin_count = 0;
  std::vector<double> unary;      // pixel-major, bin_count per pixel
  std::vector<double> positions;  // (x, y) per pixel
  std::vector<double> colors;     // (r, g, b) per pixel, 0-255
  KernelParams params;
  std::size_t exact_pixel_budget = 16384;  // Exact mode refuses above this
  int palette_cap = 1024;  // filtered mode switches to the lattice above this

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  const double* unary_row(std::size_t i) const {
    return unary.data() + i * bin_count;
  }
};

/// Builds a model from classifier probabilities and the RGB input.
inline CrfModel make_crf_model(const ScoreVolume& probs, const Image& rgb,
                               const KernelParams& params) {
  if (probs.kind != VolumeKind::Probabilities)
    throw std::invalid_argument("make_crf_model: expected probabilities");
  if (probs.width != rgb.width || probs.height != rgb.height)
    throw std::invalid_argument("make_crf_model: image size mismatch");
  params.check();

  CrfModel m;
  m.width = probs.width;
  m.height = probs.height;
  m.bin_count = probs.bin_count;
  m.params = params;
  m.unary.resize(probs.data.size());
  for (std::size_t k = 0; k < probs.data.size(); ++k)
    m.unary[k] = -std::log(std::max(probs.data[k], 1e-12));
  m.positions.resize(m.pixel_count() * 2);
  m.colors.resize(m.pixel_count() * 3);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * m.width + x;
      m.positions[i * 2] = x;
      m.positions[i * 2 + 1] = y;
      m.colors[i * 3] = rgb.at(0, x, y);
      m.colors[i * 3 + 1] = rgb.at(1, x, y);
      m.colors[i * 3 + 2] = rgb.at(2, x, y);
    }
  }
  return m;
}

/// Exact two-kernel evaluation between pixels i and j.
inline double kernel_value(std::size_t i, std::size_t j, const CrfModel& m) {
  const double dx = m.positions[i * 2] - m.positions[j * 2];
  const double dy = m.positions[i * 2 + 1] - m.positions[j * 2 + 1];
  const double pos2 = dx * dx + dy * dy;
  double col2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = m.colors[i * 3 + c] - m.colors[j * 3 + c];
    col2 += d * d;
  }
  const auto& p = m.params;
  return p.w1 * std::exp(-pos2 / (2.0 * p.sigma_alpha * p.sigma_alpha) -
                         col2 / (2.0 * p.sigma_beta * p.sigma_beta)) +
         p.w2 * std::exp(-pos2 / (2.0 * p.sigma_gamma * p.sigma_gamma));
}

/// Full CRF energy of a labeling: unary sum plus |l_i - l_j| * k(i, j) over
/// unordered pixel pairs. Quadratic in the pixel count.
inline double crf_energy(const LabelMap& labels, const CrfModel& m) {
  if (labels.width != m.width || labels.height != m.height)
    throw std::invalid_argument("crf_energy: size mismatch");
  const std::size_t n = m.pixel_count();
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int l = labels.labels[i];
    if (l < 0 || l >= m.bin_count)
      throw std::invalid_argument("crf_energy: label out of range");
    e += m.unary_row(i)[l];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int dl = std::abs(labels.labels[i] - labels.labels[j]);
      if (dl != 0) e += dl * kernel_value(i, j, m);
    }
  }
  return e;
}

enum class MeanFieldMode { Exact, Filtered };

/// Factorized approximate posterior: per-pixel distributions over labels.
struct MeanFieldState {
  ScoreVolume q;  // kind Probabilities
  int iteration = 0;

  void check_normalized(double tol = 1e-6) const {
    for (std::size_t i = 0; i < q.pixel_count(); ++i) {
      double sum = 0.0;
      for (int b = 0; b < q.bin_count; ++b) sum += q.pixel(i)[b];
      if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("MeanFieldState: Q not normalized");
    }
  }
};

/// Q_i(l) proportional to exp(-U_i(l)): the classifier's own softmax when the
/// unaries came from -ln P.
inline MeanFieldState meanfield_init(const CrfModel& m) {
  MeanFieldState s;
  s.q = ScoreVolume(m.width, m.height, m.bin_count, VolumeKind::Probabilities);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    const double* u = m.unary_row(i);
    double* q = s.q.pixel(i);
    double lo = u[0];
    for (int b = 1; b < m.bin_count; ++b) lo = std::min(lo, u[b]);
    double sum = 0.0;
    for (int b = 0; b < m.bin_count; ++b) {
      q[b] = std::exp(lo - u[b]);
      sum += q[b];
    }
    for (int b = 0; b < m.bin_count; ++b) q[b] /= sum;
  }
  return s;
}

namespace crf_detail {

// sum_{l'} |l - l'| * msg(l') for all l in O(B) via prefix sums.
inline void contract_label_distance(const double* msg, int bins, double* out) {
  double c_tot = 0.0, s_tot = 0.0;
  for (int l = 0; l < bins; ++l) {
    c_tot += msg[l];
    s_tot += l * msg[l];
  }
  double c_le = 0.0, s_le = 0.0;
  for (int l = 0; l < bins; ++l) {
    c_le += msg[l];
    s_le += l * msg[l];
    out[l] = l * c_le - s_le + (s_tot - s_le) - l * (c_tot - c_le);
  }
}

// 1D Gaussian taps at integer offsets; radius covers the whole axis when the
// image is small, so the separable pass is exact there.
inline std::vector<double> gaussian_taps(double sigma, int size) {
  const int radius =
      std::min<int>(size - 1, static_cast<int>(std::ceil(5.0 * sigma)));
  std::vector<double> taps(radius + 1);
  for (int t = 0; t <= radius; ++t)
    taps[t] = std::exp(-0.5 * t * t / (sigma * sigma));
  return taps;
}

// Separable spatial convolution of a pixel-major multi-channel grid with the
// sampled Gaussian. Channels are processed independently; `threads` workers
// split the channels so results do not depend on the worker count.
class SpatialConv {
 public:
  SpatialConv(int width, int height, double sigma)
      : w_(width),
        h_(height),
        row_taps_(gaussian_taps(sigma, width)),
        col_taps_(gaussian_taps(sigma, height)) {}

  // in, out: pixel-major with `channels` values per pixel.
  void apply(const double* in, double* out, int channels, int threads,
             std::vector<double>& scratch) const {
    const std::size_t n = static_cast<std::size_t>(w_) * h_;
    scratch.resize(n * channels);
    parallel_for(channels, threads, [&](std::size_t c) {
      // rows
      for (int y = 0; y < h_; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * w_;
        for (int x = 0; x < w_; ++x) {
          double acc = in[(row + x) * channels + c] * row_taps_[0];
          const int r = static_cast<int>(row_taps_.size()) - 1;
          for (int t = 1; t <= r; ++t) {
            const double tap = row_taps_[t];
            if (x - t >= 0) acc += tap * in[(row + x - t) * channels + c];
            if (x + t < w_) acc += tap * in[(row + x + t) * channels + c];
          }
          scratch[(row + x) * channels + c] = acc;
        }
      }
      // columns
      for (int x = 0; x < w_; ++x) {
        for (int y = 0; y < h_; ++y) {
          double acc = scratch[(static_cast<std::size_t>(y) * w_ + x) *
                                   channels +
                               c] *
                       col_taps_[0];
          const int r = static_cast<int>(col_taps_.size()) - 1;
          for (int t = 1; t <= r; ++t) {
            const double tap = col_taps_[t];
            if (y - t >= 0)
              acc += tap *
                     scratch[(static_cast<std::size_t>(y - t) * w_ + x) *
                                 channels +
                             c];
            if (y + t < h_)
              acc += tap *
                     scratch[(static_cast<std::size_t>(y + t) * w_ + x) *
                                 channels +
                             c];
          }
          out[(static_cast<std::size_t>(y) * w_ + x) * channels + c] = acc;
        }
      }
    });
  }

 private:
  int w_, h_;
  std::vector<double> row_taps_, col_taps_;
};

}  // namespace crf_detail

/// Shared machinery for repeated mean-field updates on one model. Builds the
/// filtering structures once; step() applies one synchronous update where
/// every pixel reads the previous state.
class MeanFieldEngine {
 public:
  MeanFieldEngine(const CrfModel& model, MeanFieldMode mode, int threads = 1)
      : m_(model), mode_(mode), threads_(std::max(1, threads)) {
    m_.params.check();
    const std::size_t n = m_.pixel_count();
    if (mode_ == MeanFieldMode::Exact) {
      if (n > m_.exact_pixel_budget)
        throw std::invalid_argument(
            "MeanFieldEngine: image exceeds the Exact-mode pixel budget");
      return;
    }

    grid_positions_ = true;
    for (std::size_t i = 0; i < n && grid_positions_; ++i) {
      const double x = static_cast<double>(i % m_.width);
      const double y = static_cast<double>(i / m_.width);
      grid_positions_ = m_.positions[i * 2] == x && m_.positions[i * 2 + 1] == y;
    }

    // Distinct colors decide the bilateral path: palette-sliced separable
    // filtering when the palette is small, permutohedral lattice otherwise.
    std::unordered_map<std::uint32_t, int> palette;
    slice_of_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t key =
          (static_cast<std::uint32_t>(m_.colors[i * 3]) << 16) |
          (static_cast<std::uint32_t>(m_.colors[i * 3 + 1]) << 8) |
          static_cast<std::uint32_t>(m_.colors[i * 3 + 2]);
      const auto [it, inserted] =
          palette.emplace(key, static_cast<int>(palette.size()));
      slice_of_[i] = it->second;
    }
    sliced_ = grid_positions_ &&
              palette.size() <= static_cast<std::size_t>(m_.palette_cap);

    if (sliced_) {
      slice_colors_.resize(palette.size() * 3);
      std::vector<char> seen(palette.size(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        const int s = slice_of_[i];
        if (!seen[s]) {
          seen[s] = 1;
          for (int c = 0; c < 3; ++c)
            slice_colors_[s * 3 + c] = m_.colors[i * 3 + c];
        }
      }
      appearance_conv_ = std::make_unique<crf_detail::SpatialConv>(
          m_.width, m_.height, m_.params.sigma_alpha);
      // Color affinity between every pixel and every palette entry.
      const std::size_t slices = palette.size();
      color_affinity_.resize(n * slices);
      const double inv2b =
          1.0 / (2.0 * m_.params.sigma_beta * m_.params.sigma_beta);
      parallel_for(n, threads_, [&](std::size_t i) {
        for (std::size_t s = 0; s < slices; ++s) {
          double col2 = 0.0;
          for (int c = 0; c < 3; ++c) {
            const double d = m_.colors[i * 3 + c] - slice_colors_[s * 3 + c];
            col2 += d * d;
          }
          color_affinity_[i * slices + s] = std::exp(-col2 * inv2b);
        }
      });
    } else {
      // Lattice features: (x, y) / sigma_alpha then RGB / sigma_beta, scaled
      // by the raw-sum calibration for d = 5.
      const auto cal = lattice_calibration(5);
      std::vector<double> features(n * 5);
      for (std::size_t i = 0; i < n; ++i) {
        features[i * 5] =
            m_.positions[i * 2] / m_.params.sigma_alpha * cal.scale;
        features[i * 5 + 1] =
            m_.positions[i * 2 + 1] / m_.params.sigma_alpha * cal.scale;
        for (int c = 0; c < 3; ++c)
          features[i * 5 + 2 + c] =
              m_.colors[i * 3 + c] / m_.params.sigma_beta * cal.scale;
      }
      lattice_ = std::make_unique<PermutohedralLattice>(features, 5);
    }
    if (grid_positions_) {
      smoothness_conv_ = std::make_unique<crf_detail::SpatialConv>(
          m_.width, m_.height, m_.params.sigma_gamma);
    } else {
      const auto cal = lattice_calibration(2);
      std::vector<double> features(n * 2);
      for (std::size_t i = 0; i < n; ++i) {
        features[i * 2] =
            m_.positions[i * 2] / m_.params.sigma_gamma * cal.scale;
        features[i * 2 + 1] =
            m_.positions[i * 2 + 1] / m_.params.sigma_gamma * cal.scale;
      }
      smoothness_lattice_ = std::make_unique<PermutohedralLattice>(features, 2);
    }
  }

  const CrfModel& model() const { return m_; }

  MeanFieldState step(const MeanFieldState& state) const {
    state.check_normalized();
    if (state.q.width != m_.width || state.q.height != m_.height ||
        state.q.bin_count != m_.bin_count)
      throw std::invalid_argument("meanfield_step: state shape mismatch");

    const std::size_t n = m_.pixel_count();
    const int bins = m_.bin_count;
    // messages[i][l'] = sum_{j != i} k(i, j) Q_j(l')
    std::vector<double> messages(n * bins, 0.0);
    if (mode_ == MeanFieldMode::Exact) {
      exact_messages(state.q, messages);
    } else {
      filtered_messages(state.q, messages);
    }

    MeanFieldState next;
    next.q = ScoreVolume(m_.width, m_.height, bins, VolumeKind::Probabilities);
    next.iteration = state.iteration + 1;
    parallel_for(n, threads_, [&](std::size_t i) {
      std::vector<double> pair(bins), logit(bins);
      crf_detail::contract_label_distance(messages.data() + i * bins, bins,
                                          pair.data());
      const double* u = m_.unary_row(i);
      double hi = -u[0] - pair[0];
      for (int l = 0; l < bins; ++l) {
        logit[l] = -u[l] - pair[l];
        hi = std::max(hi, logit[l]);
      }
      double sum = 0.0;
      double* q = next.q.pixel(i);
      for (int l = 0; l < bins; ++l) {
        q[l] = std::exp(logit[l] - hi);
        sum += q[l];
      }
      for (int l = 0; l < bins; ++l) q[l] /= sum;
    });
    return next;
  }

 private:
  void exact_messages(const ScoreVolume& q, std::vector<double>& out) const {
    const std::size_t n = m_.pixel_count();
    const int bins = m_.bin_count;
    parallel_for(n, threads_, [&](std::size_t i) {
      double* mi = out.data() + i * bins;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double k = kernel_value(i, j, m_);
        const double* qj = q.pixel(j);
        for (int l = 0; l < bins; ++l) mi[l] += k * qj[l];
      }
    });
  }

  void filtered_messages(const ScoreVolume& q, std::vector<double>& out) const {
    const std::size_t n = m_.pixel_count();
    const int bins = m_.bin_count;
    const auto& p = m_.params;

    // Appearance kernel.
    if (p.w1 > 0.0) {
      if (sliced_) {
        const std::size_t slices = slice_colors_.size() / 3;
        std::vector<double> masked(n * bins), blurred(n * bins), scratch;
        for (std::size_t s = 0; s < slices; ++s) {
          for (std::size_t i = 0; i < n; ++i) {
            const double* qi = q.pixel(i);
            double* mi = masked.data() + i * bins;
            const bool in_slice = slice_of_[i] == static_cast<int>(s);
            for (int l = 0; l < bins; ++l) mi[l] = in_slice ? qi[l] : 0.0;
          }
          appearance_conv_->apply(masked.data(), blurred.data(), bins,
                                  threads_, scratch);
          parallel_for(n, threads_, [&](std::size_t i) {
            const double g = p.w1 * color_affinity_[i * slices + s];
            double* oi = out.data() + i * bins;
            const double* bi = blurred.data() + i * bins;
            for (int l = 0; l < bins; ++l) oi[l] += g * bi[l];
          });
        }
      } else {
        const double amp = lattice_calibration(5).amplitude;
        std::vector<double> filtered = lattice_->filter(q.data, bins);
        for (std::size_t k = 0; k < filtered.size(); ++k)
          out[k] += p.w1 * amp * filtered[k];
      }
      // Remove the self term (kernel value w1 at zero distance).
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = q.pixel(i);
        double* oi = out.data() + i * bins;
        for (int l = 0; l < bins; ++l) oi[l] -= p.w1 * qi[l];
      }
    }

    // Smoothness kernel.
    if (p.w2 > 0.0) {
      std::vector<double> blurred(n * bins);
      if (smoothness_conv_) {
        std::vector<double> scratch;
        smoothness_conv_->apply(q.data.data(), blurred.data(), bins, threads_,
                                scratch);
        for (std::size_t k = 0; k < blurred.size(); ++k)
          out[k] += p.w2 * blurred[k];
      } else {
        const double amp = lattice_calibration(2).amplitude;
        blurred = smoothness_lattice_->filter(q.data, bins);
        for (std::size_t k = 0; k < blurred.size(); ++k)
          out[k] += p.w2 * amp * blurred[k];
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = q.pixel(i);
        double* oi = out.data() + i * bins;
        for (int l = 0; l < bins; ++l) oi[l] -= p.w2 * qi[l];
      }
    }
  }

  CrfModel m_;
  MeanFieldMode mode_;
  int threads_;
  bool grid_positions_ = false;
  bool sliced_ = false;
  std::vector<int> slice_of_;
  std::vector<double> slice_colors_;    // 3 per slice
  std::vector<double> color_affinity_;  // n x slices
  std::unique_ptr<crf_detail::SpatialConv> appearance_conv_;
  std::unique_ptr<crf_detail::SpatialConv> smoothness_conv_;
  std::unique_ptr<PermutohedralLattice> lattice_;
  std::unique_ptr<PermutohedralLattice> smoothness_lattice_;
};

/// One synchronous mean-field update:
///   Q'_i(l) ∝ exp{ -U_i(l) - sum_{l'} |l - l'| * sum_{j != i} k(i,j) Q_j(l') }
/// Builds the filtering structures from scratch; use MeanFieldEngine when
/// iterating.
inline MeanFieldState meanfield_step(const MeanFieldState& state,
                                     const CrfModel& model, MeanFieldMode mode,
                                     int threads = 1) {
  return MeanFieldEngine(model, mode, threads).step(state);
}

struct InferResult {
  LabelMap labels;
  MeanFieldState state;
  bool converged = false;
  double last_change = 0.0;
};

/// Runs mean-field updates until the max absolute change in Q drops below
/// tol or `iters` updates have been applied, then decodes the argmax
/// labeling. Non-convergence is reported through the flag, not an error.
inline InferResult infer(const CrfModel& model, int iters, double tol,
                         MeanFieldMode mode, int threads = 1) {
  if (iters < 1) throw std::invalid_argument("infer: iters must be >= 1");
  MeanFieldEngine engine(model, mode, threads);
  MeanFieldState state = meanfield_init(model);

  InferResult result;
  result.last_change = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iters; ++it) {
    MeanFieldState next = engine.step(state);
    double change = 0.0;
    for (std::size_t k = 0; k < next.q.data.size(); ++k)
      change = std::max(change, std::abs(next.q.data[k] - state.q.data[k]));
    state = std::move(next);
    result.last_change = change;
    if (change < tol) {
      result.converged = true;
      break;
    }
  }

  result.labels = LabelMap(model.width, model.height, model.bin_count);
  for (std::size_t i = 0; i < model.pixel_count(); ++i) {
    result.labels.labels[i] = argmax_bin(state.q.pixel(i), model.bin_count);
    result.labels.valid[i] = 1;
  }
  result.state = std::move(state);
  return result;
}

}  // namespace depthclass
