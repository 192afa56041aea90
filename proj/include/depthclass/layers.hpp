#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "depthclass/rng.hpp"
#include "depthclass/tensor.hpp"

namespace depthclass {

/// View over one learnable parameter block for optimizers and serialization.
struct ParamRef {
  std::string name;
  std::vector<int> dims;
  std::vector<double>* value;
  std::vector<double>* grad;
};

/// 2-D cross-correlation, no bias (affine handled by ScaleBias). Weights are
/// [out_ch, in_ch, k, k].
class Conv2d {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride,
         int pad)
      : name_(std::move(name)),
        in_ch_(in_ch),
        out_ch_(out_ch),
        k_(ksize),
        stride_(stride),
        pad_(pad),
        weight_(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize, 0.0),
        wgrad_(weight_.size(), 0.0) {}

  /// He-style scaled uniform initialization.
  void init(Rng& rng) {
    const double fan_in = static_cast<double>(in_ch_) * k_ * k_;
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : weight_) v = rng.uniform(-bound, bound);
  }

  int out_dim(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor4 forward(const Tensor4& x) {
    if (x.c != in_ch_) throw std::invalid_argument(name_ + ": channel mismatch");
    input_ = x;
    Tensor4 y(x.n, out_ch_, out_dim(x.h), out_dim(x.w));
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_ch_; ++co) {
        for (int ci = 0; ci < in_ch_; ++ci) {
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const double wv = wval(co, ci, ky, kx);
              if (wv == 0.0) continue;
              for (int oy = 0; oy < y.h; ++oy) {
                const int iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int ox = 0; ox < y.w; ++ox) {
                  const int ix = ox * stride_ - pad_ + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  y.at(n, co, oy, ox) += wv * x.at(n, ci, iy, ix);
                }
              }
            }
          }
        }
      }
    }
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    const Tensor4& x = input_;
    Tensor4 dx(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_ch_; ++co) {
        for (int ci = 0; ci < in_ch_; ++ci) {
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const double wv = wval(co, ci, ky, kx);
              double dw = 0.0;
              for (int oy = 0; oy < dy.h; ++oy) {
                const int iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int ox = 0; ox < dy.w; ++ox) {
                  const int ix = ox * stride_ - pad_ + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  const double g = dy.at(n, co, oy, ox);
                  dw += g * x.at(n, ci, iy, ix);
                  dx.at(n, ci, iy, ix) += g * wv;
                }
              }
              wgrad_[widx(co, ci, ky, kx)] += dw;
            }
          }
        }
      }
    }
    return dx;
  }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(
        {name_ + ".weight", {out_ch_, in_ch_, k_, k_}, &weight_, &wgrad_});
  }

  std::vector<double>& weights() { return weight_; }

 private:
  std::size_t widx(int co, int ci, int ky, int kx) const {
    return ((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + ky) * k_ + kx;
  }
  double wval(int co, int ci, int ky, int kx) const {
    return weight_[widx(co, ci, ky, kx)];
  }

  std::string name_;
  int in_ch_, out_ch_, k_, stride_, pad_;
  std::vector<double> weight_, wgrad_;
  Tensor4 input_;
};

/// Per-channel learnable scale and bias: y = gamma[c] * x + beta[c]. Stands
/// in for batch normalization, whose statistics are meaningless at batch
/// size one or two.
class ScaleBias {
 public:
  ScaleBias(std::string name, int channels)
      : name_(std::move(name)),
        gamma_(channels, 1.0),
        beta_(channels, 0.0),
        ggrad_(channels, 0.0),
        bgrad_(channels, 0.0) {}

  Tensor4 forward(const Tensor4& x) {
    input_ = x;
    Tensor4 y = x;
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c) {
        const double g = gamma_[c], b = beta_[c];
        for (int i = 0; i < x.h * x.w; ++i) {
          const std::size_t idx = x.index(n, c, 0, 0) + i;
          y.data[idx] = g * x.data[idx] + b;
        }
      }
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    const Tensor4& x = input_;
    Tensor4 dx(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c) {
        double dgamma = 0.0, dbeta = 0.0;
        for (int i = 0; i < x.h * x.w; ++i) {
          const std::size_t idx = x.index(n, c, 0, 0) + i;
          dgamma += dy.data[idx] * x.data[idx];
          dbeta += dy.data[idx];
          dx.data[idx] = dy.data[idx] * gamma_[c];
        }
        ggrad_[c] += dgamma;
        bgrad_[c] += dbeta;
      }
    return dx;
  }

  void collect(std::vector<ParamRef>& out) {
    const int c = static_cast<int>(gamma_.size());
    out.push_back({name_ + ".scale", {c}, &gamma_, &ggrad_});
    out.push_back({name_ + ".bias", {c}, &beta_, &bgrad_});
  }

 private:
  std::string name_;
  std::vector<double> gamma_, beta_, ggrad_, bgrad_;
  Tensor4 input_;
};

class Relu {
 public:
  Tensor4 forward(const Tensor4& x) {
    mask_.assign(x.size(), 0);
    Tensor4 y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x.data[i] > 0.0) {
        mask_[i] = 1;
      } else {
        y.data[i] = 0.0;
      }
    }
    shape_ = x;
    shape_.data.clear();
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    Tensor4 dx(shape_.n, shape_.c, shape_.h, shape_.w);
    for (std::size_t i = 0; i < dy.size(); ++i)
      dx.data[i] = mask_[i] ? dy.data[i] : 0.0;
    return dx;
  }

 private:
  std::vector<char> mask_;
  Tensor4 shape_;
};

/// Max pooling with argmax routing on the backward pass.
class MaxPool {
 public:
  MaxPool(int ksize, int stride, int pad) : k_(ksize), stride_(stride), pad_(pad) {}

  int out_dim(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor4 forward(const Tensor4& x) {
    Tensor4 y(x.n, x.c, out_dim(x.h), out_dim(x.w));
    argmax_.assign(y.size(), 0);
    in_shape_ = {x.n, x.c, x.h, x.w};
    std::size_t o = 0;
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= x.w) continue;
                const double v = x.at(n, c, iy, ix);
                if (v > best) {
                  best = v;
                  best_idx = x.index(n, c, iy, ix);
                }
              }
            }
            y.data[o] = best;
            argmax_[o] = best_idx;
          }
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    Tensor4 dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    for (std::size_t o = 0; o < dy.size(); ++o)
      dx.data[argmax_[o]] += dy.data[o];
    return dx;
  }

 private:
  int k_, stride_, pad_;
  std::vector<std::size_t> argmax_;
  std::array<int, 4> in_shape_{};
};

/// Corner-aligned bilinear interpolation by an integer factor: output corners
/// sample input corners exactly, interior positions interpolate at
/// y_in = y_out * (h_in - 1) / (h_out - 1).
inline Tensor4 bilinear_upsample(const Tensor4& x, int factor) {
  if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor < 1");
  if (factor == 1) return x;
  const int oh = x.h * factor, ow = x.w * factor;
  Tensor4 y(x.n, x.c, oh, ow);
  for (int oy = 0; oy < oh; ++oy) {
    const double sy = x.h > 1 ? static_cast<double>(oy) * (x.h - 1) / (oh - 1) : 0.0;
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, x.h - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < ow; ++ox) {
      const double sx = x.w > 1 ? static_cast<double>(ox) * (x.w - 1) / (ow - 1) : 0.0;
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, x.w - 1);
      const double fx = sx - x0;
      for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
          const double top = (1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1);
          const double bot = (1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1);
          y.at(n, c, oy, ox) = (1 - fy) * top + fy * bot;
        }
    }
  }
  return y;
}

/// Adjoint of bilinear_upsample: scatters output gradients back through the
/// same interpolation weights.
inline Tensor4 bilinear_upsample_backward(const Tensor4& dy, int in_h, int in_w,
                                          int factor) {
  if (factor == 1) return dy;
  Tensor4 dx(dy.n, dy.c, in_h, in_w);
  const int oh = dy.h, ow = dy.w;
  for (int oy = 0; oy < oh; ++oy) {
    const double sy = in_h > 1 ? static_cast<double>(oy) * (in_h - 1) / (oh - 1) : 0.0;
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < ow; ++ox) {
      const double sx = in_w > 1 ? static_cast<double>(ox) * (in_w - 1) / (ow - 1) : 0.0;
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - x0;
      for (int n = 0; n < dy.n; ++n)
        for (int c = 0; c < dy.c; ++c) {
          const double g = dy.at(n, c, oy, ox);
          dx.at(n, c, y0, x0) += (1 - fy) * (1 - fx) * g;
          dx.at(n, c, y0, x1) += (1 - fy) * fx * g;
          dx.at(n, c, y1, x0) += fy * (1 - fx) * g;
          dx.at(n, c, y1, x1) += fy * fx * g;
        }
    }
  }
  return dx;
}

}  // namespace depthclass
