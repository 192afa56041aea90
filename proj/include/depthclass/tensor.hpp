#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "depthclass/errors.hpp"

namespace depthclass {

/// Dense NCHW tensor of doubles.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {
    if (n_ <= 0 || c_ <= 0 || h_ <= 0 || w_ <= 0)
      throw std::invalid_argument("Tensor4: bad shape");
  }

  std::size_t size() const { return data.size(); }
  std::size_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  double& at(int in, int ic, int iy, int ix) {
    return data[index(in, ic, iy, ix)];
  }
  double at(int in, int ic, int iy, int ix) const {
    return data[index(in, ic, iy, ix)];
  }
  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void require_finite(const std::string& where) const {
    for (double v : data) {
      if (!std::isfinite(v))
        throw numeric_error("non-finite activation after " + where);
    }
  }
};

}  // namespace depthclass
