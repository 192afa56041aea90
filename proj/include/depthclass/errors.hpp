#pragma once

#include <stdexcept>
#include <string>

namespace depthclass {

/// File or stream level failure (unreadable path, bad magic, truncation).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (divergent training, non-finite activations).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace depthclass
