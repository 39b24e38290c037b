#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hdcam/ops.hpp"

namespace testutil {

inline double max_abs_diff(const double* a, const double* b, size_t n) {
  double worst = 0;
  for (size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

template <typename T>
double max_abs_diff(const hdcam::Tensor<T>& a, const hdcam::Tensor<T>& b) {
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) -
                                     static_cast<double>(b.data()[i])));
  return worst;
}

template <typename T>
double max_rel_diff(const hdcam::Tensor<T>& a, const hdcam::Tensor<T>& b) {
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double x = static_cast<double>(a.data()[i]);
    const double y = static_cast<double>(b.data()[i]);
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-6}));
  }
  return worst;
}

// Central-difference gradient check against the tape. make_loss must be a
// pure function of the current input values (re-invoked for each probe).
// Returns the worst relative error over all input elements.
inline double gradient_check(std::vector<hdcam::Tensor<double>> inputs,
                             const std::function<hdcam::Tensor<double>()>& make_loss,
                             double h = 1e-5) {
  using namespace hdcam;
  for (auto& t : inputs) t.set_requires_grad(true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    Tensor<double> loss = make_loss();
    tape.backward(loss);
  }
  double worst = 0;
  for (auto& t : inputs) {
    const double* g = t.grad_data();
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double keep = t.data()[i];
      t.data()[i] = keep + h;
      const double up = make_loss().item();
      t.data()[i] = keep - h;
      const double dn = make_loss().item();
      t.data()[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = g != nullptr ? g[i] : 0.0;
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  return worst;
}

// Weighted scalar readout so every output element sees a distinct gradient.
template <typename T>
hdcam::Tensor<T> weighted_sum(const hdcam::Tensor<T>& y, const hdcam::Tensor<T>& w) {
  return hdcam::ops::sum(hdcam::ops::mul(y, w));
}

}  // namespace testutil
