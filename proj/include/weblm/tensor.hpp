#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "weblm/errors.hpp"

namespace weblm {

// Row-major dense tensor of doubles. Rank 1 and 2 cover everything here.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) fail(Errc::ConfigError, "negative tensor dimension");
      n *= static_cast<size_t>(d);
    }
    t.shape = std::move(shape);
    t.v.assign(n, 0.0);
    return t;
  }

  size_t size() const { return v.size(); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols(); }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols(); }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace weblm
