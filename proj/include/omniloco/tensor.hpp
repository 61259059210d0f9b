#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "omniloco/common.hpp"

namespace omniloco {

// Dense row-major tensor of Real, rank 1..4.  Deliberately minimal: shape +
// flat storage + indexing.  All math lives in kernels.hpp / netcore.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, Real fill = 0)
      : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(std::initializer_list<std::size_t> s) {
    return Tensor(std::vector<std::size_t>(s));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  std::size_t rank() const { return shape.size(); }

  Real* ptr() { return data.data(); }
  const Real* ptr() const { return data.data(); }

  Real& operator()(std::size_t i) { return data[i]; }
  Real operator()(std::size_t i) const { return data[i]; }
  Real& operator()(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
  }
  Real operator()(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  Real& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  Real operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  Real& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  Real operator()(std::size_t i, std::size_t j, std::size_t k,
                  std::size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  // Row pointer for rank-2 tensors.
  Real* row(std::size_t i) { return data.data() + i * shape[1]; }
  const Real* row(std::size_t i) const { return data.data() + i * shape[1]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace omniloco
