#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace reswm {

#ifdef RESWM_REAL32
using Real = float;
#else
using Real = double;
#endif

using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using MatMap = Eigen::Map<MatX>;
using ConstMatMap = Eigen::Map<const MatX>;
using VecMap = Eigen::Map<VecX>;
using ConstVecMap = Eigen::Map<const VecX>;

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

// Dense row-major real tensor. Copies are shallow (shared storage); node is
// the id on the tape that recorded it, or -1 for constants.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<Real>> store;
  int node = -1;

  Tensor() = default;

  explicit Tensor(std::vector<int> shp)
      : shape(std::move(shp)),
        store(std::make_shared<std::vector<Real>>(count(shape), Real(0))) {}

  Tensor(std::vector<int> shp, std::vector<Real> values)
      : shape(std::move(shp)),
        store(std::make_shared<std::vector<Real>>(std::move(values))) {
    if (count(shape) != static_cast<long long>(store->size()))
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                  " does not match data length " +
                                  std::to_string(store->size()));
  }

  static Tensor scalar(Real v) { return Tensor({1}, {v}); }

  static Tensor full(std::vector<int> shp, Real v) {
    Tensor t(std::move(shp));
    std::fill(t.store->begin(), t.store->end(), v);
    return t;
  }

  static long long count(const std::vector<int>& s) {
    long long n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent in " + shape_str(s));
      n *= e;
    }
    return n;
  }

  int numel() const { return static_cast<int>(store ? store->size() : 0); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  Real* data() { return store->data(); }
  const Real* data() const { return store->data(); }
  Real& operator[](int i) { return (*store)[static_cast<size_t>(i)]; }
  Real operator[](int i) const { return (*store)[static_cast<size_t>(i)]; }

  bool tracked() const { return node >= 0; }

  Real value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::value: not a scalar, shape " + shape_str(shape));
    return (*store)[0];
  }

  // 2-D view as rows x cols; rank-1 tensors view as a single row.
  int rows() const { return rank() <= 1 ? 1 : shape[0]; }
  int cols() const {
    if (rank() == 0) return numel();
    if (rank() == 1) return shape[0];
    int c = 1;
    for (int i = 1; i < rank(); ++i) c *= shape[static_cast<size_t>(i)];
    return c;
  }

  MatMap mat() { return MatMap(data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data(), rows(), cols()); }
  VecMap vec() { return VecMap(data(), numel()); }
  ConstVecMap vec() const { return ConstVecMap(data(), numel()); }

  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.store = std::make_shared<std::vector<Real>>(*store);
    return t;
  }

  // Same values, not on any tape.
  Tensor constant() const {
    Tensor t = *this;
    t.node = -1;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (Real v : *store)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace reswm
