#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tnshield/error.hpp"

namespace tnshield {

using Shape = std::vector<std::size_t>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::size_t element_count(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

//
// Order-d real tensor stored row-major (last index fastest).
//
class DenseTensor {
 public:
  DenseTensor() : shape_{1}, data_(1, 0.0) {}

  explicit DenseTensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(element_count(shape_), fill);
  }

  DenseTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != element_count(shape_))
      fail(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                         " does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) fail(ErrorCode::InvalidArgument, "index order mismatch");
    std::size_t off = 0;
    for (std::size_t k = 0; k < shape_.size(); ++k) {
      if (index[k] >= shape_[k]) fail(ErrorCode::InvalidArgument, "index out of range");
      off = off * shape_[k] + index[k];
    }
    return off;
  }

  double& operator()(std::span<const std::size_t> index) { return data_[offset(index)]; }
  double operator()(std::span<const std::size_t> index) const { return data_[offset(index)]; }
  double& at(std::initializer_list<std::size_t> index) { return data_[offset({index.begin(), index.size()})]; }
  double at(std::initializer_list<std::size_t> index) const { return data_[offset({index.begin(), index.size()})]; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  // Row-major view as rows x cols; rows * cols must equal size().
  Eigen::Map<const RowMatrix> as_matrix(std::size_t rows, std::size_t cols) const {
    check_view(rows, cols);
    return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  }
  Eigen::Map<RowMatrix> as_matrix(std::size_t rows, std::size_t cols) {
    check_view(rows, cols);
    return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  }

  void reshape_in_place(Shape new_shape) {
    validate_shape(new_shape);
    if (element_count(new_shape) != data_.size())
      fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(new_shape));
    shape_ = std::move(new_shape);
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) fail(ErrorCode::ShapeMismatch, "tensor order must be at least 1");
    for (auto n : shape)
      if (n == 0) fail(ErrorCode::ShapeMismatch, "mode sizes must be positive");
  }

  void check_view(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) fail(ErrorCode::ShapeMismatch, "matrix view does not cover tensor");
  }

  Shape shape_;
  std::vector<double> data_;
};

inline DenseTensor reshape(DenseTensor t, Shape new_shape) {
  t.reshape_in_place(std::move(new_shape));
  return t;
}

/// Unfolds modes [0, split) into rows and [split, d) into columns.
inline Matrix matricize(const DenseTensor& t, std::size_t split) {
  if (split < 1 || split >= t.order())
    fail(ErrorCode::InvalidSplit, "split " + std::to_string(split) + " outside [1, " + std::to_string(t.order()) + ")");
  std::span<const std::size_t> shape = t.shape();
  const std::size_t rows = element_count(shape.first(split));
  return t.as_matrix(rows, t.size() / rows);
}

/// Inverse of matricize: folds a matrix back into a tensor of the given shape.
inline DenseTensor fold(const Matrix& m, Shape shape) {
  if (static_cast<std::size_t>(m.size()) != element_count(shape))
    fail(ErrorCode::ShapeMismatch, "matrix size does not match target shape " + shape_string(shape));
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMatrix>(data.data(), m.rows(), m.cols()) = m;
  return {std::move(shape), std::move(data)};
}

inline DenseTensor from_row_matrix(const RowMatrix& m, Shape shape) {
  if (static_cast<std::size_t>(m.size()) != element_count(shape))
    fail(ErrorCode::ShapeMismatch, "matrix size does not match target shape " + shape_string(shape));
  return {std::move(shape), std::vector<double>(m.data(), m.data() + m.size())};
}

inline bool is_permutation_of_modes(std::span<const std::size_t> perm, std::size_t order) {
  if (perm.size() != order) return false;
  std::vector<bool> seen(order, false);
  for (auto p : perm) {
    if (p >= order || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = j;
  return inv;
}

/// Output mode j is input mode perm[j] (zero-based).
inline DenseTensor permute_modes(const DenseTensor& t, std::span<const std::size_t> perm) {
  const std::size_t d = t.order();
  if (!is_permutation_of_modes(perm, d)) fail(ErrorCode::InvalidPermutation, "not a permutation of the tensor modes");

  Shape out_shape(d);
  for (std::size_t j = 0; j < d; ++j) out_shape[j] = t.dim(perm[j]);

  // input strides, reordered to follow output modes
  std::vector<std::size_t> in_stride(d, 1);
  for (std::size_t k = d - 1; k > 0; --k) in_stride[k - 1] = in_stride[k] * t.dim(k);
  std::vector<std::size_t> stride(d);
  for (std::size_t j = 0; j < d; ++j) stride[j] = in_stride[perm[j]];

  DenseTensor out(out_shape);
  std::vector<std::size_t> idx(d, 0);
  std::size_t src = 0;
  auto in = t.data();
  auto dst = out.data();
  for (std::size_t n = 0; n < dst.size(); ++n) {
    dst[n] = in[src];
    for (std::size_t j = d; j-- > 0;) {
      src += stride[j];
      if (++idx[j] < out_shape[j]) break;
      src -= stride[j] * out_shape[j];
      idx[j] = 0;
    }
  }
  return out;
}

inline DenseTensor permute_modes(const DenseTensor& t, std::initializer_list<std::size_t> perm) {
  return permute_modes(t, std::span<const std::size_t>(perm.begin(), perm.size()));
}

inline double frobenius_norm(std::span<const double> values) {
  // scaled accumulation avoids overflow on large pixel tensors
  double scale = 0.0, ssq = 1.0;
  for (double v : values) {
    if (v == 0.0) continue;
    const double a = std::abs(v);
    if (scale < a) {
      ssq = 1.0 + ssq * (scale / a) * (scale / a);
      scale = a;
    } else {
      ssq += (a / scale) * (a / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

inline double frobenius_norm(const DenseTensor& t) { return frobenius_norm(t.data()); }

inline double frobenius_distance(const DenseTensor& a, const DenseTensor& b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "tensors differ in size");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a[i] - b[i];
  return frobenius_norm(diff);
}

/// Mode-n product: replaces mode `mode` of size I by m.rows(), contracting with m (m.cols() == I).
inline DenseTensor mode_product(const DenseTensor& t, const Matrix& m, std::size_t mode) {
  if (mode >= t.order()) fail(ErrorCode::InvalidArgument, "mode out of range");
  if (static_cast<std::size_t>(m.cols()) != t.dim(mode)) fail(ErrorCode::ShapeMismatch, "mode product size mismatch");
  const std::size_t left = element_count(std::span(t.shape()).first(mode));
  const std::size_t mid = t.dim(mode);
  const std::size_t right = t.size() / (left * mid);
  const auto rows = static_cast<std::size_t>(m.rows());

  Shape out_shape = t.shape();
  out_shape[mode] = rows;
  DenseTensor out(out_shape);
  for (std::size_t l = 0; l < left; ++l) {
    Eigen::Map<const RowMatrix> in_block(t.data().data() + l * mid * right, mid, right);
    Eigen::Map<RowMatrix> out_block(out.data().data() + l * rows * right, rows, right);
    out_block.noalias() = m * in_block;
  }
  return out;
}

}  // namespace tnshield
