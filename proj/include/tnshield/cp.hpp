#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>

#include "tnshield/tensor.hpp"
#include "tnshield/tucker.hpp"

namespace tnshield {

/// Canonical polyadic format: factors of shape (I_j, R) and optional weights
/// (empty means all ones).
struct CPTensor {
  std::vector<DenseTensor> factors;
  std::vector<double> weights;

  std::size_t rank() const { return factors.empty() ? 0 : factors.front().dim(1); }

  Shape shape() const {
    Shape s;
    for (const auto& f : factors) s.push_back(f.dim(0));
    return s;
  }

  void validate() const {
    if (factors.empty()) fail(ErrorCode::InvalidArgument, "CP tensor without factors");
    for (const auto& f : factors)
      if (f.order() != 2 || f.dim(1) != rank()) fail(ErrorCode::ShapeMismatch, "CP factors must share the column count");
    if (!weights.empty() && weights.size() != rank()) fail(ErrorCode::ShapeMismatch, "CP weight count must equal the rank");
  }
};

/// Folds the weights into the first factor.
inline CPTensor absorb_weights(CPTensor cp) {
  cp.validate();
  if (cp.weights.empty()) return cp;
  auto& first = cp.factors.front();
  auto m = first.as_matrix(first.dim(0), first.dim(1));
  for (Eigen::Index r = 0; r < m.cols(); ++r) m.col(r) *= cp.weights[static_cast<std::size_t>(r)];
  cp.weights.clear();
  return cp;
}

/// Returned instead of a CP tensor when ALS does not reach the declared fit.
struct DecompositionFailure {
  double best_error = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::string reason;
};

using CPResult = std::variant<CPTensor, DecompositionFailure>;

struct CPOptions {
  std::size_t rank = 1;
  std::size_t max_iter = 500;
  /// Stop once the fit (1 - relative error) improves by less than this.
  double tol = 1e-10;
  std::uint64_t seed = 0;
  /// Relative error above which the result is reported as a failure.
  double failure_threshold = 0.3;
};

namespace detail {

// Khatri-Rao product of the factors of every mode except `skip`, rows ordered
// row-major over the remaining modes.
inline Matrix khatri_rao_except(const std::vector<Matrix>& factors, std::size_t skip) {
  const Eigen::Index r = factors.front().cols();
  Matrix kr = Matrix::Ones(1, r);
  for (std::size_t m = 0; m < factors.size(); ++m) {
    if (m == skip) continue;
    const Matrix& u = factors[m];
    Matrix next(kr.rows() * u.rows(), r);
    for (Eigen::Index a = 0; a < kr.rows(); ++a)
      for (Eigen::Index b = 0; b < u.rows(); ++b) next.row(a * u.rows() + b) = kr.row(a).cwiseProduct(u.row(b));
    kr = std::move(next);
  }
  return kr;
}

inline Matrix solve_gram(const Matrix& gram, const Matrix& rhs) {
  // rhs is (I x R); solve X * gram = rhs
  Eigen::LDLT<Matrix> ldlt(gram);
  Matrix x = ldlt.solve(rhs.transpose()).transpose();
  if (ldlt.info() == Eigen::Success && x.allFinite()) return x;
  const double ridge = std::max(1e-12 * gram.trace() / static_cast<double>(gram.rows()), 1e-300);
  Matrix reg = gram + ridge * Matrix::Identity(gram.rows(), gram.cols());
  return reg.ldlt().solve(rhs.transpose()).transpose();
}

inline DenseTensor cp_dense(const std::vector<Matrix>& factors, const Vector& weights, const Shape& shape) {
  Matrix first = factors.front() * weights.asDiagonal();
  const Matrix kr = khatri_rao_except(factors, 0);
  return fold(first * kr.transpose(), shape);
}

}  // namespace detail

inline DenseTensor cp_reconstruct(const CPTensor& cp) {
  cp.validate();
  std::vector<Matrix> factors;
  for (const auto& f : cp.factors) factors.emplace_back(f.as_matrix(f.dim(0), f.dim(1)));
  Vector w = Vector::Ones(static_cast<Eigen::Index>(cp.rank()));
  for (std::size_t r = 0; r < cp.weights.size(); ++r) w[static_cast<Eigen::Index>(r)] = cp.weights[r];
  return detail::cp_dense(factors, w, cp.shape());
}

/// Alternating least squares from seeded Gaussian factors.
inline CPResult cp_als(const DenseTensor& t, const CPOptions& opts) {
  if (opts.rank < 1) fail(ErrorCode::InvalidArgument, "CP rank must be at least 1");
  const std::size_t d = t.order();
  if (d < 2) fail(ErrorCode::InvalidArgument, "CP decomposition needs order >= 2");
  const auto rank = static_cast<Eigen::Index>(opts.rank);
  const double norm = frobenius_norm(t);
  if (norm == 0.0) {
    CPTensor zero;
    for (std::size_t j = 0; j < d; ++j) zero.factors.emplace_back(Shape{t.dim(j), opts.rank});
    zero.weights.assign(opts.rank, 0.0);
    return zero;
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Matrix> factors(d);
  std::vector<Matrix> unfoldings(d);
  for (std::size_t j = 0; j < d; ++j) {
    factors[j].resize(static_cast<Eigen::Index>(t.dim(j)), rank);
    for (Eigen::Index i = 0; i < factors[j].size(); ++i) factors[j].data()[i] = gauss(rng);
    unfoldings[j] = mode_unfolding(t, j);
  }
  Vector weights = Vector::Ones(rank);

  double best_error = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_factors = factors;
  Vector best_weights = weights;
  double prev_fit = -std::numeric_limits<double>::infinity();
  std::size_t iter = 0;

  for (iter = 1; iter <= opts.max_iter; ++iter) {
    for (std::size_t n = 0; n < d; ++n) {
      Matrix gram = Matrix::Ones(rank, rank);
      for (std::size_t m = 0; m < d; ++m)
        if (m != n) gram = gram.cwiseProduct(factors[m].transpose() * factors[m]);
      const Matrix mttkrp = unfoldings[n] * detail::khatri_rao_except(factors, n);
      factors[n] = detail::solve_gram(gram, mttkrp);
      for (Eigen::Index r = 0; r < rank; ++r) {
        const double c = factors[n].col(r).norm();
        weights[r] = c;
        if (c > 0.0) factors[n].col(r) /= c;
      }
    }
    const DenseTensor approx = detail::cp_dense(factors, weights, t.shape());
    const double error = frobenius_distance(t, approx) / norm;
    if (!std::isfinite(error)) break;
    if (error < best_error) {
      best_error = error;
      best_factors = factors;
      best_weights = weights;
    }
    const double fit = 1.0 - error;
    if (fit - prev_fit < opts.tol) break;
    prev_fit = fit;
  }

  if (!(best_error <= opts.failure_threshold)) {
    return DecompositionFailure{best_error, std::min(iter, opts.max_iter),
                                std::isfinite(best_error) ? "fit stagnated above the failure threshold"
                                                          : "ALS diverged"};
  }
  CPTensor out;
  for (const auto& f : best_factors)
    out.factors.push_back(fold(f, {static_cast<std::size_t>(f.rows()), static_cast<std::size_t>(f.cols())}));
  out.weights.assign(best_weights.data(), best_weights.data() + best_weights.size());
  return out;
}

}  // namespace tnshield
