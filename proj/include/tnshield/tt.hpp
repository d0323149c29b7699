#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/QR>

#include "tnshield/policy.hpp"
#include "tnshield/svd.hpp"
#include "tnshield/tensor.hpp"

namespace tnshield {

/// Tensor train: core k has shape (r_{k-1}, I_k, r_k), r_0 = r_d = 1.
struct TTTensor {
  std::vector<DenseTensor> cores;

  std::size_t order() const noexcept { return cores.size(); }

  Shape shape() const {
    Shape s;
    for (const auto& c : cores) s.push_back(c.dim(1));
    return s;
  }

  std::vector<std::size_t> ranks() const {
    std::vector<std::size_t> r;
    if (cores.empty()) return r;
    r.push_back(cores.front().dim(0));
    for (const auto& c : cores) r.push_back(c.dim(2));
    return r;
  }

  void validate() const {
    if (cores.empty()) fail(ErrorCode::InvalidArgument, "tensor train without cores");
    for (std::size_t k = 0; k < cores.size(); ++k) {
      if (cores[k].order() != 3) fail(ErrorCode::ShapeMismatch, "TT cores must be order 3");
      if (k + 1 < cores.size() && cores[k].dim(2) != cores[k + 1].dim(0))
        fail(ErrorCode::ShapeMismatch, "TT rank mismatch between cores " + std::to_string(k) + " and " + std::to_string(k + 1));
    }
    if (cores.front().dim(0) != 1 || cores.back().dim(2) != 1)
      fail(ErrorCode::ShapeMismatch, "TT boundary ranks must be 1");
  }
};

namespace detail {

inline DenseTensor core_from(const RowMatrix& m, std::size_t r_in, std::size_t n, std::size_t r_out) {
  return from_row_matrix(m, {r_in, n, r_out});
}

// Shared left-to-right sweep; `step` decides the factors kept at each position.
template <typename StepFn>
TTTensor tt_sweep(const DenseTensor& t, StepFn&& step) {
  const std::size_t d = t.order();
  const Shape& shape = t.shape();
  TTTensor tt;
  tt.cores.reserve(d);

  RowMatrix carry = t.as_matrix(1, t.size());
  std::size_t r = 1;
  for (std::size_t k = 0; k + 1 < d; ++k) {
    const std::size_t rows = r * shape[k];
    const std::size_t cols = static_cast<std::size_t>(carry.size()) / rows;
    const Matrix unfolding = Eigen::Map<const RowMatrix>(carry.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    SVDFactors f = step(k, unfolding);
    const std::size_t next = f.rank();
    tt.cores.push_back(core_from(f.u, r, shape[k], next));
    carry = f.s.asDiagonal() * f.v.transpose();
    r = next;
  }
  tt.cores.push_back(core_from(carry, r, shape[d - 1], 1));
  return tt;
}

}  // namespace detail

/// TT-SVD. In tolerance mode every step may discard up to eps*||t||/sqrt(d-1),
/// which bounds the total relative error by eps for the plain kernel. When a
/// robust configuration is given, the binned robust SVD replaces the plain one.
inline TTTensor tt_svd(const DenseTensor& t, const RankPolicy& policy,
                       const std::optional<RobustBinConfig>& robust = std::nullopt) {
  validate(policy);
  const std::size_t d = t.order();
  if (d < 2) fail(ErrorCode::InvalidArgument, "TT-SVD needs a tensor of order >= 2");

  double budget = 0.0;
  if (const auto* tol = std::get_if<Tolerance>(&policy))
    budget = tol->epsilon * frobenius_norm(t) / std::sqrt(static_cast<double>(d - 1));

  return detail::tt_sweep(t, [&](std::size_t k, const Matrix& unfolding) {
    SVDFactors f = robust ? robust_svd(unfolding, *robust).factors : svd(unfolding);
    TruncationPolicy trunc = AbsoluteTolerance{budget};
    if (const auto* caps = std::get_if<MaxRanks>(&policy)) trunc = KeepRank{std::min(caps->at(k, d - 1), f.rank())};
    return truncate(f, trunc).factors;
  });
}

/// Singular values of every step of an untruncated plain TT-SVD sweep.
inline std::vector<Vector> tt_sweep_spectra(const DenseTensor& t) {
  if (t.order() < 2) fail(ErrorCode::InvalidArgument, "TT-SVD needs a tensor of order >= 2");
  std::vector<Vector> spectra;
  detail::tt_sweep(t, [&](std::size_t, const Matrix& unfolding) {
    SVDFactors f = svd(unfolding);
    spectra.push_back(f.s);
    return f;
  });
  return spectra;
}

inline DenseTensor tt_reconstruct(const TTTensor& tt) {
  tt.validate();
  const auto& first = tt.cores.front();
  RowMatrix left = first.as_matrix(first.dim(1), first.dim(2));
  for (std::size_t k = 1; k < tt.cores.size(); ++k) {
    const auto& core = tt.cores[k];
    const RowMatrix prod = left * core.as_matrix(core.dim(0), core.dim(1) * core.dim(2));
    // (rows, I_k * r_k) -> (rows * I_k, r_k) is free in row-major storage
    left = Eigen::Map<const RowMatrix>(prod.data(), prod.rows() * static_cast<Eigen::Index>(core.dim(1)),
                                       static_cast<Eigen::Index>(core.dim(2)));
  }
  return from_row_matrix(left, tt.shape());
}

/// Rank reduction in TT format: right-to-left QR orthogonalization, then a
/// left-to-right truncated SVD sweep with per-step budget eps*||A||/sqrt(d-1).
inline TTTensor tt_round(const TTTensor& tt, double epsilon) {
  tt.validate();
  if (epsilon < 0.0) fail(ErrorCode::InvalidArgument, "tolerance must be non-negative");
  TTTensor out = tt;
  auto& cores = out.cores;
  const std::size_t d = cores.size();
  if (d == 1) return out;

  for (std::size_t k = d - 1; k > 0; --k) {
    DenseTensor& core = cores[k];
    const std::size_t r_in = core.dim(0), n = core.dim(1), r_out = core.dim(2);
    const Matrix gt = core.as_matrix(r_in, n * r_out).transpose();
    Eigen::HouseholderQR<Matrix> qr(gt);
    const auto m = static_cast<Eigen::Index>(std::min(n * r_out, r_in));
    const Matrix q = qr.householderQ() * Matrix::Identity(gt.rows(), m);
    const Matrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    core = detail::core_from(q.transpose(), static_cast<std::size_t>(m), n, r_out);

    DenseTensor& prev = cores[k - 1];
    const std::size_t p_in = prev.dim(0), p_n = prev.dim(1);
    const RowMatrix updated = prev.as_matrix(p_in * p_n, prev.dim(2)) * r.transpose();
    prev = detail::core_from(updated, p_in, p_n, static_cast<std::size_t>(m));
  }

  const double budget = epsilon * frobenius_norm(cores.front()) / std::sqrt(static_cast<double>(d - 1));
  for (std::size_t k = 0; k + 1 < d; ++k) {
    DenseTensor& core = cores[k];
    const std::size_t r_in = core.dim(0), n = core.dim(1), r_out = core.dim(2);
    const SVDFactors f = truncate(svd(core.as_matrix(r_in * n, r_out)), AbsoluteTolerance{budget}).factors;
    const std::size_t kept = f.rank();
    core = detail::core_from(f.u, r_in, n, kept);

    DenseTensor& next = cores[k + 1];
    const std::size_t n_n = next.dim(1), n_out = next.dim(2);
    const RowMatrix carry = f.s.asDiagonal() * f.v.transpose();
    const RowMatrix updated = carry * next.as_matrix(next.dim(0), n_n * n_out);
    next = detail::core_from(updated, kept, n_n, n_out);
  }
  return out;
}

/// Sum of two tensor trains of equal shape; ranks add.
inline TTTensor tt_add(const TTTensor& a, const TTTensor& b) {
  a.validate();
  b.validate();
  if (a.shape() != b.shape()) fail(ErrorCode::ShapeMismatch, "TT shapes differ");
  const std::size_t d = a.order();
  TTTensor out;
  for (std::size_t k = 0; k < d; ++k) {
    const auto& ca = a.cores[k];
    const auto& cb = b.cores[k];
    const std::size_t n = ca.dim(1);
    const std::size_t r_in = (k == 0) ? 1 : ca.dim(0) + cb.dim(0);
    const std::size_t r_out = (k + 1 == d) ? 1 : ca.dim(2) + cb.dim(2);
    const std::size_t off_in = (k == 0) ? 0 : ca.dim(0);
    const std::size_t off_out = (k + 1 == d) ? 0 : ca.dim(2);
    DenseTensor core({r_in, n, r_out});
    for (std::size_t i = 0; i < ca.dim(0); ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < ca.dim(2); ++l) core.at({i, j, l}) = ca.at({i, j, l});
    for (std::size_t i = 0; i < cb.dim(0); ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < cb.dim(2); ++l) core.at({off_in + i, j, off_out + l}) += cb.at({i, j, l});
    out.cores.push_back(std::move(core));
  }
  return out;
}

}  // namespace tnshield
