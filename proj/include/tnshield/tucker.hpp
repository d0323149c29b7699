#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "tnshield/policy.hpp"
#include "tnshield/svd.hpp"
#include "tnshield/tensor.hpp"

namespace tnshield {

/// Tucker format: core of shape (R_1..R_d) and factors of shape (I_j, R_j).
struct TuckerTensor {
  DenseTensor core;
  std::vector<DenseTensor> factors;

  Shape shape() const {
    Shape s;
    for (const auto& f : factors) s.push_back(f.dim(0));
    return s;
  }

  std::vector<std::size_t> ranks() const { return core.shape(); }

  void validate() const {
    if (factors.empty() || factors.size() != core.order())
      fail(ErrorCode::ShapeMismatch, "Tucker core order must match the number of factors");
    for (std::size_t j = 0; j < factors.size(); ++j)
      if (factors[j].order() != 2 || factors[j].dim(1) != core.dim(j))
        fail(ErrorCode::ShapeMismatch, "Tucker factor " + std::to_string(j) + " does not match the core");
  }
};

/// Mode-j unfolding: rows indexed by mode j, columns by the remaining modes in order.
inline Matrix mode_unfolding(const DenseTensor& t, std::size_t mode) {
  std::vector<std::size_t> perm{mode};
  for (std::size_t k = 0; k < t.order(); ++k)
    if (k != mode) perm.push_back(k);
  const DenseTensor p = permute_modes(t, perm);
  return p.as_matrix(t.dim(mode), t.size() / t.dim(mode));
}

/// Truncated higher-order SVD. In tolerance mode every mode may discard up to
/// eps*||t||/sqrt(d), so the total relative error stays below eps.
inline TuckerTensor tucker_decompose(const DenseTensor& t, const RankPolicy& policy) {
  validate(policy);
  const std::size_t d = t.order();
  if (d < 2) fail(ErrorCode::InvalidArgument, "Tucker decomposition needs order >= 2");

  double budget = 0.0;
  if (const auto* tol = std::get_if<Tolerance>(&policy))
    budget = tol->epsilon * frobenius_norm(t) / std::sqrt(static_cast<double>(d));

  TuckerTensor out;
  DenseTensor core = t;
  for (std::size_t j = 0; j < d; ++j) {
    const SVDFactors f = svd(mode_unfolding(t, j));
    TruncationPolicy trunc = AbsoluteTolerance{budget};
    if (const auto* caps = std::get_if<MaxRanks>(&policy)) trunc = KeepRank{std::min(caps->at(j, d), f.rank())};
    const Matrix u = truncate(f, trunc).factors.u;
    out.factors.push_back(fold(u, {static_cast<std::size_t>(u.rows()), static_cast<std::size_t>(u.cols())}));
    core = mode_product(core, u.transpose(), j);
  }
  out.core = std::move(core);
  return out;
}

inline DenseTensor tucker_reconstruct(const TuckerTensor& tk) {
  tk.validate();
  DenseTensor out = tk.core;
  for (std::size_t j = 0; j < tk.factors.size(); ++j) {
    const auto& f = tk.factors[j];
    out = mode_product(out, Matrix(f.as_matrix(f.dim(0), f.dim(1))), j);
  }
  return out;
}

}  // namespace tnshield
