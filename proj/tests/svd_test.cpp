#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "tnshield/svd.hpp"

using namespace tnshield;

namespace {

double orthogonality_defect(const Matrix& m) {
  return (m.transpose() * m - Matrix::Identity(m.cols(), m.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Svd, Identity) {
  const SVDFactors f = svd(Matrix::Identity(3, 3));
  EXPECT_EQ(f.rank(), 3u);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(f.s[i], 1.0, 1e-15);
}

TEST(Svd, DiagonalGivesSortedValuesAndUnitVectors) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 1.0;
  a(1, 1) = 3.0;
  a(2, 2) = 2.0;
  const SVDFactors f = svd(a);
  EXPECT_NEAR(f.s[0], 3.0, 1e-14);
  EXPECT_NEAR(f.s[1], 2.0, 1e-14);
  EXPECT_NEAR(f.s[2], 1.0, 1e-14);
  // permuted identity; canonical signs make every entry non-negative
  EXPECT_NEAR(f.u(1, 0), 1.0, 1e-14);
  EXPECT_NEAR(f.u(2, 1), 1.0, 1e-14);
  EXPECT_NEAR(f.u(0, 2), 1.0, 1e-14);
  EXPECT_NEAR((f.u - f.v).norm(), 0.0, 1e-14);
}

TEST(Svd, RandomReconstructionAndInvariants) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_matrix(5, 4, rng);
    const SVDFactors f = svd(a);
    EXPECT_LT((f.reconstruct() - a).norm(), 1e-10 * a.norm());
    EXPECT_LT(orthogonality_defect(f.u), 1e-10);
    EXPECT_LT(orthogonality_defect(f.v), 1e-10);
    for (Eigen::Index i = 0; i + 1 < f.s.size(); ++i) EXPECT_GE(f.s[i], f.s[i + 1]);
    EXPECT_GE(f.s.minCoeff(), 0.0);
  }
}

TEST(Svd, SignsAreCanonical) {
  std::mt19937_64 rng(12);
  const Matrix a = oracle::random_matrix(6, 4, rng);
  const SVDFactors f = svd(a);
  const SVDFactors g = svd(-a);
  for (Eigen::Index j = 0; j < f.u.cols(); ++j) EXPECT_GT(f.u(0, j), 0.0);
  // negating the input flips V, never U
  EXPECT_LT((f.u - g.u).norm(), 1e-10);
  EXPECT_LT((f.v + g.v).norm(), 1e-10);
}

TEST(Svd, RejectsEmptyAndNonFinite) {
  EXPECT_TNS_ERROR(svd(Matrix(0, 3)), ErrorCode::InvalidArgument);
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_TNS_ERROR(svd(bad), ErrorCode::ConvergenceFailure);
}

TEST(Truncate, KeepRank) {
  const SVDFactors f = svd(Vector(Vector::LinSpaced(3, 3.0, 1.0)).asDiagonal().toDenseMatrix());
  const Truncated t = truncate(f, KeepRank{2});
  ASSERT_EQ(t.factors.rank(), 2u);
  EXPECT_NEAR(t.factors.s[0], 3.0, 1e-14);
  EXPECT_NEAR(t.factors.s[1], 2.0, 1e-14);
  EXPECT_NEAR(t.discarded_energy, 1.0, 1e-14);
  EXPECT_TNS_ERROR(truncate(f, KeepRank{4}), ErrorCode::InvalidArgument);
}

TEST(Truncate, ZeroToleranceKeepsEverything) {
  std::mt19937_64 rng(13);
  const SVDFactors f = svd(oracle::random_matrix(4, 4, rng));
  EXPECT_EQ(truncate(f, RelativeTolerance{0.0}).factors.rank(), 4u);
  EXPECT_EQ(truncate(f, AbsoluteTolerance{0.0}).discarded_energy, 0.0);
}

TEST(Truncate, PrefixRuleByHand) {
  // S = [10, 1, 0.1]: dropping {1, 0.1} costs sqrt(1.01) <= 1.01, dropping {0.1} alone is also allowed,
  // so the smallest admissible prefix is [10]
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 10.0;
  a(1, 1) = 1.0;
  a(2, 2) = 0.1;
  const SVDFactors f = svd(a);
  const double delta = 1.01 / a.norm();
  const Truncated t = truncate(f, RelativeTolerance{delta});
  ASSERT_EQ(t.factors.rank(), 1u);
  EXPECT_NEAR(t.factors.s[0], 10.0, 1e-13);
  EXPECT_NEAR(t.discarded_energy, std::sqrt(1.01), 1e-13);
}

TEST(Truncate, DiscardedEnergyEqualsReconstructionDistance) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = oracle::random_matrix(7, 5, rng);
    const SVDFactors f = svd(a);
    for (std::size_t r = 1; r <= 5; ++r) {
      const Truncated t = truncate(f, KeepRank{r});
      const double dist = (f.reconstruct() - t.factors.reconstruct()).norm();
      EXPECT_NEAR(t.discarded_energy, dist, 1e-10 * std::max(dist, 1e-300) + 1e-14);
    }
  }
}

TEST(RankForBudget, SmallestAdmissiblePrefix) {
  Vector s(4);
  s << 4.0, 3.0, 2.0, 1.0;
  EXPECT_EQ(rank_for_budget(s, 0.0), 4u);
  EXPECT_EQ(rank_for_budget(s, 1.0), 3u);
  EXPECT_EQ(rank_for_budget(s, std::sqrt(5.0)), 2u);
  EXPECT_EQ(rank_for_budget(s, 100.0), 1u);
}

//
// robust SVD
//

TEST(RobustBinIndex, HalfOpenIntervals) {
  const double alpha = 1.0, beta = std::log(2.0);
  // edges 0, 1, 2, 4, 8, ...
  EXPECT_EQ(robust_bin_index(0.0, alpha, beta), 0u);
  EXPECT_EQ(robust_bin_index(0.5, alpha, beta), 1u);
  EXPECT_EQ(robust_bin_index(1.0, alpha, beta), 1u);
  EXPECT_EQ(robust_bin_index(1.5, alpha, beta), 2u);
  EXPECT_EQ(robust_bin_index(3.0, alpha, beta), 3u);
  EXPECT_EQ(robust_bin_index(4.1, alpha, beta), 4u);
}

TEST(RobustSvd, WellSeparatedValuesAreNotMerged) {
  std::mt19937_64 rng(21);
  const Matrix q1 = oracle::random_orthonormal(4, 4, rng), q2 = oracle::random_orthonormal(4, 4, rng);
  Vector s(4);
  s << 1000.0, 100.0, 10.0, 1.0;
  const Matrix a = q1 * s.asDiagonal() * q2.transpose();
  // edges grow by e per bin; tail sums 1111, 111, 11, 1 sit in distinct bins
  const RobustSVD r = robust_svd(a, RobustBinConfig{1.0, 0.5, 64});
  const SVDFactors plain = svd(a);
  ASSERT_EQ(r.factors.rank(), 4u);
  EXPECT_FALSE(r.degenerate_bins);
  EXPECT_LT((r.factors.s - plain.s).norm(), 1e-10);
  EXPECT_LT((r.factors.u - plain.u).norm(), 1e-10);
  EXPECT_LT((r.factors.v - plain.v).norm(), 1e-10);
  EXPECT_EQ(r.merged_into, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(RobustSvd, HandExecutedTwoByTwoMerge) {
  // symmetric [[1.5, 0.5], [0.5, 1.5]] has S0 = [2, 1] with vectors (1,1)/sqrt2 and (1,-1)/sqrt2.
  // Tail sums [3, 1] both fall in (0.5, 0.5 e^2] = (0.5, 3.69], so they merge:
  // S = [3], u = normalize(((1,1) + (1,-1)) / (2 sqrt2)) = (1, 0).
  Matrix a(2, 2);
  a << 1.5, 0.5, 0.5, 1.5;
  const RobustSVD r = robust_svd(a, RobustBinConfig{2.0, 0.5, 8});
  ASSERT_EQ(r.factors.rank(), 1u);
  EXPECT_TRUE(r.degenerate_bins);
  EXPECT_NEAR(r.factors.s[0], 3.0, 1e-14);
  const SVDFactors plain = svd(a);
  const Vector u_mean = (plain.u.col(0) + plain.u.col(1)) / 2.0;
  const Vector v_mean = (plain.v.col(0) + plain.v.col(1)) / 2.0;
  EXPECT_LT((r.factors.u.col(0) - u_mean.normalized()).norm(), 1e-14);
  EXPECT_LT((r.factors.v.col(0) - v_mean.normalized()).norm(), 1e-14);
  EXPECT_NEAR(std::abs(r.factors.u(0, 0)), 1.0, 1e-14);
  EXPECT_NEAR(r.factors.u(1, 0), 0.0, 1e-14);
  EXPECT_EQ(r.merged_into, (std::vector<std::size_t>{0, 0}));
}

TEST(RobustSvd, EqualValuesMergeIntoTheirSum) {
  const RobustSVD r = robust_svd(Matrix::Identity(2, 2), RobustBinConfig{1.0, 0.9, 8});
  ASSERT_EQ(r.factors.rank(), 1u);
  EXPECT_NEAR(r.factors.s[0], 2.0, 1e-14);
  EXPECT_NEAR(r.factors.u.col(0).norm(), 1.0, 1e-14);
}

TEST(RobustSvd, EnergyConservationContiguityAndUnitColumns) {
  std::mt19937_64 rng(22);
  for (double beta : {0.01, 0.03, 0.1, 0.5}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = oracle::random_matrix(20, 20, rng);
      const SVDFactors plain = svd(a);
      const RobustSVD r = robust_svd(a, RobustBinConfig{beta, std::nullopt, 512});
      EXPECT_LE(std::abs(r.factors.s.sum() - plain.s.sum()), 1e-9 * plain.s.sum());
      for (Eigen::Index j = 0; j < r.factors.u.cols(); ++j) {
        EXPECT_NEAR(r.factors.u.col(j).norm(), 1.0, 1e-12);
        EXPECT_NEAR(r.factors.v.col(j).norm(), 1.0, 1e-12);
      }
      for (Eigen::Index j = 0; j + 1 < r.factors.s.size(); ++j) EXPECT_GE(r.factors.s[j], r.factors.s[j + 1]);
      // every output column owns one contiguous run of input indices
      std::vector<std::size_t> first(r.factors.rank(), SIZE_MAX), last(r.factors.rank(), 0), count(r.factors.rank(), 0);
      for (std::size_t i = 0; i < r.merged_into.size(); ++i) {
        const std::size_t b = r.merged_into[i];
        first[b] = std::min(first[b], i);
        last[b] = i;
        ++count[b];
      }
      for (std::size_t b = 0; b < r.factors.rank(); ++b) EXPECT_EQ(last[b] - first[b] + 1, count[b]);
    }
  }
}

TEST(RobustSvd, TruncationMarksDiscardedIndices) {
  std::mt19937_64 rng(23);
  const Matrix a = oracle::random_matrix(10, 10, rng);
  const RobustBinConfig cfg{0.5, 1e-3, 64};
  const RobustSVD full = robust_svd(a, cfg);
  ASSERT_GT(full.factors.rank(), 2u);
  const RobustSVD r = robust_svd(a, cfg, TruncationPolicy{KeepRank{2}});
  ASSERT_EQ(r.factors.rank(), 2u);
  EXPECT_LT((r.factors.u - full.factors.u.leftCols(2)).norm(), 1e-14);
  for (std::size_t i = 0; i < r.merged_into.size(); ++i)
    EXPECT_EQ(r.merged_into[i], std::min<std::size_t>(full.merged_into[i], 2));
}

TEST(RobustSvd, RejectsInvalidConfig) {
  const Matrix a = Matrix::Identity(2, 2);
  EXPECT_TNS_ERROR(robust_svd(a, RobustBinConfig{0.0, std::nullopt, 8}), ErrorCode::InvalidArgument);
  EXPECT_TNS_ERROR(robust_svd(a, RobustBinConfig{0.1, -1.0, 8}), ErrorCode::InvalidArgument);
  EXPECT_TNS_ERROR(robust_svd(a, RobustBinConfig{0.1, std::nullopt, 0}), ErrorCode::InvalidArgument);
}

//
// decay slope
//

TEST(DecaySlope, ExactExponential) {
  std::vector<double> s(40);
  for (std::size_t k = 1; k <= s.size(); ++k) s[k - 1] = std::exp(-0.1 * static_cast<double>(k));
  const SlopeEstimate e = decay_slope(s);
  EXPECT_NEAR(e.slope, -0.1, 1e-9);
  EXPECT_NEAR(e.std_error, 0.0, 1e-9);
  EXPECT_EQ(e.lo, 5u);
  EXPECT_EQ(e.hi, 25u);
}

TEST(DecaySlope, ConstantSpectrumIsFlat) {
  const std::vector<double> s(30, 2.5);
  EXPECT_NEAR(decay_slope(s).slope, 0.0, 1e-15);
}

TEST(DecaySlope, MatchesLeastSquaresOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(30);
    for (auto& v : s) v = u(rng);
    std::sort(s.begin(), s.end(), std::greater<>());
    std::vector<double> x, y;
    for (std::size_t k = 5; k <= 25; ++k) {
      x.push_back(static_cast<double>(k));
      y.push_back(std::log(s[k - 1]));
    }
    const oracle::Ols ref = oracle::ols(x, y);
    const SlopeEstimate e = decay_slope(s);
    EXPECT_NEAR(e.slope, ref.slope, 1e-12);
    EXPECT_NEAR(e.std_error, ref.std_error, 1e-10);
  }
}

TEST(DecaySlope, ScaleInvariant) {
  std::mt19937_64 rng(32);
  const SVDFactors f = svd(oracle::random_matrix(30, 30, rng));
  const double base = decay_slope(f.s).slope;
  for (double c : {1e-3, 0.5, 7.0, 1e6}) {
    const Vector scaled = c * f.s;
    EXPECT_NEAR(decay_slope(scaled).slope, base, 1e-12);
  }
}

TEST(DecaySlope, Errors) {
  EXPECT_TNS_ERROR(decay_slope(std::vector<double>(24, 1.0)), ErrorCode::InsufficientRank);
  std::vector<double> s(25, 1.0);
  s[20] = 0.0;
  EXPECT_TNS_ERROR(decay_slope(s), ErrorCode::NonPositiveValue);
  EXPECT_TNS_ERROR(decay_slope(s, 5, 5), ErrorCode::InvalidArgument);
}

TEST(DecaySlope, ClampedVariantRecordsRange) {
  std::vector<double> s(12);
  for (std::size_t k = 1; k <= s.size(); ++k) s[k - 1] = std::exp(-0.2 * static_cast<double>(k));
  const SlopeEstimate e = decay_slope_clamped(s);
  EXPECT_EQ(e.hi, 12u);
  EXPECT_NEAR(e.slope, -0.2, 1e-12);
  EXPECT_TNS_ERROR(decay_slope_clamped(std::vector<double>(5, 1.0)), ErrorCode::InsufficientRank);
}

//
// singular value transfer
//

TEST(TransferSingularValues, SelfTransferIsReconstruction) {
  std::mt19937_64 rng(41);
  const Matrix a = oracle::random_matrix(8, 6, rng);
  EXPECT_LT((transfer_singular_values(a, a) - a).norm(), 1e-10 * a.norm());
  EXPECT_LT((transfer_singular_values(a, a, false) - a).norm(), 1e-10 * a.norm());
}

TEST(TransferSingularValues, EqualSpectraGivePlainReconstruction) {
  std::mt19937_64 rng(42);
  Vector s(5);
  s << 5.0, 4.0, 3.0, 2.0, 1.0;
  const Matrix target = oracle::random_orthonormal(6, 5, rng) * s.asDiagonal() * oracle::random_orthonormal(5, 5, rng).transpose();
  const Matrix source = oracle::random_orthonormal(7, 5, rng) * s.asDiagonal() * oracle::random_orthonormal(9, 5, rng).transpose();
  EXPECT_LT((transfer_singular_values(source, target) - target).norm(), 1e-10 * target.norm());
}

TEST(TransferSingularValues, FlatSourceFlattensTheDecay) {
  std::mt19937_64 rng(43);
  Vector s(40);
  for (Eigen::Index k = 0; k < 40; ++k) s[k] = std::exp(-0.15 * static_cast<double>(k + 1));
  const Matrix target = oracle::random_orthonormal(40, 40, rng) * s.asDiagonal() * oracle::random_orthonormal(40, 40, rng).transpose();
  Vector flat(40);
  for (Eigen::Index k = 0; k < 40; ++k) flat[k] = 1.0 - 0.001 * static_cast<double>(k);
  const Matrix source = oracle::random_orthonormal(40, 40, rng) * flat.asDiagonal() * oracle::random_orthonormal(40, 40, rng).transpose();
  const Matrix out = transfer_singular_values(source, target);
  EXPECT_GT(decay_slope(svd(out).s).slope, decay_slope(svd(target).s).slope);
  EXPECT_NEAR(svd(out).s.sum(), s.sum(), 1e-9 * s.sum());
}

TEST(TransferSingularValues, ReconcilesRanks) {
  std::mt19937_64 rng(44);
  const Matrix out = transfer_singular_values(oracle::random_matrix(3, 3, rng), oracle::random_matrix(6, 5, rng));
  EXPECT_EQ(out.rows(), 6);
  EXPECT_EQ(out.cols(), 5);
  EXPECT_LE(svd(out).s[3], 1e-10);
}
