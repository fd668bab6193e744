#include <gtest/gtest.h>

#include <random>

#include "lvae/linalg.hpp"
#include "oracles.hpp"

namespace {

using lvae::Matrix;
using lvae::Vector;

Matrix random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return 0.5 * (a + a.transpose());
}

Matrix random_skew(Eigen::Index n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return 0.5 * (a - a.transpose());
}

TEST(SymmetricEigen, MatchesJacobiOracle) {
  std::mt19937_64 rng(7);
  for (Eigen::Index n : {1, 2, 3, 5, 8, 13, 20}) {
    const Matrix a = random_symmetric(n, rng);
    const auto eig = lvae::symmetric_eigen(a);
    const Vector ref = oracle::jacobi_eigenvalues(a);
    EXPECT_LT((eig.values - ref).cwiseAbs().maxCoeff(), 1e-11) << "n=" << n;
  }
}

TEST(SymmetricEigen, ReconstructsAndIsOrthonormal) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 9;
    const Matrix a = random_symmetric(n, rng);
    const auto eig = lvae::symmetric_eigen(a);
    const Matrix recon = eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
    EXPECT_LT((recon - a).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()));
    EXPECT_LT((eig.vectors.transpose() * eig.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index j = 1; j < n; ++j) EXPECT_GE(eig.values(j - 1), eig.values(j));
  }
}

TEST(SymmetricEigen, DiagonalInputIsSortedDescending) {
  const Vector d = (Vector(4) << 1.0, 4.0, 2.0, 3.0).finished();
  const auto eig = lvae::symmetric_eigen(d.asDiagonal());
  EXPECT_EQ(eig.values, (Vector(4) << 4.0, 3.0, 2.0, 1.0).finished());
  EXPECT_DOUBLE_EQ(std::abs(eig.vectors(1, 0)), 1.0);
}

TEST(SymmetricEigen, SignConventionFirstSignificantEntryPositive) {
  std::mt19937_64 rng(3);
  const auto eig = lvae::symmetric_eigen(random_symmetric(6, rng));
  for (Eigen::Index j = 0; j < 6; ++j) {
    for (Eigen::Index i = 0; i < 6; ++i) {
      if (std::abs(eig.vectors(i, j)) > 1e-12) {
        EXPECT_GT(eig.vectors(i, j), 0.0);
        break;
      }
    }
  }
}

TEST(SymmetricEigen, RepeatedEigenvaluesAreDeterministic) {
  const Matrix a = Matrix::Identity(4, 4) * 2.0;
  const auto first = lvae::symmetric_eigen(a);
  const auto second = lvae::symmetric_eigen(a);
  EXPECT_EQ(first.vectors, second.vectors);
  EXPECT_EQ(first.values, Vector::Constant(4, 2.0));
}

TEST(SymmetricEigen, RejectsNonSquare) { EXPECT_THROW(lvae::symmetric_eigen(Matrix(2, 3)), lvae::ParameterError); }

TEST(SymmetricEigen, IterationCapSurfacesAsNumericError) {
  std::mt19937_64 rng(5);
  try {
    lvae::symmetric_eigen(random_symmetric(8, rng), 0);
    FAIL() << "expected NumericError";
  } catch (const lvae::NumericError& e) {
    EXPECT_GE(e.iterations(), 1u);
  }
}

TEST(Expm, ZeroIsIdentity) {
  EXPECT_LT((lvae::expm(Matrix::Zero(4, 4)) - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Expm, PlaneRotation) {
  const double theta = 0.7;
  Matrix a(2, 2);
  a << 0.0, -theta, theta, 0.0;
  Matrix r(2, 2);
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  EXPECT_LT((lvae::expm(a) - r).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Expm, MatchesTaylorOracle) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double scale : {0.01, 0.5, 3.0}) {
    Matrix a(5, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = scale * normal(rng);
    const Matrix ref = oracle::taylor_expm(a);
    EXPECT_LT((lvae::expm(a) - ref).cwiseAbs().maxCoeff(), 1e-11 * (1.0 + ref.cwiseAbs().maxCoeff()));
  }
}

TEST(Expm, SkewGivesOrthogonalWithUnitDeterminant) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix r = lvae::expm(random_skew(6, 1.5, rng));
    EXPECT_LT((r.transpose() * r - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(RotationLog, InvertsExpmForSmallGenerators) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix l = random_skew(5, 0.3, rng);
    EXPECT_LT((lvae::rotation_log(lvae::expm(l)) - l).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(RotationLog, RoundTripsArbitraryRotations) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix r = lvae::expm(random_skew(4, 2.0, rng));
    const Matrix l = lvae::rotation_log(r);
    EXPECT_LT((l + l.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((lvae::expm(l) - r).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(RotationLog, HalfTurnPairs) {
  Matrix r = Matrix::Identity(3, 3);
  r(0, 0) = -1.0;
  r(1, 1) = -1.0;
  EXPECT_LT((lvae::expm(lvae::rotation_log(r)) - r).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RotationLog, ReflectionIsRejected) {
  Matrix r = Matrix::Identity(3, 3);
  r(2, 2) = -1.0;
  EXPECT_THROW(lvae::rotation_log(r), lvae::NumericError);
}

TEST(LogDetSpd, MatchesDeterminant) {
  std::mt19937_64 rng(29);
  for (Eigen::Index n : {1, 3, 7}) {
    const Matrix b = random_symmetric(n, rng);
    const Matrix a = b * b.transpose() + Matrix::Identity(n, n);
    EXPECT_NEAR(lvae::log_det_spd(a), std::log(a.determinant()), 1e-11);
  }
}

TEST(LogDetSpd, IndefiniteThrows) {
  EXPECT_THROW(lvae::log_det_spd((Vector(2) << 1.0, -1.0).finished().asDiagonal().toDenseMatrix()),
               lvae::NumericError);
}

}  // namespace
