#include <gtest/gtest.h>

#include <random>

#include "lvae/linear_vae.hpp"
#include "lvae/verify.hpp"
#include "oracles.hpp"

namespace {

using lvae::DataMatrix;
using lvae::LinearVae;
using lvae::Matrix;
using lvae::Vector;

// Flat (W, V, D, mu, s2) vector for finite differences in natural coordinates.
Vector flatten(const LinearVae& v) {
  Vector p(v.decoder.size() + v.encoder.size() + v.variances.size() + v.mean.size() + 1);
  p << v.decoder.reshaped(), v.encoder.reshaped(), v.variances, v.mean, v.noise;
  return p;
}

LinearVae unflatten(const Vector& p, Eigen::Index n, Eigen::Index k) {
  LinearVae v;
  v.decoder = p.segment(0, n * k).reshaped(n, k);
  v.encoder = p.segment(n * k, k * n).reshaped(k, n);
  v.variances = p.segment(2 * n * k, k);
  v.mean = p.segment(2 * n * k + k, n);
  v.noise = p(p.size() - 1);
  return v;
}

Vector flatten(const lvae::VaeGradients& g) {
  Vector p(g.decoder.size() + g.encoder.size() + g.variances.size() + g.mean.size() + 1);
  p << g.decoder.reshaped(), g.encoder.reshaped(), g.variances, g.mean, g.noise;
  return p;
}

TEST(AnalyticElbo, MatchesDirectPerDatumFormulas) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 15; ++t) {
    const Eigen::Index n = 2 + t % 6;
    const Eigen::Index k = 1 + t % 3;
    const auto data = lvae::fixtures::random_data(30, n, rng);
    const auto vae = lvae::fixtures::random_linear_vae(n, k, rng);
    const auto b = lvae::analytic_elbo(vae, data);
    const auto ref = oracle::direct_elbo(vae.decoder, vae.encoder, vae.variances, vae.mean, vae.noise, data.values());
    EXPECT_NEAR(b.term_b, ref.kl, 1e-10 * (1.0 + std::abs(ref.kl)));
    EXPECT_NEAR(b.term_c, ref.recon, 1e-10 * std::abs(ref.recon));
    EXPECT_NEAR(b.elbo, ref.recon - ref.kl, 1e-10 * std::abs(ref.recon));
    const double lm = oracle::dense_log_likelihood(vae.decoder, vae.mean, vae.noise, data.values());
    EXPECT_NEAR(b.log_marginal, lm, 1e-10 * std::abs(lm));
  }
}

TEST(AnalyticElbo, DecompositionAndNonNegativeGap) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const auto data = lvae::fixtures::random_data(20, 5, rng);
    const auto vae = lvae::fixtures::random_linear_vae(5, 1 + t % 4, rng);
    const auto b = lvae::analytic_elbo(vae, data);
    EXPECT_DOUBLE_EQ(b.elbo, -b.term_b + b.term_c);
    EXPECT_GE(b.term_b, 0.0);
    EXPECT_GE(b.term_a, -1e-9 * std::abs(b.log_marginal));
    EXPECT_LE(b.elbo, b.log_marginal + 1e-9 * std::abs(b.log_marginal));
  }
}

TEST(AnalyticElbo, TightAtTheMaximumLikelihoodSolution) {
  const auto data = lvae::synthesize({3, 9, {6.0, 3.0, 1.0}, 0.4, 400, 3});
  const auto fit = lvae::fit_mle(data, 3);
  const auto vae = lvae::encoder_optimal_vae(fit.model.weights, fit.model.mean, fit.model.noise);
  const auto b = lvae::analytic_elbo(vae, data);
  EXPECT_LT(std::abs(b.term_a) / data.count(), 1e-10);
  EXPECT_NEAR(b.elbo, lvae::log_marginal(fit.model, data), 1e-9 * data.count());
}

TEST(AnalyticElbo, GapAtEncoderOptimumEqualsClosedForm) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto data = lvae::fixtures::random_data(40, 6, rng);
    const auto w = lvae::fixtures::random_linear_vae(6, 3, rng).decoder;
    const auto vae = lvae::encoder_optimal_vae(w, data.mean(), 0.6);
    const auto b = lvae::analytic_elbo(vae, data);
    EXPECT_NEAR(b.term_a / data.count(), lvae::posterior_gap_at_stationary(w, 0.6), 1e-10);
  }
}

TEST(PosteriorGap, ZeroExactlyForOrthogonalColumns) {
  std::mt19937_64 rng(5);
  const Matrix q = lvae::fixtures::random_orthonormal(6, rng).leftCols(3);
  const Matrix w = q * (Vector(3) << 2.0, 0.5, 1.0).finished().asDiagonal();
  EXPECT_LT(std::abs(lvae::posterior_gap_at_stationary(w, 0.3)), 1e-14);
  Matrix skewed = w;
  skewed.col(1) += 0.1 * w.col(0);
  EXPECT_GT(lvae::posterior_gap_at_stationary(skewed, 0.3), 1e-6);
}

TEST(OptimalVariational, MatchesPosteriorMeanMapAndPrecisionDiagonal) {
  std::mt19937_64 rng(6);
  const Matrix w = lvae::fixtures::random_linear_vae(5, 3, rng).decoder;
  const double s2 = 0.9;
  const auto opt = lvae::optimal_variational(w, s2);
  const Matrix precision = Matrix::Identity(3, 3) + w.transpose() * w / s2;
  EXPECT_LT((opt.encoder - precision.inverse() * w.transpose() / s2).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((opt.variances - precision.diagonal().cwiseInverse()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(OptimalVariational, MaximizesElboForFixedDecoder) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1e-3);
  const auto data = lvae::fixtures::random_data(50, 4, rng);
  const auto w = lvae::fixtures::random_linear_vae(4, 2, rng).decoder;
  const auto best = lvae::encoder_optimal_vae(w, data.mean(), 0.8);
  const double top = lvae::analytic_elbo(best, data).elbo;
  for (int t = 0; t < 20; ++t) {
    LinearVae other = best;
    for (Eigen::Index i = 0; i < other.encoder.size(); ++i) other.encoder.data()[i] += normal(rng);
    other.variances.array() *= 1.0 + 10.0 * normal(rng);
    EXPECT_LT(lvae::analytic_elbo(other, data).elbo, top);
  }
}

TEST(AnalyticGradients, MatchFiniteDifferencesOfDirectElbo) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 12; ++t) {
    const Eigen::Index n = 2 + t % 5;
    const Eigen::Index k = 1 + t % 3;
    const double beta = t % 3 == 0 ? 1.0 : 0.25 * (t % 5);
    const auto data = lvae::fixtures::random_data(25, n, rng);
    const auto vae = lvae::fixtures::random_linear_vae(n, k, rng);
    const auto g = lvae::analytic_gradients(vae, data, true, true, beta);
    const auto f = [&](const Vector& p) {
      const auto v = unflatten(p, n, k);
      const auto e = oracle::direct_elbo(v.decoder, v.encoder, v.variances, v.mean, v.noise, data.values());
      return -beta * e.kl + e.recon;
    };
    const Vector fd = oracle::fd_gradient(f, flatten(vae));
    const Vector an = flatten(g);
    for (Eigen::Index i = 0; i < an.size(); ++i) {
      EXPECT_NEAR(fd(i), an(i), 1e-5 * std::abs(an(i)) + 1e-6) << "instance " << t << " entry " << i;
    }
  }
}

TEST(AnalyticGradients, FrozenParametersGetZeroGradient) {
  std::mt19937_64 rng(9);
  const auto data = lvae::fixtures::random_data(20, 4, rng);
  const auto vae = lvae::fixtures::random_linear_vae(4, 2, rng);
  const auto g = lvae::analytic_gradients(vae, data, false, false);
  EXPECT_EQ(g.noise, 0.0);
  EXPECT_EQ(g.mean, Vector::Zero(4));
}

TEST(AnalyticGradients, VanishAtTheGlobalOptimum) {
  const auto data = lvae::synthesize({2, 6, {5.0, 2.0}, 0.5, 300, 10});
  const auto fit = lvae::fit_mle(data, 2);
  const auto vae = lvae::encoder_optimal_vae(fit.model.weights, fit.model.mean, fit.model.noise);
  const auto g = lvae::analytic_gradients(vae, data, true, true);
  EXPECT_LT(flatten(g).cwiseAbs().maxCoeff() / data.count(), 1e-10);
}

TEST(StochasticEstimate, GradientsAreExactForFixedDraws) {
  std::mt19937_64 rng(11);
  const Eigen::Index n = 4;
  const Eigen::Index k = 2;
  const auto data = lvae::fixtures::random_data(15, n, rng);
  const auto vae = lvae::fixtures::random_linear_vae(n, k, rng);
  std::mt19937_64 noise_rng(12);
  const auto draws = lvae::detail::draw_noise(noise_rng, 3, data.rows(), k);
  const double beta = 0.6;
  const auto est = lvae::detail::stochastic_estimate(vae, data, draws, beta, true, true, true);
  const auto f = [&](const Vector& p) {
    return lvae::detail::stochastic_estimate(unflatten(p, n, k), data, draws, beta, true, true, false).objective;
  };
  const Vector fd = oracle::fd_gradient(f, flatten(vae));
  const Vector an = flatten(est.gradients);
  EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + an.cwiseAbs().maxCoeff()));
}

TEST(StochasticEstimate, ManyDrawsApproachAnalyticGradients) {
  std::mt19937_64 rng(13);
  const auto data = lvae::fixtures::random_data(20, 3, rng);
  const auto vae = lvae::fixtures::random_linear_vae(3, 2, rng);
  std::mt19937_64 noise_rng(14);
  const auto draws = lvae::detail::draw_noise(noise_rng, 20000, data.rows(), 2);
  const auto est = lvae::detail::stochastic_estimate(vae, data, draws, 1.0, true, true, true);
  const Vector an = flatten(lvae::analytic_gradients(vae, data, true, true));
  EXPECT_LT((flatten(est.gradients) - an).cwiseAbs().maxCoeff(), 2e-2 * (1.0 + an.cwiseAbs().maxCoeff()));
}

TEST(StochasticElbo, SeedDeterminesEstimate) {
  std::mt19937_64 rng(15);
  const auto data = lvae::fixtures::random_data(10, 3, rng);
  const auto vae = lvae::fixtures::random_linear_vae(3, 2, rng);
  EXPECT_EQ(lvae::stochastic_elbo(vae, data, 2, 5), lvae::stochastic_elbo(vae, data, 2, 5));
  EXPECT_NE(lvae::stochastic_elbo(vae, data, 2, 5), lvae::stochastic_elbo(vae, data, 2, 6));
  EXPECT_THROW(lvae::stochastic_elbo(vae, data, 0, 5), lvae::ParameterError);
}

TEST(StochasticElbo, UnbiasedWithinThreeStandardErrors) {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 4; ++t) {
    const auto data = lvae::fixtures::random_data(30, 5, rng);
    const auto vae = lvae::fixtures::random_linear_vae(5, 2, rng);
    const double exact = lvae::analytic_elbo(vae, data).elbo;
    double sum = 0.0;
    double sum_sq = 0.0;
    const int seeds = 300;
    for (int s = 0; s < seeds; ++s) {
      const double e = lvae::stochastic_elbo(vae, data, 1, 1000 + 7 * t + 31 * s);
      sum += e;
      sum_sq += e * e;
    }
    const double mean = sum / seeds;
    const double se = std::sqrt((sum_sq / seeds - mean * mean) / (seeds - 1));
    EXPECT_LE(std::abs(mean - exact), 3.0 * se);
  }
}

TEST(StochasticElbo, ZeroVarianceLimitIsDeterministic) {
  std::mt19937_64 rng(17);
  const auto data = lvae::fixtures::random_data(10, 3, rng);
  auto vae = lvae::fixtures::random_linear_vae(3, 2, rng);
  vae.variances.setConstant(1e-300);
  const double a = lvae::stochastic_elbo(vae, data, 1, 1);
  const double b = lvae::stochastic_elbo(vae, data, 1, 2);
  EXPECT_NEAR(a, b, 1e-9 * std::abs(a));
}

TEST(LinearVae, ValidationErrors) {
  std::mt19937_64 rng(18);
  const auto data = lvae::fixtures::random_data(10, 3, rng);
  auto vae = lvae::fixtures::random_linear_vae(3, 2, rng);
  auto bad = vae;
  bad.variances(0) = 0.0;
  EXPECT_THROW(lvae::analytic_elbo(bad, data), lvae::ParameterError);
  bad = vae;
  bad.noise = -1.0;
  EXPECT_THROW(lvae::analytic_elbo(bad, data), lvae::ParameterError);
  bad = vae;
  bad.encoder.resize(2, 4);
  EXPECT_THROW(lvae::analytic_elbo(bad, data), lvae::ParameterError);
  EXPECT_THROW(lvae::analytic_elbo(vae, lvae::fixtures::random_data(10, 4, rng)), lvae::ParameterError);
  EXPECT_THROW(lvae::optimal_variational(vae.decoder, 0.0), lvae::ParameterError);
}

}  // namespace
