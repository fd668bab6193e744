#pragma once

// Built-in verification suites run by `lvae verify`. Each suite builds its own
// synthetic fixtures, so the suites need no input files.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lvae/collapse.hpp"
#include "lvae/dataset.hpp"
#include "lvae/identifiability.hpp"
#include "lvae/landscape.hpp"
#include "lvae/linear_vae.hpp"
#include "lvae/parallel.hpp"
#include "lvae/ppca.hpp"
#include "lvae/training.hpp"

namespace lvae {

namespace fixtures {

inline Matrix random_orthonormal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  return g.householderQr().householderQ();
}

// 2n observations +/- sqrt(n lambda_j) u_j: zero mean and sample covariance
// exactly sum_j lambda_j u_j u_j^T for a random orthonormal basis u.
inline DataMatrix exact_spectrum_data(const std::vector<double>& eigenvalues, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(eigenvalues.size());
  std::mt19937_64 rng(seed);
  const Matrix basis = random_orthonormal(n, rng);
  Matrix values(2 * n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector row = std::sqrt(static_cast<double>(n) * eigenvalues[static_cast<std::size_t>(j)]) * basis.col(j);
    values.row(2 * j) = row.transpose();
    values.row(2 * j + 1) = -row.transpose();
  }
  return DataMatrix(std::move(values));
}

// A random model with D in [0.2, 1.5], s2 in [0.3, 2] and mu near the data mean.
inline LinearVae random_linear_vae(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  LinearVae v;
  v.decoder.resize(n, k);
  v.encoder.resize(k, n);
  for (Eigen::Index i = 0; i < v.decoder.size(); ++i) v.decoder.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < v.encoder.size(); ++i) v.encoder.data()[i] = normal(rng);
  v.variances.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) v.variances(i) = 0.2 + 1.3 * uniform(rng);
  v.mean.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) v.mean(i) = 0.1 * normal(rng);
  v.noise = 0.3 + 1.7 * uniform(rng);
  return v;
}

inline DataMatrix random_data(Eigen::Index rows, Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix mix(n, n);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] = normal(rng) / std::sqrt(static_cast<double>(n));
  Matrix z(rows, n);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  Matrix x = z * mix.transpose();
  x.rowwise() += Vector::Constant(n, 0.3).transpose();
  return DataMatrix(std::move(x));
}

}  // namespace fixtures

// Central differences of -beta B + C with step 1e-5 (1 + |theta|) against a
// supplied gradient. Returns the worst ratio |fd - g| / (rtol |g| + atol);
// values <= 1 pass.
inline double gradient_check_ratio(LinearVae vae, const DataMatrix& data, const VaeGradients& g,
                                   bool learn_sigma, bool learn_mu, double beta, double rtol = 1e-5,
                                   double atol = 1e-8) {
  double worst = 0.0;
  const auto probe = [&](double& slot, double analytic) {
    const double original = slot;
    const double h = 1e-5 * (1.0 + std::abs(original));
    slot = original + h;
    const double up = weighted_objective(vae, data, beta);
    slot = original - h;
    const double down = weighted_objective(vae, data, beta);
    slot = original;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic) / (rtol * std::abs(analytic) + atol));
  };
  LinearVae& m = vae;
  for (Eigen::Index i = 0; i < m.decoder.size(); ++i) probe(m.decoder.data()[i], g.decoder.data()[i]);
  for (Eigen::Index i = 0; i < m.encoder.size(); ++i) probe(m.encoder.data()[i], g.encoder.data()[i]);
  for (Eigen::Index i = 0; i < m.variances.size(); ++i) probe(m.variances(i), g.variances(i));
  if (learn_mu) {
    for (Eigen::Index i = 0; i < m.mean.size(); ++i) probe(m.mean(i), g.mean(i));
  }
  if (learn_sigma) probe(m.noise, g.noise);
  return worst;
}

// Plain gradient ascent on the total log marginal likelihood in W with s2 and
// mu fixed; step size s2^2 / lambda_max on the per-datum gradient.
inline PpcaModel log_marginal_ascent(PpcaModel model, const DataMatrix& data, double lambda_max, int steps) {
  const double lr = model.noise * model.noise / lambda_max;
  for (int s = 0; s < steps; ++s) {
    const auto g = log_marginal_gradients(model, data);
    model.weights += lr * g.weights / data.count();
  }
  return model;
}

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::vector<std::string> failures;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 20240611;
  bool inject_gradient_fault = false;  // negate dD before the gradient suite compares it
};

namespace suites {

inline void expect(SuiteResult& r, bool ok, const std::string& id) {
  if (!ok) {
    r.passed = false;
    r.failures.push_back(id);
  }
}

inline void gradients(SuiteResult& r, const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index n = 3 + t % 6;
    const Eigen::Index k = 1 + t % 3;
    const auto data = fixtures::random_data(20 + 10 * t, n, rng);
    auto vae = fixtures::random_linear_vae(n, k, rng);
    const double beta = t % 2 == 0 ? 1.0 : 0.37;
    auto g = analytic_gradients(vae, data, true, true, beta);
    if (opt.inject_gradient_fault) g.variances = -g.variances;
    const double ratio = gradient_check_ratio(vae, data, g, true, true, beta);
    expect(r, ratio <= 1.0, "gradients/instance_" + std::to_string(t));
  }
}

inline DataMatrix recovery_dataset(std::uint64_t seed, Eigen::Index samples = 5000) {
  return synthesize(SyntheticSpec{4, 12, {8.0, 5.0, 3.0, 1.5}, 0.5, samples, seed});
}

inline void elbo_tight_at_mle(SuiteResult& r, const VerifyOptions& opt) {
  for (int t = 0; t < 5; ++t) {
    const auto data = synthesize(SyntheticSpec{3, 9, {6.0, 3.0, 1.0}, 0.4, 400, opt.seed + static_cast<std::uint64_t>(t)});
    const auto fit = fit_mle(data, 3);
    const auto vae = encoder_optimal_vae(fit.model.weights, fit.model.mean, fit.model.noise);
    const auto b = analytic_elbo(vae, data);
    const double best = log_marginal(fit.model, data);
    expect(r, std::abs(b.elbo - b.log_marginal) / data.count() < 1e-8, "elbo_tight_at_mle/tight_" + std::to_string(t));
    expect(r, std::abs(b.elbo - best) / data.count() < 1e-8, "elbo_tight_at_mle/matches_mle_" + std::to_string(t));
  }
}

inline TrainConfig recovery_config() {
  TrainConfig c;
  c.mode = GradientMode::analytic;
  c.optimizer = OptimizerKind::adam;
  c.learning_rate = 3e-3;
  c.steps = 20000;
  c.learn_sigma = true;
  c.record_every = c.steps;
  return c;
}

inline double column_error(const LinearVae& trained, const PpcaModel& mle) {
  const auto order = recover_components(trained);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < mle.latent_dim(); ++c) {
    Vector col = trained.decoder.col(order[static_cast<std::size_t>(c)].column);
    const Vector ref = mle.weights.col(c);
    if (col.dot(ref) < 0.0) col = -col;
    worst = std::max(worst, (col - ref).cwiseAbs().maxCoeff());
  }
  return worst;
}

inline void component_recovery(SuiteResult& r, const VerifyOptions& opt) {
  const auto data = recovery_dataset(opt.seed);
  const auto fit = fit_mle(data, 4);
  for (int t = 0; t < 3; ++t) {
    const auto traj = train(random_vae(data, 4, opt.seed + 100 + static_cast<std::uint64_t>(t)), data, recovery_config());
    expect(r, column_error(traj.final_model, fit.model) < 1e-2, "component_recovery/run_" + std::to_string(t));
  }
}

inline void no_spurious_maxima(SuiteResult& r, const VerifyOptions& opt) {
  const auto data = recovery_dataset(opt.seed + 1);
  const double best = log_marginal(fit_mle(data, 4).model, data);
  std::vector<double> finals(10);
  parallel_for(finals.size(), [&](std::size_t t) {
    finals[t] = train(random_vae(data, 4, opt.seed + 200 + t), data, recovery_config()).steps.back().elbo;
  });
  for (std::size_t t = 0; t < finals.size(); ++t) {
    expect(r, best - finals[t] < 1e-4 * data.count(), "no_spurious_maxima/restart_" + std::to_string(t));
  }
}

inline void stability_vs_ascent(SuiteResult& r, const VerifyOptions& opt) {
  const std::vector<double> eig{10, 9, 8, 7, 6, 5, 4, 3};
  const auto data = fixtures::exact_spectrum_data(eig, opt.seed);
  const auto spectrum = eigendecompose(data);
  const Eigen::Index dir5 = 4;
  const Eigen::Index dir7 = 6;
  struct Case {
    Eigen::Index noise_index;
    Stability expect5;
    Stability expect7;
  };
  const Case cases[] = {{3, Stability::stable, Stability::stable},
                        {5, Stability::unstable, Stability::stable},
                        {7, Stability::unstable, Stability::unstable}};
  for (const auto& c : cases) {
    const StationarySpec spec{{0, 1, 2}, spectrum.eigenvalues(c.noise_index), 5};
    const auto model = stationary_point(spectrum, spec, data.mean()).model;
    const double base = log_marginal(model, data);
    const std::string tag = "stability/sigma2=lambda_" + std::to_string(c.noise_index + 1);
    for (auto [column, dir, expected] :
         {std::tuple{Eigen::Index{3}, dir5, c.expect5}, std::tuple{Eigen::Index{4}, dir7, c.expect7}}) {
      const auto got = stability(spectrum, spec, column, dir);
      expect(r, got == expected, tag + "/classify_dir_" + std::to_string(dir + 1));
      PpcaModel perturbed = model;
      perturbed.weights.col(column) += 1e-4 * spectrum.eigenvectors.col(dir);
      // Roundoff can seed other unstable directions late in the run, so follow
      // the probed component along the whole path.
      const Vector u = spectrum.eigenvectors.col(dir);
      double peak = 0.0;
      double along = 0.0;
      for (int s = 0; s < 500; ++s) {
        perturbed = log_marginal_ascent(perturbed, data, spectrum.eigenvalues(0), 1);
        along = std::abs(u.dot(perturbed.weights.col(column)));
        peak = std::max(peak, along);
      }
      const bool escaped = peak > 1e-3 && log_marginal(perturbed, data) > base;
      const bool returned = peak <= 1e-4 && along < 1e-5;
      expect(r, expected == Stability::unstable ? escaped : returned, tag + "/ascent_dir_" + std::to_string(dir + 1));
    }
  }
}

inline void rotation(SuiteResult& r, const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto data = synthesize(SyntheticSpec{4, 10, {5.0, 3.0, 2.0, 1.0}, 0.5, 500, opt.seed});
  for (int t = 0; t < 5; ++t) {
    Matrix w(10, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    const auto traj = rotation_ascent_check(w, 0.7, data, 200);
    bool increasing = traj.size() > 1;
    double drift = 0.0;
    for (std::size_t s = 1; s < traj.size(); ++s) {
      increasing = increasing && traj[s].elbo > traj[s - 1].elbo;
      drift = std::max(drift, std::abs(traj[s].log_marginal - traj[0].log_marginal) / std::abs(traj[0].log_marginal));
    }
    expect(r, increasing, "rotation/increasing_" + std::to_string(t));
    expect(r, drift < 1e-9, "rotation/log_marginal_drift_" + std::to_string(t));
  }
}

inline void collapse(SuiteResult& r, const VerifyOptions& opt) {
  const auto data = recovery_dataset(opt.seed + 2, 2000);
  const auto spectrum = eigendecompose(data);
  const double noise = fit_mle(data, spectrum, 4).model.noise;
  for (Eigen::Index m = 0; m <= 4; ++m) {
    StationarySpec spec{{}, noise, 4};
    for (Eigen::Index j = 0; j < 4 - m; ++j) spec.retained.push_back(j);
    const auto point = stationary_point(spectrum, spec, data.mean()).model;
    const auto vae = encoder_optimal_vae(point.weights, point.mean, point.noise);
    const auto report = collapse_report(vae, data, {0.01}, 0.01);
    expect(r, report.collapsed_fraction[0] == static_cast<double>(m) / 4.0,
           "collapse/zeroed_" + std::to_string(m));
  }
}

inline void unbiasedness(SuiteResult& r, const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed + 3);
  for (int t = 0; t < 3; ++t) {
    const auto data = fixtures::random_data(50, 6, rng);
    const auto vae = fixtures::random_linear_vae(6, 3, rng);
    const double exact = analytic_elbo(vae, data).elbo;
    double sum = 0.0;
    double sum_sq = 0.0;
    constexpr int seeds = 200;
    for (int s = 0; s < seeds; ++s) {
      const double e = stochastic_elbo(vae, data, 1, opt.seed + static_cast<std::uint64_t>(1000 * t + s));
      sum += e;
      sum_sq += e * e;
    }
    const double mean = sum / seeds;
    const double se = std::sqrt((sum_sq / seeds - mean * mean) / (seeds - 1));
    expect(r, std::abs(mean - exact) <= 3.0 * se, "unbiasedness/instance_" + std::to_string(t));
  }
}

}  // namespace suites

inline std::vector<SuiteResult> run_verify_suites(const VerifyOptions& options = {}) {
  using SuiteFn = void (*)(SuiteResult&, const VerifyOptions&);
  const std::pair<const char*, SuiteFn> registry[] = {
      {"gradients", suites::gradients},   {"elbo_tight_at_mle", suites::elbo_tight_at_mle},
      {"component_recovery", suites::component_recovery}, {"no_spurious_maxima", suites::no_spurious_maxima},
      {"stability", suites::stability_vs_ascent}, {"rotation", suites::rotation},
      {"collapse", suites::collapse},     {"unbiasedness", suites::unbiasedness},
  };
  std::vector<SuiteResult> results;
  for (const auto& [name, fn] : registry) {
    SuiteResult r;
    r.name = name;
    const auto start = std::chrono::steady_clock::now();
    try {
      fn(r, options);
    } catch (const std::exception& e) {
      r.passed = false;
      r.failures.push_back(std::string(name) + "/exception: " + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace lvae
