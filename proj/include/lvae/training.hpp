#pragma once

// Full-batch training of the linear VAE. The optimized objective is
// -beta * B + C; beta follows either a constant or a linear 0 -> 1 warmup.
// Optimizers ascend the per-datum objective (dataset total / N). D and s2 are
// updated in log space so they stay positive.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lvae/collapse.hpp"
#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/linear_vae.hpp"

namespace lvae {

enum class GradientMode { analytic, stochastic };
enum class OptimizerKind { gradient_ascent, adam };

struct BetaSchedule {
  enum class Kind { constant, linear } kind = Kind::constant;
  double value = 1.0;        // constant schedule
  Eigen::Index warmup = 0;   // linear schedule: beta = min(1, step / warmup)

  static BetaSchedule constant(double beta = 1.0) { return {Kind::constant, beta, 0}; }
  static BetaSchedule linear(Eigen::Index warmup) { return {Kind::linear, 1.0, warmup}; }

  double at(Eigen::Index step) const {
    if (kind == Kind::constant) return value;
    if (warmup <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
  }
};

struct TrainConfig {
  GradientMode mode = GradientMode::analytic;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-2;
  Eigen::Index steps = 1000;
  Eigen::Index samples_per_datum = 1;
  bool learn_sigma = true;
  bool learn_mu = false;
  BetaSchedule beta_schedule;
  std::uint64_t seed = 0;
  Eigen::Index record_every = 100;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ParameterError("TrainConfig: learning_rate must be > 0");
    if (steps < 1) throw ParameterError("TrainConfig: steps must be >= 1");
    if (samples_per_datum < 1) throw ParameterError("TrainConfig: samples_per_datum must be >= 1");
    if (record_every < 1) throw ParameterError("TrainConfig: record_every must be >= 1");
    if (beta_schedule.kind == BetaSchedule::Kind::linear &&
        (beta_schedule.warmup < 0 || beta_schedule.warmup > steps)) {
      throw ParameterError("TrainConfig: warmup must lie in [0, steps]");
    }
    if (beta_schedule.kind == BetaSchedule::Kind::constant && !(beta_schedule.value >= 0.0)) {
      throw ParameterError("TrainConfig: beta must be >= 0");
    }
  }
};

struct TrajectoryPoint {
  Eigen::Index step = 0;
  double elbo = 0.0;
  double log_marginal = 0.0;
  double term_a = 0.0;
  double noise = 0.0;
  double beta = 1.0;
};

struct TrainTrajectory {
  std::vector<TrajectoryPoint> steps;
  LinearVae final_model;
};

// Raised when the objective becomes non-finite or exceeds 1e12 in magnitude.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, LinearVae last_finite, Eigen::Index step)
      : NumericError(what, static_cast<std::size_t>(step)), last_finite_(std::move(last_finite)) {}

  const LinearVae& last_finite() const noexcept { return last_finite_; }

 private:
  LinearVae last_finite_;
};

// ---- flat parameter layout: [W (col-major), V (col-major), log D, mu, log s2]

inline Vector pack_parameters(const LinearVae& vae) {
  const Eigen::Index nw = vae.decoder.size();
  const Eigen::Index nv = vae.encoder.size();
  const Eigen::Index k = vae.latent_dim();
  const Eigen::Index n = vae.ambient_dim();
  Vector p(nw + nv + k + n + 1);
  p.segment(0, nw) = vae.decoder.reshaped();
  p.segment(nw, nv) = vae.encoder.reshaped();
  p.segment(nw + nv, k) = vae.variances.array().log().matrix();
  p.segment(nw + nv + k, n) = vae.mean;
  p(p.size() - 1) = std::log(vae.noise);
  return p;
}

inline LinearVae unpack_parameters(const Vector& p, Eigen::Index n, Eigen::Index k) {
  LinearVae vae;
  vae.decoder = p.segment(0, n * k).reshaped(n, k);
  vae.encoder = p.segment(n * k, k * n).reshaped(k, n);
  vae.variances = p.segment(2 * n * k, k).array().exp().matrix();
  vae.mean = p.segment(2 * n * k + k, n);
  vae.noise = std::exp(p(p.size() - 1));
  return vae;
}

// Chain rule into the flat layout (d/dlogD = D * d/dD, d/dlog s2 = s2 * d/ds2).
inline Vector pack_gradients(const LinearVae& vae, const VaeGradients& g) {
  const Eigen::Index nw = vae.decoder.size();
  const Eigen::Index nv = vae.encoder.size();
  const Eigen::Index k = vae.latent_dim();
  const Eigen::Index n = vae.ambient_dim();
  Vector p(nw + nv + k + n + 1);
  p.segment(0, nw) = g.decoder.reshaped();
  p.segment(nw, nv) = g.encoder.reshaped();
  p.segment(nw + nv, k) = (g.variances.array() * vae.variances.array()).matrix();
  p.segment(nw + nv + k, n) = g.mean;
  p(p.size() - 1) = g.noise * vae.noise;
  return p;
}

struct AdamState {
  Vector first;
  Vector second;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam, ascent direction: params += lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(AdamState& state, Eigen::Ref<Vector> params, const Vector& grad, double lr) {
  if (state.first.size() != params.size()) {
    state.first = Vector::Zero(params.size());
    state.second = Vector::Zero(params.size());
    state.t = 0;
  }
  if (grad.size() != params.size()) throw ParameterError("adam_step: gradient has wrong length");
  ++state.t;
  state.first = state.beta1 * state.first + (1.0 - state.beta1) * grad;
  state.second = state.beta2 * state.second + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  params.array() += lr * (state.first.array() / c1) / ((state.second.array() / c2).sqrt() + state.epsilon);
}

// Adam update of a LinearVae from its gradients (log-space D and s2).
inline void adam_step(AdamState& state, LinearVae& vae, const VaeGradients& grads, double lr) {
  Vector params = pack_parameters(vae);
  adam_step(state, params, pack_gradients(vae, grads), lr);
  vae = unpack_parameters(params, vae.ambient_dim(), vae.latent_dim());
}

// Random initialization: W, V ~ N(0, scale^2), D = 1, mu = data mean.
inline LinearVae random_vae(const DataMatrix& data, Eigen::Index k, std::uint64_t seed, double scale = 0.1,
                            double noise = 1.0) {
  const Eigen::Index n = data.cols();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  LinearVae vae;
  vae.decoder.resize(n, k);
  vae.encoder.resize(k, n);
  for (Eigen::Index i = 0; i < vae.decoder.size(); ++i) vae.decoder.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < vae.encoder.size(); ++i) vae.encoder.data()[i] = normal(rng);
  vae.variances = Vector::Ones(k);
  vae.mean = data.mean();
  vae.noise = noise;
  return vae;
}

// Owns a mutable model and optimizer state; one call to step() is one
// full-batch update.
class Trainer {
 public:
  Trainer(LinearVae init, const DataMatrix& data, TrainConfig config)
      : data_(data), config_(std::move(config)), model_(std::move(init)), rng_(config_.seed) {
    config_.validate();
    model_.validate();
    if (model_.ambient_dim() != data_.cols()) throw ParameterError("train: data dimension mismatch");
    params_ = pack_parameters(model_);
  }

  Eigen::Index steps_done() const noexcept { return step_; }
  const LinearVae& model() const noexcept { return model_; }
  const TrainConfig& config() const noexcept { return config_; }
  double current_beta() const { return config_.beta_schedule.at(step_); }

  void set_schedule(BetaSchedule schedule) { config_.beta_schedule = schedule; }

  TrajectoryPoint record() const {
    const auto b = analytic_elbo(model_, data_);
    return TrajectoryPoint{step_, b.elbo, b.log_marginal, b.term_a, model_.noise, current_beta()};
  }

  void step() {
    const double beta = current_beta();
    VaeGradients g;
    if (config_.mode == GradientMode::analytic) {
      g = analytic_gradients(model_, data_, config_.learn_sigma, config_.learn_mu, beta);
    } else {
      const auto draws = detail::draw_noise(rng_, config_.samples_per_datum, data_.rows(), model_.latent_dim());
      g = detail::stochastic_estimate(model_, data_, draws, beta, config_.learn_sigma, config_.learn_mu, true)
              .gradients;
    }
    Vector grad = pack_gradients(model_, g) / data_.count();
    if (!grad.allFinite()) throw TrainingError("train: non-finite gradient", model_, step_);

    Vector next = params_;
    if (config_.optimizer == OptimizerKind::adam) {
      adam_step(adam_, next, grad, config_.learning_rate);
    } else {
      next += config_.learning_rate * grad;
    }
    LinearVae candidate = unpack_parameters(next, model_.ambient_dim(), model_.latent_dim());
    const double objective = finite_objective(candidate, beta);
    if (!std::isfinite(objective) || std::abs(objective) > 1e12) {
      throw TrainingError("train: objective diverged", model_, step_);
    }
    params_ = std::move(next);
    model_ = std::move(candidate);
    ++step_;
  }

 private:
  double finite_objective(const LinearVae& vae, double beta) const {
    if (!vae.decoder.allFinite() || !vae.encoder.allFinite() || !vae.mean.allFinite() ||
        !vae.variances.allFinite() || !(vae.variances.array() > 0.0).all() || !(vae.noise > 0.0) ||
        !std::isfinite(vae.noise)) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return weighted_objective(vae, data_, beta);
  }

  const DataMatrix& data_;
  TrainConfig config_;
  LinearVae model_;
  Vector params_;
  AdamState adam_;
  std::mt19937_64 rng_;
  Eigen::Index step_ = 0;
};

inline TrainTrajectory train(const LinearVae& init, const DataMatrix& data, const TrainConfig& config) {
  Trainer trainer(init, data, config);
  TrainTrajectory out;
  out.steps.push_back(trainer.record());
  while (trainer.steps_done() < config.steps) {
    trainer.step();
    if (trainer.steps_done() % config.record_every == 0 || trainer.steps_done() == config.steps) {
      out.steps.push_back(trainer.record());
    }
  }
  out.final_model = trainer.model();
  return out;
}

struct CollapseProbe {
  TrainTrajectory trajectory;
  CollapseReport at_warmup_end;
  CollapseReport at_end;
};

// Linear KL annealing over `warmup` steps with s2 fixed at `sigma_fixed`, then
// plain ELBO ascent until `steps`. Collapse is measured at both boundaries.
inline CollapseProbe collapse_then_resume_probe(LinearVae init, const DataMatrix& data, Eigen::Index warmup,
                                                Eigen::Index steps, double lr, double sigma_fixed,
                                                const std::vector<double>& epsilons = default_epsilons(),
                                                double delta = kDefaultDelta, Eigen::Index record_every = 100) {
  if (warmup < 0 || warmup >= steps) throw ParameterError("collapse_then_resume_probe: need 0 <= warmup < steps");
  if (!(sigma_fixed > 0.0)) throw ParameterError("collapse_then_resume_probe: sigma_fixed must be > 0");
  init.noise = sigma_fixed;
  TrainConfig config;
  config.mode = GradientMode::analytic;
  config.optimizer = OptimizerKind::adam;
  config.learning_rate = lr;
  config.steps = steps;
  config.learn_sigma = false;
  config.learn_mu = false;
  config.beta_schedule = BetaSchedule::linear(warmup);
  config.record_every = record_every;

  Trainer trainer(std::move(init), data, config);
  CollapseProbe probe;
  probe.trajectory.steps.push_back(trainer.record());
  auto run_until = [&](Eigen::Index target) {
    while (trainer.steps_done() < target) {
      trainer.step();
      if (trainer.steps_done() % record_every == 0 || trainer.steps_done() == steps) {
        probe.trajectory.steps.push_back(trainer.record());
      }
    }
  };
  run_until(warmup);
  probe.at_warmup_end = collapse_report(trainer.model(), data, epsilons, delta);
  run_until(steps);
  probe.at_end = collapse_report(trainer.model(), data, epsilons, delta);
  probe.trajectory.final_model = trainer.model();
  return probe;
}

}  // namespace lvae
