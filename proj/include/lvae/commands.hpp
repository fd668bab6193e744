#pragma once

// Subcommands of the `lvae` executable. Each command computes everything in
// memory, then writes its outputs through one OutputSet so that a failure
// leaves no partial results behind.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lvae/collapse.hpp"
#include "lvae/config.hpp"
#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/io.hpp"
#include "lvae/landscape.hpp"
#include "lvae/linear_vae.hpp"
#include "lvae/parallel.hpp"
#include "lvae/ppca.hpp"
#include "lvae/serialization.hpp"
#include "lvae/training.hpp"
#include "lvae/verify.hpp"

namespace lvae {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_io = 2, exit_numeric = 3, exit_verify = 4 };

class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path directory) : directory_(std::move(directory)) {}

  void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }

  void flush() const {
    for (const auto& [name, contents] : files_) write_file_atomic(directory_ / name, contents);
  }

  const std::filesystem::path& directory() const noexcept { return directory_; }

 private:
  std::filesystem::path directory_;
  std::vector<std::pair<std::string, std::string>> files_;
};

inline DataMatrix load_dataset(const DataConfig& d) {
  DataMatrix data = [&] {
    if (d.source == "idx") return load_idx(d.path, d.labels, d.limit, d.seed);
    if (d.source == "csv") return data_from_csv(read_text_file(d.path));
    if (d.source == "binary") return data_from_binary(read_text_file(d.path));
    if (d.source == "spectrum") return fixtures::exact_spectrum_data(d.spectrum, d.seed);
    return synthesize(d.synthetic);
  }();
  if (d.preprocess) data = preprocess(data, d.preprocess_seed, d.alpha);
  return data;
}

inline const DataConfig& require_data(const ExperimentConfig& c) {
  if (!c.data) throw ConfigError("config.data: required by this command");
  return *c.data;
}

inline double configured_noise(const ModelConfig& m, const EigenSpectrum& spectrum) {
  if (m.noise) return *m.noise;
  const Eigen::Index j = *m.noise_eigen_index;
  if (j < 0 || j >= spectrum.size()) throw BoundsError("model.noise_eigen_index: outside the spectrum");
  return spectrum.eigenvalues(j);
}

inline StationarySpec configured_stationary(const ModelConfig& m, const EigenSpectrum& spectrum) {
  return StationarySpec{m.retained, configured_noise(m, spectrum), m.k};
}

inline LinearVae load_model_file(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (path.extension() == ".bin") return linear_vae_from_binary(bytes);
  try {
    return linear_vae_from_json(Json::parse(bytes));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline LinearVae initial_vae(const ModelConfig& m, const DataMatrix& data, const EigenSpectrum& spectrum) {
  LinearVae vae;
  if (m.init == "random") {
    vae = random_vae(data, m.k, m.init_seed, m.init_scale, m.init_noise);
  } else if (m.init == "ppca_mle") {
    const auto fit = fit_mle(data, spectrum, m.k);
    vae = encoder_optimal_vae(fit.model.weights, fit.model.mean, fit.model.noise);
  } else if (m.init == "stationary") {
    const auto point = stationary_point(spectrum, configured_stationary(m, spectrum), data.mean()).model;
    vae = encoder_optimal_vae(point.weights, point.mean, point.noise);
  } else {
    vae = load_model_file(m.path);
  }
  if (vae.ambient_dim() != data.cols()) throw ConfigError("model: dimension does not match the data");
  return vae;
}

namespace detail {

inline Json with_checkpoint_note(Json j, const TrainingError& e) {
  j["failed_at_step"] = e.iterations();
  j["error"] = e.what();
  return j;
}

// Runs a training call; on divergence the last finite model is written before
// the error propagates.
template <class Fn>
auto checkpointed(const OutputSet& out, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingError& e) {
    OutputSet checkpoint(out.directory());
    checkpoint.add("checkpoint_last_finite.json", dump(with_checkpoint_note(to_json(e.last_finite()), e)));
    checkpoint.flush();
    throw;
  }
}

}  // namespace detail

// Closed-form pPCA fit and, with a `sweep` section, the likelihood curve over k.
inline int cmd_fit_ppca(const ExperimentConfig& c, std::ostream& log) {
  const auto data = load_dataset(require_data(c));
  const auto spectrum = eigendecompose(data);
  const auto fit = fit_mle(data, spectrum, c.model.k);
  const double lm = log_marginal(fit.model, data);
  OutputSet out(c.outputs.directory);

  Json summary{{"k", c.model.k},
               {"n", data.cols()},
               {"count", data.rows()},
               {"sigma2_mle", fit.model.noise},
               {"log_marginal", lm},
               {"log_marginal_per_datum", lm / data.count()},
               {"zero_column_warning", fit.zero_column_warning},
               {"eigenvalues", vector_to_json(spectrum.eigenvalues)}};

  if (c.sweep) {
    const double reference_noise = fit_mle(data, spectrum, c.sweep->reference_k).model.noise;
    const auto& ks = c.sweep->k_values;
    std::vector<std::pair<double, double>> rows(ks.size());
    parallel_for(ks.size(), [&](std::size_t i) {
      PpcaModel model = fit_mle(data, spectrum, ks[i]).model;
      const double at_mle = log_marginal(model, data);
      model.noise = reference_noise;
      rows[i] = {at_mle, log_marginal(model, data)};
    });
    std::string csv = "k,log_marginal_at_mle,log_marginal_at_fixed_sigma\n";
    Json curve = Json::array();
    for (std::size_t i = 0; i < ks.size(); ++i) {
      csv += std::to_string(ks[i]) + ',' + format_double(rows[i].first) + ',' + format_double(rows[i].second) + '\n';
      curve.push_back(Json{{"k", ks[i]}, {"log_marginal_at_mle", rows[i].first},
                           {"log_marginal_at_fixed_sigma", rows[i].second}});
    }
    summary["sweep"] = Json{{"reference_k", c.sweep->reference_k}, {"reference_sigma2", reference_noise},
                            {"curve", std::move(curve)}};
    if (c.outputs.csv) out.add("k_sweep.csv", std::move(csv));
  }

  if (c.outputs.json) out.add("ppca_model.json", dump(to_json(fit.model)));
  out.add("summary.json", dump(summary));
  out.flush();
  log << "sigma2_mle " << format_double(fit.model.noise) << "\nlog_marginal " << format_double(lm) << '\n';
  if (fit.zero_column_warning) log << "warning: some retained eigenvalues do not exceed sigma2; zero columns\n";
  return exit_ok;
}

inline int cmd_train(const ExperimentConfig& c, std::ostream& log) {
  const auto data = load_dataset(require_data(c));
  const auto spectrum = eigendecompose(data);
  const auto init = initial_vae(c.model, data, spectrum);
  OutputSet out(c.outputs.directory);
  const auto trajectory = detail::checkpointed(out, [&] { return train(init, data, c.train); });
  const auto initial = analytic_elbo(init, data);
  const auto final_elbo = analytic_elbo(trajectory.final_model, data);
  const auto report = collapse_report(trajectory.final_model, data, c.collapse.epsilons, c.collapse.delta);

  if (c.outputs.csv) {
    out.add("trajectory.csv", trajectory_to_csv(trajectory));
    out.add("collapse.csv", collapse_to_csv(report));
  }
  if (c.outputs.json) {
    out.add("trajectory.json", dump(to_json(trajectory)));
    out.add("final_model.json", dump(to_json(trajectory.final_model)));
    out.add("collapse.json", dump(to_json(report)));
  }
  if (c.outputs.binary) out.add("final_model.bin", linear_vae_to_binary(trajectory.final_model));
  out.add("elbo.json", dump(Json{{"initial", to_json(initial)}, {"final", to_json(final_elbo)}}));
  out.flush();
  log << "final elbo " << format_double(final_elbo.elbo) << "\nfinal log_marginal "
      << format_double(final_elbo.log_marginal) << '\n';
  return exit_ok;
}

namespace detail {

// Index of the eigenvalue equal to s2 (relative tolerance 1e-12), if any.
inline Json matching_eigen_index(const EigenSpectrum& spectrum, double noise) {
  for (Eigen::Index j = 0; j < spectrum.size(); ++j) {
    if (std::abs(spectrum.eigenvalues(j) - noise) <= 1e-12 * noise) return j;
  }
  return nullptr;
}

inline Json axis_metadata(const SliceAxis& axis, const EigenSpectrum& spectrum, double noise,
                          const std::optional<StationarySpec>& spec) {
  const double lambda = spectrum.eigenvalues(axis.direction);
  Json j = to_json(axis);
  j["eigenvalue"] = lambda;
  j["relation_to_sigma2"] = lambda > noise ? "above" : (lambda < noise ? "below" : "equal");
  j["stability"] = spec ? Json(to_string(stability(spectrum, *spec, axis.column, axis.direction))) : Json(nullptr);
  return j;
}

}  // namespace detail

inline int cmd_landscape(const ExperimentConfig& c, std::ostream& log) {
  if (!c.landscape) throw ConfigError("config.landscape: required by this command");
  const auto& l = *c.landscape;
  const auto data = load_dataset(require_data(c));
  const auto spectrum = eigendecompose(data);
  std::optional<StationarySpec> spec;
  PpcaModel model;
  if (c.model.init == "stationary") {
    spec = configured_stationary(c.model, spectrum);
    model = stationary_point(spectrum, *spec, data.mean()).model;
  } else {
    model = initial_vae(c.model, data, spectrum).ppca();
  }
  const auto slice = landscape_slice(model, data, spectrum, l.column1, l.direction1, l.column2, l.direction2,
                                     l.extent, l.resolution, l.objective);
  Eigen::Index a = 0;
  Eigen::Index b = 0;
  slice.grid.maxCoeff(&a, &b);

  Json j = to_json(slice);
  j["metadata"] = Json{{"sigma2", model.noise},
                       {"sigma2_eigen_index", detail::matching_eigen_index(spectrum, model.noise)},
                       {"eigenvalues", vector_to_json(spectrum.eigenvalues)},
                       {"axis1", detail::axis_metadata(slice.axis1, spectrum, model.noise, spec)},
                       {"axis2", detail::axis_metadata(slice.axis2, spectrum, model.noise, spec)},
                       {"argmax", Json{{"index1", a}, {"index2", b}, {"eps1", slice.offset(slice.axis1, a)},
                                       {"eps2", slice.offset(slice.axis2, b)}}}};
  OutputSet out(c.outputs.directory);
  if (c.outputs.csv) out.add("landscape.csv", landscape_to_csv(slice));
  out.add("landscape.json", dump(j));
  out.flush();
  log << "argmax cell (" << a << ", " << b << ") of " << slice.resolution() << " x " << slice.resolution() << '\n';
  return exit_ok;
}

inline int cmd_collapse(const ExperimentConfig& c, std::ostream& log) {
  const auto data = load_dataset(require_data(c));
  const auto spectrum = eigendecompose(data);
  const auto vae = initial_vae(c.model, data, spectrum);
  const auto report = collapse_report(vae, data, c.collapse.epsilons, c.collapse.delta);
  OutputSet out(c.outputs.directory);
  if (c.outputs.csv) out.add("collapse.csv", collapse_to_csv(report));
  out.add("collapse.json", dump(to_json(report)));
  if (c.probe) {
    const auto& p = *c.probe;
    const auto probe = detail::checkpointed(out, [&] {
      return collapse_then_resume_probe(vae, data, p.warmup, p.steps, p.learning_rate, p.sigma_fixed,
                                        c.collapse.epsilons, c.collapse.delta, p.record_every);
    });
    if (c.outputs.csv) out.add("probe_trajectory.csv", trajectory_to_csv(probe.trajectory));
    out.add("probe.json", dump(Json{{"warmup", p.warmup},
                                    {"steps", p.steps},
                                    {"sigma_fixed", p.sigma_fixed},
                                    {"at_warmup_end", to_json(probe.at_warmup_end)},
                                    {"at_end", to_json(probe.at_end)}}));
    log << "probe collapsed fraction at warmup end / end:";
    for (std::size_t i = 0; i < c.collapse.epsilons.size(); ++i) {
      log << ' ' << format_double(probe.at_warmup_end.collapsed_fraction[i]) << '/'
          << format_double(probe.at_end.collapsed_fraction[i]);
    }
    log << '\n';
  }
  out.flush();
  for (std::size_t i = 0; i < report.epsilons.size(); ++i) {
    log << "eps " << format_double(report.epsilons[i]) << " collapsed " << format_double(report.collapsed_fraction[i])
        << '\n';
  }
  return exit_ok;
}

inline int cmd_verify(const ExperimentConfig& c, std::ostream& log) {
  const auto results = run_verify_suites(VerifyOptions{c.verify.seed, c.verify.inject_gradient_fault});
  bool all = true;
  Json suites = Json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    suites.push_back(Json{{"name", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"failures", r.failures}});
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %-4s %8.3fs", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds);
    log << line << '\n';
    for (const auto& f : r.failures) log << "    " << f << '\n';
  }
  OutputSet out(c.outputs.directory);
  out.add("verify.json", dump(Json{{"passed", all}, {"suites", std::move(suites)}}));
  out.flush();
  return all ? exit_ok : exit_verify;
}

// Paired analytic and stochastic runs from identical inits and settings.
inline int cmd_compare(const ExperimentConfig& c, std::ostream& log) {
  const auto data = load_dataset(require_data(c));
  const auto spectrum = eigendecompose(data);
  const auto pairs = static_cast<std::size_t>(c.compare.pairs);
  std::vector<std::pair<double, double>> finals(pairs);
  OutputSet out(c.outputs.directory);
  detail::checkpointed(out, [&] {
    parallel_for(pairs, [&](std::size_t p) {
      ModelConfig m = c.model;
      m.init_seed += p;
      const auto init = initial_vae(m, data, spectrum);
      TrainConfig analytic = c.train;
      analytic.seed += p;
      analytic.mode = GradientMode::analytic;
      TrainConfig stochastic = analytic;
      stochastic.mode = GradientMode::stochastic;
      finals[p] = {train(init, data, analytic).steps.back().elbo, train(init, data, stochastic).steps.back().elbo};
    });
    return 0;
  });
  std::string csv = "pair,analytic_elbo,stochastic_elbo,difference\n";
  Json rows = Json::array();
  std::size_t wins = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto [a, s] = finals[p];
    wins += a >= s ? 1 : 0;
    csv += std::to_string(p) + ',' + format_double(a) + ',' + format_double(s) + ',' + format_double(a - s) + '\n';
    rows.push_back(Json{{"pair", p}, {"analytic_elbo", a}, {"stochastic_elbo", s}});
  }
  if (c.outputs.csv) out.add("compare.csv", std::move(csv));
  out.add("compare.json", dump(Json{{"pairs", pairs}, {"analytic_at_least_stochastic", wins}, {"runs", rows}}));
  out.flush();
  log << "analytic >= stochastic in " << wins << " of " << pairs << " pairs\n";
  return exit_ok;
}

// Maps library errors to exit codes and reports them on `err`.
template <class Fn>
int run_command(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const BoundsError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return exit_io;
  } catch (const FormatError& e) {
    err << "i/o error: " << e.what() << '\n';
    return exit_io;
  } catch (const LengthError& e) {
    err << "i/o error: " << e.what() << '\n';
    return exit_io;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return exit_numeric;
  }
}

}  // namespace lvae
