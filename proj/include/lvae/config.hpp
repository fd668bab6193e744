#pragma once

// Experiment configuration: one JSON document describing the data, the model
// initialization and the per-command settings. Every object is checked
// against its allowed keys before any computation starts.

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "lvae/collapse.hpp"
#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/io.hpp"
#include "lvae/landscape.hpp"
#include "lvae/serialization.hpp"
#include "lvae/training.hpp"
#include "lvae/verify.hpp"

namespace lvae {

namespace detail {

// A JSON object with a fixed key set. Lookups report the dotted path on error.
class ConfigObject {
 public:
  ConfigObject(const Json& j, std::string path, std::initializer_list<const char*> allowed)
      : json_(j), path_(std::move(path)) {
    if (!json_.is_object()) throw ConfigError(path_ + ": expected an object");
    for (const auto& item : json_.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || item.key() == a;
      if (!known) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
    }
  }

  bool has(const char* key) const { return json_.contains(key); }

  template <class T>
  T get(const char* key, T fallback) const {
    return has(key) ? require<T>(key) : fallback;
  }

  template <class T>
  T require(const char* key) const {
    if (!has(key)) throw ConfigError(where(key) + ": required");
    try {
      return json_.at(key).template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  ConfigObject child(const char* key, std::initializer_list<const char*> allowed) const {
    return ConfigObject(json_.at(key), where(key), allowed);
  }

  std::string where(const char* key) const { return path_ + "." + key; }

 private:
  const Json& json_;
  std::string path_;
};

inline GradientMode parse_mode(const std::string& s, const std::string& where) {
  if (s == "analytic") return GradientMode::analytic;
  if (s == "stochastic") return GradientMode::stochastic;
  throw ConfigError(where + ": expected 'analytic' or 'stochastic'");
}

inline OptimizerKind parse_optimizer(const std::string& s, const std::string& where) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "gradient_ascent") return OptimizerKind::gradient_ascent;
  throw ConfigError(where + ": expected 'adam' or 'gradient_ascent'");
}

}  // namespace detail

struct DataConfig {
  std::string source;  // idx | synthetic | csv | binary | spectrum
  std::filesystem::path path;
  std::optional<std::filesystem::path> labels;
  std::optional<std::size_t> limit;
  std::uint64_t seed = 0;  // idx subsampling, or the basis of a "spectrum" dataset
  SyntheticSpec synthetic;
  std::vector<double> spectrum;
  bool preprocess = false;
  double alpha = 1e-6;
  std::uint64_t preprocess_seed = 0;
};

struct ModelConfig {
  Eigen::Index k = 1;
  std::string init = "random";  // random | ppca_mle | stationary | file
  std::uint64_t init_seed = 0;
  double init_scale = 0.1;
  double init_noise = 1.0;
  std::vector<Eigen::Index> retained;
  std::optional<double> noise;
  std::optional<Eigen::Index> noise_eigen_index;
  std::filesystem::path path;
};

struct LandscapeConfig {
  Eigen::Index column1 = 0;
  Eigen::Index direction1 = 0;
  Eigen::Index column2 = 1;
  Eigen::Index direction2 = 1;
  double extent = 1.0;
  Eigen::Index resolution = kDefaultResolution;
  LandscapeObjective objective = LandscapeObjective::log_marginal;
};

struct SweepConfig {
  std::vector<Eigen::Index> k_values;
  Eigen::Index reference_k = 1;
};

struct CollapseConfig {
  std::vector<double> epsilons = default_epsilons();
  double delta = kDefaultDelta;
};

struct ProbeConfig {
  Eigen::Index warmup = 0;
  Eigen::Index steps = 1;
  double learning_rate = 1e-2;
  double sigma_fixed = 1.0;
  Eigen::Index record_every = 100;
};

struct CompareConfig {
  Eigen::Index pairs = 20;
};

struct VerifyConfig {
  std::uint64_t seed = VerifyOptions{}.seed;
  bool inject_gradient_fault = false;
};

struct OutputConfig {
  std::filesystem::path directory = "out";
  bool csv = true;
  bool json = true;
  bool binary = false;
};

struct ExperimentConfig {
  std::optional<DataConfig> data;
  ModelConfig model;
  TrainConfig train;
  std::optional<LandscapeConfig> landscape;
  std::optional<SweepConfig> sweep;
  CollapseConfig collapse;
  std::optional<ProbeConfig> probe;
  CompareConfig compare;
  VerifyConfig verify;
  OutputConfig outputs;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline DataConfig parse_data(const ConfigObject& o, const std::filesystem::path& base) {
  DataConfig d;
  d.source = o.require<std::string>("source");
  if (d.source == "idx" || d.source == "csv" || d.source == "binary") {
    d.path = resolve(base, o.require<std::string>("path"));
  } else if (d.source == "synthetic") {
    const auto s = o.child("synthetic", {"latent_dim", "ambient_dim", "eigenvalues", "noise", "sample_count", "seed"});
    d.synthetic.latent_dim = s.require<Eigen::Index>("latent_dim");
    d.synthetic.ambient_dim = s.require<Eigen::Index>("ambient_dim");
    d.synthetic.eigenvalues = s.require<std::vector<double>>("eigenvalues");
    d.synthetic.noise = s.require<double>("noise");
    d.synthetic.sample_count = s.require<Eigen::Index>("sample_count");
    d.synthetic.seed = s.get<std::uint64_t>("seed", 0);
    try {
      d.synthetic.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(o.where("synthetic") + ": " + e.what());
    }
  } else if (d.source == "spectrum") {
    d.spectrum = o.require<std::vector<double>>("eigenvalues");
    if (d.spectrum.empty()) throw ConfigError(o.where("eigenvalues") + ": must be nonempty");
    for (double v : d.spectrum) {
      if (!(v >= 0.0)) throw ConfigError(o.where("eigenvalues") + ": must be >= 0");
    }
  } else {
    throw ConfigError(o.where("source") + ": expected idx, synthetic, csv, binary or spectrum");
  }
  if (o.has("labels")) d.labels = resolve(base, o.require<std::string>("labels"));
  if (o.has("limit")) d.limit = o.require<std::size_t>("limit");
  d.seed = o.get<std::uint64_t>("seed", 0);
  if (o.has("preprocess")) {
    const auto p = o.child("preprocess", {"enabled", "alpha", "seed"});
    d.preprocess = p.get<bool>("enabled", true);
    d.alpha = p.get<double>("alpha", 1e-6);
    d.preprocess_seed = p.get<std::uint64_t>("seed", 0);
    if (!(d.alpha > 0.0 && d.alpha < 0.5)) throw ConfigError(p.where("alpha") + ": must lie in (0, 0.5)");
  }
  return d;
}

inline ModelConfig parse_model(const ConfigObject& o, const std::filesystem::path& base) {
  ModelConfig m;
  m.k = o.get<Eigen::Index>("k", 1);
  if (m.k < 1) throw ConfigError(o.where("k") + ": must be >= 1");
  m.init = o.get<std::string>("init", "random");
  if (m.init != "random" && m.init != "ppca_mle" && m.init != "stationary" && m.init != "file") {
    throw ConfigError(o.where("init") + ": expected random, ppca_mle, stationary or file");
  }
  m.init_seed = o.get<std::uint64_t>("init_seed", 0);
  m.init_scale = o.get<double>("init_scale", 0.1);
  m.init_noise = o.get<double>("init_noise", 1.0);
  if (!(m.init_noise > 0.0)) throw ConfigError(o.where("init_noise") + ": must be > 0");
  m.retained = o.get<std::vector<Eigen::Index>>("retained", {});
  if (o.has("noise")) m.noise = o.require<double>("noise");
  if (o.has("noise_eigen_index")) m.noise_eigen_index = o.require<Eigen::Index>("noise_eigen_index");
  if (m.noise && m.noise_eigen_index) throw ConfigError(o.where("noise") + ": give noise or noise_eigen_index, not both");
  if (m.init == "stationary" && !m.noise && !m.noise_eigen_index) {
    throw ConfigError(o.where("noise") + ": stationary init needs noise or noise_eigen_index");
  }
  if (m.init == "file") m.path = resolve(base, o.require<std::string>("path"));
  return m;
}

inline TrainConfig parse_train(const ConfigObject& o) {
  TrainConfig t;
  t.mode = parse_mode(o.get<std::string>("mode", "analytic"), o.where("mode"));
  t.optimizer = parse_optimizer(o.get<std::string>("optimizer", "adam"), o.where("optimizer"));
  t.learning_rate = o.get<double>("learning_rate", t.learning_rate);
  t.steps = o.get<Eigen::Index>("steps", t.steps);
  t.samples_per_datum = o.get<Eigen::Index>("samples_per_datum", t.samples_per_datum);
  t.learn_sigma = o.get<bool>("learn_sigma", t.learn_sigma);
  t.learn_mu = o.get<bool>("learn_mu", t.learn_mu);
  t.seed = o.get<std::uint64_t>("seed", t.seed);
  t.record_every = o.get<Eigen::Index>("record_every", t.record_every);
  const auto schedule = o.get<std::string>("beta_schedule", "constant");
  if (schedule == "constant") {
    t.beta_schedule = BetaSchedule::constant(o.get<double>("beta", 1.0));
  } else if (schedule == "linear") {
    t.beta_schedule = BetaSchedule::linear(o.require<Eigen::Index>("warmup"));
  } else {
    throw ConfigError(o.where("beta_schedule") + ": expected 'constant' or 'linear'");
  }
  try {
    t.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return t;
}

inline LandscapeConfig parse_landscape(const ConfigObject& o) {
  LandscapeConfig l;
  const auto axes = o.require<std::vector<Json>>("axes");
  if (axes.size() != 2) throw ConfigError(o.where("axes") + ": expected two axes");
  for (std::size_t i = 0; i < 2; ++i) {
    const ConfigObject axis(axes[i], o.where("axes") + "[" + std::to_string(i) + "]", {"column", "direction"});
    (i == 0 ? l.column1 : l.column2) = axis.require<Eigen::Index>("column");
    (i == 0 ? l.direction1 : l.direction2) = axis.require<Eigen::Index>("direction");
  }
  l.extent = o.get<double>("extent", l.extent);
  l.resolution = o.get<Eigen::Index>("resolution", l.resolution);
  const auto objective = o.get<std::string>("objective", "log_marginal");
  if (objective == "log_marginal") {
    l.objective = LandscapeObjective::log_marginal;
  } else if (objective == "elbo") {
    l.objective = LandscapeObjective::elbo;
  } else {
    throw ConfigError(o.where("objective") + ": expected 'log_marginal' or 'elbo'");
  }
  if (!(l.extent >= 0.0)) throw ConfigError(o.where("extent") + ": must be >= 0");
  if (l.resolution < 3) throw ConfigError(o.where("resolution") + ": must be >= 3");
  return l;
}

}  // namespace detail

// `base` anchors relative paths; normally the directory holding the config file.
inline ExperimentConfig parse_config(const Json& j, const std::filesystem::path& base) {
  const detail::ConfigObject root(j, "config",
                                  {"data", "model", "train", "landscape", "sweep", "collapse", "probe", "compare",
                                   "verify", "outputs"});
  ExperimentConfig c;
  if (root.has("data")) {
    c.data = detail::parse_data(
        root.child("data", {"source", "path", "labels", "limit", "seed", "synthetic", "eigenvalues", "preprocess"}),
        base);
  }
  if (root.has("model")) {
    c.model = detail::parse_model(root.child("model", {"k", "init", "init_seed", "init_scale", "init_noise", "retained",
                                                       "noise", "noise_eigen_index", "path"}),
                                  base);
  }
  if (root.has("train")) {
    c.train = detail::parse_train(root.child("train", {"mode", "optimizer", "learning_rate", "steps",
                                                       "samples_per_datum", "learn_sigma", "learn_mu", "seed",
                                                       "record_every", "beta_schedule", "beta", "warmup"}));
  }
  if (root.has("landscape")) {
    c.landscape = detail::parse_landscape(root.child("landscape", {"axes", "extent", "resolution", "objective"}));
  }
  if (root.has("sweep")) {
    const auto s = root.child("sweep", {"k_values", "reference_k"});
    SweepConfig sweep{s.require<std::vector<Eigen::Index>>("k_values"), s.require<Eigen::Index>("reference_k")};
    if (sweep.k_values.empty()) throw ConfigError(s.where("k_values") + ": must be nonempty");
    for (auto k : sweep.k_values) {
      if (k < 1) throw ConfigError(s.where("k_values") + ": entries must be >= 1");
    }
    if (sweep.reference_k < 1) throw ConfigError(s.where("reference_k") + ": must be >= 1");
    c.sweep = sweep;
  }
  if (root.has("collapse")) {
    const auto o = root.child("collapse", {"epsilons", "delta"});
    c.collapse.epsilons = o.get<std::vector<double>>("epsilons", default_epsilons());
    c.collapse.delta = o.get<double>("delta", kDefaultDelta);
    if (c.collapse.epsilons.empty()) throw ConfigError(o.where("epsilons") + ": must be nonempty");
    for (double e : c.collapse.epsilons) {
      if (!(e > 0.0)) throw ConfigError(o.where("epsilons") + ": entries must be > 0");
    }
    if (!(c.collapse.delta > 0.0 && c.collapse.delta < 1.0)) throw ConfigError(o.where("delta") + ": must lie in (0, 1)");
  }
  if (root.has("probe")) {
    const auto o = root.child("probe", {"warmup", "steps", "learning_rate", "sigma_fixed", "record_every"});
    ProbeConfig p;
    p.warmup = o.require<Eigen::Index>("warmup");
    p.steps = o.require<Eigen::Index>("steps");
    p.learning_rate = o.get<double>("learning_rate", p.learning_rate);
    p.sigma_fixed = o.require<double>("sigma_fixed");
    p.record_every = o.get<Eigen::Index>("record_every", p.record_every);
    if (p.warmup < 0 || p.warmup >= p.steps) throw ConfigError(o.where("warmup") + ": need 0 <= warmup < steps");
    if (!(p.sigma_fixed > 0.0)) throw ConfigError(o.where("sigma_fixed") + ": must be > 0");
    if (!(p.learning_rate > 0.0)) throw ConfigError(o.where("learning_rate") + ": must be > 0");
    if (p.record_every < 1) throw ConfigError(o.where("record_every") + ": must be >= 1");
    c.probe = p;
  }
  if (root.has("compare")) {
    const auto o = root.child("compare", {"pairs"});
    c.compare.pairs = o.get<Eigen::Index>("pairs", c.compare.pairs);
    if (c.compare.pairs < 1) throw ConfigError(o.where("pairs") + ": must be >= 1");
  }
  if (root.has("verify")) {
    const auto o = root.child("verify", {"seed", "inject_gradient_fault"});
    c.verify.seed = o.get<std::uint64_t>("seed", c.verify.seed);
    c.verify.inject_gradient_fault = o.get<bool>("inject_gradient_fault", false);
  }
  if (root.has("outputs")) {
    const auto o = root.child("outputs", {"directory", "formats"});
    if (o.has("directory")) c.outputs.directory = detail::resolve(base, o.require<std::string>("directory"));
    if (o.has("formats")) {
      c.outputs.csv = c.outputs.json = c.outputs.binary = false;
      for (const auto& f : o.require<std::vector<std::string>>("formats")) {
        if (f == "csv") {
          c.outputs.csv = true;
        } else if (f == "json") {
          c.outputs.json = true;
        } else if (f == "binary") {
          c.outputs.binary = true;
        } else {
          throw ConfigError(o.where("formats") + ": unknown format '" + f + "'");
        }
      }
    }
  } else {
    c.outputs.directory = base / c.outputs.directory;
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

}  // namespace lvae
