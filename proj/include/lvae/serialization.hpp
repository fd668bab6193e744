#pragma once

// JSON and CSV encodings of models, ELBO breakdowns, trajectories, landscape
// slices and collapse reports. Matrices are stored row-major with explicit
// shape fields.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lvae/collapse.hpp"
#include "lvae/errors.hpp"
#include "lvae/io.hpp"
#include "lvae/landscape.hpp"
#include "lvae/linear_vae.hpp"
#include "lvae/ppca.hpp"
#include "lvae/training.hpp"

namespace lvae {

using Json = nlohmann::ordered_json;

inline Json matrix_to_json(const Matrix& m) {
  Json values = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const Json& j) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& values = j.at("values");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols) {
      throw FormatError("matrix json: value count does not match shape");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = values.at(static_cast<std::size_t>(i * cols + c)).get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("matrix json: ") + e.what());
  }
}

inline Vector vector_from_json(const Json& j) {
  try {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vector json: ") + e.what());
  }
}

inline Json to_json(const PpcaModel& m) {
  return Json{{"type", "ppca_model"},
              {"n", m.ambient_dim()},
              {"k", m.latent_dim()},
              {"weights", matrix_to_json(m.weights)},
              {"mean", vector_to_json(m.mean)},
              {"noise", m.noise}};
}

inline Json to_json(const LinearVae& v) {
  return Json{{"type", "linear_vae"},
              {"n", v.ambient_dim()},
              {"k", v.latent_dim()},
              {"decoder", matrix_to_json(v.decoder)},
              {"encoder", matrix_to_json(v.encoder)},
              {"variances", vector_to_json(v.variances)},
              {"mean", vector_to_json(v.mean)},
              {"noise", v.noise}};
}

inline LinearVae linear_vae_from_json(const Json& j) {
  try {
    if (j.at("type").get<std::string>() != "linear_vae") throw FormatError("expected a linear_vae document");
    LinearVae v;
    v.decoder = matrix_from_json(j.at("decoder"));
    v.encoder = matrix_from_json(j.at("encoder"));
    v.variances = vector_from_json(j.at("variances"));
    v.mean = vector_from_json(j.at("mean"));
    v.noise = j.at("noise").get<double>();
    v.validate();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("linear_vae json: ") + e.what());
  } catch (const ParameterError& e) {
    throw FormatError(std::string("linear_vae json: ") + e.what());
  }
}

// Binary form: the decoder, encoder and a 1 x (k + n + 1) row
// [D, mu, s2] as three consecutive "LVAE" matrix blocks, length-prefixed.
inline std::string linear_vae_to_binary(const LinearVae& v) {
  Matrix tail(1, v.latent_dim() + v.ambient_dim() + 1);
  tail.block(0, 0, 1, v.latent_dim()) = v.variances.transpose();
  tail.block(0, v.latent_dim(), 1, v.ambient_dim()) = v.mean.transpose();
  tail(0, tail.cols() - 1) = v.noise;
  std::string out;
  for (const Matrix* m : std::initializer_list<const Matrix*>{&v.decoder, &v.encoder, &tail}) {
    const std::string block = matrix_to_binary(*m);
    detail::put_le(out, block.size(), 8);
    out += block;
  }
  return out;
}

inline LinearVae linear_vae_from_binary(const std::string& bytes) {
  std::vector<Matrix> blocks;
  std::size_t offset = 0;
  while (blocks.size() < 3) {
    if (bytes.size() < offset + 8) throw LengthError("linear_vae binary: truncated");
    const auto size = detail::get_le(bytes, offset, 8);
    offset += 8;
    if (bytes.size() - offset < size) throw LengthError("linear_vae binary: truncated");
    blocks.push_back(matrix_from_binary(bytes.substr(offset, size)));
    offset += size;
  }
  if (offset != bytes.size()) throw LengthError("linear_vae binary: trailing bytes");
  LinearVae v;
  v.decoder = std::move(blocks[0]);
  v.encoder = std::move(blocks[1]);
  const Eigen::Index k = v.decoder.cols();
  const Eigen::Index n = v.decoder.rows();
  if (blocks[2].rows() != 1 || blocks[2].cols() != k + n + 1) throw FormatError("linear_vae binary: bad tail block");
  v.variances = blocks[2].block(0, 0, 1, k).transpose();
  v.mean = blocks[2].block(0, k, 1, n).transpose();
  v.noise = blocks[2](0, k + n);
  v.validate();
  return v;
}

inline Json to_json(const ElboBreakdown& b) {
  return Json{{"term_a", b.term_a},
              {"term_b", b.term_b},
              {"term_c", b.term_c},
              {"elbo", b.elbo},
              {"log_marginal", b.log_marginal}};
}

inline ElboBreakdown elbo_breakdown_from_json(const Json& j) {
  try {
    return ElboBreakdown{j.at("term_a").get<double>(), j.at("term_b").get<double>(), j.at("term_c").get<double>(),
                         j.at("elbo").get<double>(), j.at("log_marginal").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("elbo json: ") + e.what());
  }
}

inline std::string trajectory_to_csv(const TrainTrajectory& t) {
  std::string out = "step,elbo,log_marginal,term_a,sigma2,beta\n";
  for (const auto& p : t.steps) {
    out += std::to_string(p.step) + ',' + format_double(p.elbo) + ',' + format_double(p.log_marginal) + ',' +
           format_double(p.term_a) + ',' + format_double(p.noise) + ',' + format_double(p.beta) + '\n';
  }
  return out;
}

inline Json to_json(const TrainTrajectory& t) {
  Json steps = Json::array();
  for (const auto& p : t.steps) {
    steps.push_back(Json{{"step", p.step},
                         {"elbo", p.elbo},
                         {"log_marginal", p.log_marginal},
                         {"term_a", p.term_a},
                         {"sigma2", p.noise},
                         {"beta", p.beta}});
  }
  return Json{{"steps", std::move(steps)}, {"final_model", to_json(t.final_model)}};
}

inline std::string landscape_to_csv(const LandscapeSlice& s) {
  std::string out = "eps1,eps2,value\n";
  for (Eigen::Index a = 0; a < s.resolution(); ++a) {
    for (Eigen::Index b = 0; b < s.resolution(); ++b) {
      out += format_double(s.offset(s.axis1, a)) + ',' + format_double(s.offset(s.axis2, b)) + ',' +
             format_double(s.grid(a, b)) + '\n';
    }
  }
  return out;
}

inline Json to_json(const SliceAxis& a) {
  return Json{{"column", a.column}, {"direction", a.direction}, {"eps_min", a.eps_min}, {"eps_max", a.eps_max}};
}

inline Json to_json(const LandscapeSlice& s) {
  return Json{{"objective", to_string(s.objective)},
              {"resolution", s.resolution()},
              {"axis1", to_json(s.axis1)},
              {"axis2", to_json(s.axis2)},
              {"grid", matrix_to_json(s.grid)}};
}

inline std::string collapse_to_csv(const CollapseReport& r) {
  std::string out = "epsilon,collapsed_fraction\n";
  for (std::size_t i = 0; i < r.epsilons.size(); ++i) {
    out += format_double(r.epsilons[i]) + ',' + format_double(r.collapsed_fraction[i]) + '\n';
  }
  return out;
}

inline Json to_json(const CollapseReport& r) {
  return Json{{"epsilons", r.epsilons},
              {"delta", r.delta},
              {"collapsed_fraction", r.collapsed_fraction},
              {"per_dim_quantiles", vector_to_json(r.per_dim_quantiles)},
              {"per_dim_mean_kl", vector_to_json(r.per_dim_mean_kl)}};
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace lvae
