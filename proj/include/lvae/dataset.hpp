#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lvae/errors.hpp"
#include "lvae/linalg.hpp"

namespace lvae {

// N observations (rows) of dimension n (columns). Mean and the biased (1/N)
// sample covariance are computed once at construction.
class DataMatrix {
 public:
  DataMatrix() = default;

  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1) throw ParameterError("DataMatrix: at least one observation is required");
    if (!values_.allFinite()) throw ParameterError("DataMatrix: values must be finite");
    mean_ = values_.colwise().mean().transpose();
    const Matrix centered = values_.rowwise() - mean_.transpose();
    covariance_ = symmetrized(centered.transpose() * centered / static_cast<double>(values_.rows()));
  }

  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index cols() const noexcept { return values_.cols(); }
  double count() const noexcept { return static_cast<double>(values_.rows()); }

  const Matrix& values() const noexcept { return values_; }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return covariance_; }

  // (1/N) sum_i (x_i - about)(x_i - about)^T = S + (mean - about)(mean - about)^T
  Matrix second_moment(const Vector& about) const {
    const Vector shift = mean_ - about;
    return covariance_ + shift * shift.transpose();
  }

 private:
  Matrix values_;
  Vector mean_;
  Matrix covariance_;
};

struct EigenSpectrum {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // orthonormal columns

  Eigen::Index size() const noexcept { return eigenvalues.size(); }
};

struct SyntheticSpec {
  Eigen::Index latent_dim = 1;
  Eigen::Index ambient_dim = 2;
  std::vector<double> eigenvalues;  // spectrum of W_true W_true^T, one per latent dimension
  double noise = 1.0;               // observation variance
  Eigen::Index sample_count = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (latent_dim < 1 || latent_dim > ambient_dim) throw ParameterError("SyntheticSpec: need 1 <= k <= n");
    if (static_cast<Eigen::Index>(eigenvalues.size()) != latent_dim) {
      throw ParameterError("SyntheticSpec: one eigenvalue per latent dimension");
    }
    for (double v : eigenvalues) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("SyntheticSpec: eigenvalues must be >= 0");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ParameterError("SyntheticSpec: noise must be >= 0");
    if (sample_count < 1) throw ParameterError("SyntheticSpec: sample_count must be >= 1");
  }
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
};

inline IdxHeader parse_idx_header(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0) throw FormatError(name + ": bad IDX magic");
  if (bytes[2] != 0x08) throw FormatError(name + ": only unsigned-byte IDX payloads are supported");
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw FormatError(name + ": IDX file declares zero dimensions");
  IdxHeader header;
  header.payload_offset = 4 + 4 * ndims;
  if (bytes.size() < header.payload_offset) throw LengthError(name + ": truncated IDX header");
  for (std::size_t i = 0; i < ndims; ++i) header.dims.push_back(read_be32(bytes, 4 + 4 * i));
  return header;
}

}  // namespace detail

// Reads an unsigned-byte IDX image file. Each item (all dimensions after the
// first) is flattened into one row. With `limit`, that many rows are drawn
// uniformly without replacement in an order fixed by `seed`. When a label
// file is given it is validated against the image count.
inline DataMatrix load_idx(const std::filesystem::path& images_path,
                           const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                           std::optional<std::size_t> limit = std::nullopt, std::uint64_t seed = 0) {
  const auto bytes = detail::read_file_bytes(images_path);
  const auto header = detail::parse_idx_header(bytes, images_path.string());
  const std::size_t count = header.dims[0];
  std::size_t width = 1;
  for (std::size_t i = 1; i < header.dims.size(); ++i) width *= header.dims[i];
  if (bytes.size() - header.payload_offset < count * width) {
    throw LengthError(images_path.string() + ": truncated IDX payload");
  }

  if (labels_path) {
    const auto label_bytes = detail::read_file_bytes(*labels_path);
    const auto label_header = detail::parse_idx_header(label_bytes, labels_path->string());
    if (label_header.dims[0] != count) throw LengthError("label count does not match image count");
    if (label_bytes.size() - label_header.payload_offset < count) {
      throw LengthError(labels_path->string() + ": truncated IDX payload");
    }
  }

  std::vector<std::size_t> rows(count);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (limit) {
    if (*limit > count) throw BoundsError("load_idx: limit exceeds the number of images");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < *limit; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, count - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(*limit);
  }

  Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const unsigned char* src = bytes.data() + header.payload_offset + rows[r] * width;
    for (std::size_t c = 0; c < width; ++c) {
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(src[c]);
    }
  }
  return DataMatrix(std::move(values));
}

// Uniform dequantization followed by the logit transform
//   y = alpha + (1 - 2 alpha) (x + u) / 256,   out = log(y / (1 - y)).
inline DataMatrix preprocess(const DataMatrix& data, std::uint64_t dequantize_seed, double alpha = 1e-6) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ParameterError("preprocess: alpha must lie in (0, 0.5)");
  std::mt19937_64 rng(dequantize_seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix out(data.rows(), data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const double pixel = data.values()(i, j);
      if (pixel < 0.0 || pixel > 255.0) throw ParameterError("preprocess: pixel values must lie in [0, 255]");
      const double x = (pixel + uniform(rng)) / 256.0;
      const double y = alpha + (1.0 - 2.0 * alpha) * x;
      out(i, j) = std::log(y / (1.0 - y));
    }
  }
  return DataMatrix(std::move(out));
}

// Draws N samples from the pPCA forward model x = W z + sqrt(noise) eps with
// W = U diag(sqrt(eigenvalues)), U a random n x k orthonormal basis.
inline DataMatrix synthesize(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.ambient_dim;
  const Eigen::Index k = spec.latent_dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix gaussian(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) gaussian(i, j) = normal(rng);
  }
  const Matrix basis = gaussian.householderQr().householderQ() * Matrix::Identity(n, k);
  Matrix weights = basis;
  for (Eigen::Index j = 0; j < k; ++j) weights.col(j) *= std::sqrt(spec.eigenvalues[static_cast<std::size_t>(j)]);

  const double noise_scale = std::sqrt(spec.noise);
  Matrix values(spec.sample_count, n);
  Vector z(k);
  Vector eps(n);
  for (Eigen::Index row = 0; row < spec.sample_count; ++row) {
    for (Eigen::Index j = 0; j < k; ++j) z(j) = normal(rng);
    for (Eigen::Index i = 0; i < n; ++i) eps(i) = normal(rng);
    values.row(row) = (weights * z + noise_scale * eps).transpose();
  }
  return DataMatrix(std::move(values));
}

inline EigenSpectrum eigendecompose(const DataMatrix& data) {
  auto eig = symmetric_eigen(data.covariance());
  return EigenSpectrum{std::move(eig.values), std::move(eig.vectors)};
}

}  // namespace lvae
