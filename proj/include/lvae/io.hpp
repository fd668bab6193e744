#pragma once

// File-format plumbing: 17-significant-digit number formatting, atomic file
// writes, and the CSV / binary encodings of DataMatrix.

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"

namespace lvae {

// Round-trip exact representation of a double.
inline std::string format_double(double value) {
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", value);
  return buf.data();
}

// Writes to a sibling temporary file and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV with header row x0,...,x{n-1}.
inline std::string data_to_csv(const DataMatrix& data) {
  std::string out;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    if (j) out += ',';
    out += 'x' + std::to_string(j);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (j) out += ',';
      out += format_double(data.values()(i, j));
    }
    out += '\n';
  }
  return out;
}

inline DataMatrix data_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: missing header");
  Eigen::Index n = 0;
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      if (cell != "x" + std::to_string(n)) throw FormatError("csv: header must be x0..x{n-1}");
      ++n;
    }
  }
  if (n == 0) throw FormatError("csv: empty header");
  std::vector<double> flat;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string cell;
    Eigen::Index cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        flat.push_back(std::stod(cell, &used));
        while (used < cell.size() && (cell[used] == '\r' || cell[used] == ' ')) ++used;
        if (used != cell.size()) throw FormatError("csv: trailing characters in '" + cell + "'");
      } catch (const std::logic_error&) {
        throw FormatError("csv: cannot parse '" + cell + "'");
      }
      ++cols;
    }
    if (cols != n) throw LengthError("csv: row " + std::to_string(rows + 1) + " has wrong column count");
    ++rows;
  }
  Matrix values(rows, n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) values(i, j) = flat[static_cast<std::size_t>(i * n + j)];
  }
  return DataMatrix(std::move(values));
}

namespace detail {

inline void put_le(std::string& out, std::uint64_t value, int bytes) {
  for (int b = 0; b < bytes; ++b) out += static_cast<char>((value >> (8 * b)) & 0xffu);
}

inline std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
  std::uint64_t value = 0;
  for (int b = 0; b < bytes; ++b) {
    value |= std::uint64_t{static_cast<unsigned char>(in[offset + static_cast<std::size_t>(b)])} << (8 * b);
  }
  return value;
}

}  // namespace detail

constexpr std::uint32_t kBinaryVersion = 1;

// "LVAE", u32 version, u64 rows, u64 cols, row-major little-endian f64 payload.
inline std::string matrix_to_binary(const Matrix& values) {
  std::string out = "LVAE";
  detail::put_le(out, kBinaryVersion, 4);
  detail::put_le(out, static_cast<std::uint64_t>(values.rows()), 8);
  detail::put_le(out, static_cast<std::uint64_t>(values.cols()), 8);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      detail::put_le(out, std::bit_cast<std::uint64_t>(values(i, j)), 8);
    }
  }
  return out;
}

inline Matrix matrix_from_binary(const std::string& bytes) {
  if (bytes.size() < 24 || bytes.compare(0, 4, "LVAE") != 0) throw FormatError("binary: bad magic");
  const auto version = detail::get_le(bytes, 4, 4);
  if (version != kBinaryVersion) throw FormatError("binary: unsupported version " + std::to_string(version));
  const auto rows = detail::get_le(bytes, 8, 8);
  const auto cols = detail::get_le(bytes, 16, 8);
  if (cols != 0 && rows > (bytes.size() - 24) / 8 / cols) throw LengthError("binary: truncated payload");
  if (bytes.size() != 24 + rows * cols * 8) throw LengthError("binary: payload size mismatch");
  Matrix values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t offset = 24;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j, offset += 8) {
      values(i, j) = std::bit_cast<double>(detail::get_le(bytes, offset, 8));
    }
  }
  return values;
}

inline std::string data_to_binary(const DataMatrix& data) { return matrix_to_binary(data.values()); }
inline DataMatrix data_from_binary(const std::string& bytes) { return DataMatrix(matrix_from_binary(bytes)); }

}  // namespace lvae
