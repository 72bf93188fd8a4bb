// Copyright 2026 The bpca Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// File formats and model persistence.
//
// bmat container (bit-exact, little-endian):
//   bytes 0..3   magic "BMAT"
//   bytes 4..7   format version, unsigned 32-bit LE (currently 1)
//   bytes 8..15  rows, unsigned 64-bit LE
//   bytes 16..23 cols, unsigned 64-bit LE
//   then rows*cols IEEE-754 binary64 LE values, row-major.
//
// csv: comma-separated decimal floats, one row per line, optional single
// leading header line starting with '#'.
//
// Model bundle: a directory holding manifest.txt (line-oriented key/value),
// m.bmat (d x 1) and V.bmat (d x k).

#ifndef BPCA_IO_HPP_
#define BPCA_IO_HPP_

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bpca/common.hpp"
#include "bpca/fit.hpp"
#include "bpca/link.hpp"

namespace bpca {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double parse_double(const std::string& tok, const std::string& where) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first < last && std::isspace(static_cast<unsigned char>(*first)))
    ++first;
  while (last > first && std::isspace(static_cast<unsigned char>(last[-1])))
    --last;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw DataError(where + ": cannot parse '" + tok + "' as a number");
  return value;
}

}  // namespace detail

inline void write_bmat(const Matrix& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("write_bmat: cannot open '" + path + "'");
  os.write("BMAT", 4);
  detail::put_u32(os, 1);
  detail::put_u64(os, static_cast<std::uint64_t>(m.rows()));
  detail::put_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) detail::put_f64(os, m(i, j));
  if (!os) throw DataError("write_bmat: write failed for '" + path + "'");
}

inline Matrix read_bmat(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_bmat: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "BMAT", 4) != 0)
    throw DataError("read_bmat: bad magic in '" + path + "'");
  const std::uint32_t version = detail::get_u32(is);
  if (!is || version != 1)
    throw DataError("read_bmat: unsupported version " +
                    std::to_string(version) + " in '" + path + "'");
  const std::uint64_t rows = detail::get_u64(is);
  const std::uint64_t cols = detail::get_u64(is);
  if (!is) throw DataError("read_bmat: truncated header in '" + path + "'");
  constexpr std::uint64_t kMaxEntries = 1ull << 30;
  if (cols != 0 && rows > kMaxEntries / cols)
    throw DataError("read_bmat: implausible dimensions in '" + path + "'");

  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  const std::uint64_t expected = 24 + 8 * rows * cols;
  if (ec || size != expected)
    throw DataError("read_bmat: payload length mismatch in '" + path + "'");

  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::vector<char> buf(8 * static_cast<std::size_t>(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!is) throw DataError("read_bmat: truncated payload in '" + path + "'");
    for (std::uint64_t j = 0; j < cols; ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(
                    buf[8 * j + b]))
                << (8 * b);
      m(static_cast<Index>(i), static_cast<Index>(j)) =
          std::bit_cast<double>(bits);
    }
  }
  if (!m.allFinite())
    throw DataError("read_bmat: non-finite values in '" + path + "'");
  return m;
}

inline void write_csv(const Matrix& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("write_csv: cannot open '" + path + "'");
  char buf[40];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      os << buf;
      if (j + 1 < m.cols()) os << ',';
    }
    os << '\n';
  }
  if (!os) throw DataError("write_csv: write failed for '" + path + "'");
}

inline Matrix read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("read_csv: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first && !line.empty() && line[0] == '#') {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ','))
      row.push_back(detail::parse_double(tok, "read_csv"));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError("read_csv: ragged rows in '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (!m.allFinite())
    throw DataError("read_csv: non-finite values in '" + path + "'");
  return m;
}

/// Dispatches on the file extension: `.bmat` or `.csv`.
inline Matrix read_matrix(const std::string& path) {
  if (path.ends_with(".bmat")) return read_bmat(path);
  if (path.ends_with(".csv")) return read_csv(path);
  throw ConfigError("read_matrix: unknown extension for '" + path +
                    "' (expected .bmat or .csv)");
}

inline void write_matrix(const Matrix& m, const std::string& path) {
  if (path.ends_with(".bmat")) return write_bmat(m, path);
  if (path.ends_with(".csv")) return write_csv(m, path);
  throw ConfigError("write_matrix: unknown extension for '" + path +
                    "' (expected .bmat or .csv)");
}

/// Single-column csv of 0-based integer class labels.
inline std::vector<int> read_labels(const std::string& path) {
  const Matrix m = read_csv(path);
  if (m.rows() == 0 || m.cols() != 1)
    throw DataError("read_labels: expected a single column in '" + path +
                    "'");
  std::vector<int> labels(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    const double v = m(i, 0);
    if (v != std::floor(v) || v < 0.0 || v > 2e9)
      throw DataError("read_labels: non-integer label at row " +
                      std::to_string(i));
    labels[static_cast<std::size_t>(i)] = static_cast<int>(v);
  }
  return labels;
}

inline void save_model(const BpcaModel& model, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("save_model: cannot create '" + dir + "'");
  {
    std::ofstream os(fs::path(dir) / "manifest.txt", std::ios::trunc);
    if (!os) throw DataError("save_model: cannot write manifest");
    os << "format_version 1\n";
    os << "link " << link_to_string(model.link()) << '\n';
    os << "d " << model.dim() << '\n';
    os << "k " << model.components() << '\n';
    os << "gauge " << model.gauge() << '\n';
    if (!os) throw DataError("save_model: manifest write failed");
  }
  write_bmat(model.mean(), (fs::path(dir) / "m.bmat").string());
  write_bmat(model.directions(), (fs::path(dir) / "V.bmat").string());
}

inline BpcaModel load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "manifest.txt");
  if (!is) throw DataError("load_model: missing manifest in '" + dir + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos)
      throw DataError("load_model: malformed manifest line '" + line + "'");
    const std::string key = line.substr(0, sp);
    if (kv.count(key))
      throw DataError("load_model: duplicate manifest key '" + key + "'");
    kv[key] = line.substr(sp + 1);
  }
  for (const char* key : {"format_version", "link", "d", "k", "gauge"})
    if (!kv.count(key))
      throw DataError(std::string("load_model: manifest missing '") + key +
                      "'");
  if (kv.size() != 5)
    throw DataError("load_model: unexpected manifest keys");
  if (kv["format_version"] != "1")
    throw DataError("load_model: unsupported format_version " +
                    kv["format_version"]);

  long d = 0, k = 0;
  try {
    d = std::stol(kv["d"]);
    k = std::stol(kv["k"]);
  } catch (const std::exception&) {
    throw DataError("load_model: malformed dimensions in manifest");
  }
  if (d < 1 || k < 1) throw DataError("load_model: bad dimensions");

  const LinkFunction link = parse_link(kv["link"], static_cast<Index>(d));
  const std::string expected_gauge = link.is_softmax() ? "zero-sum" : "none";
  if (kv["gauge"] != expected_gauge)
    throw DataError("load_model: gauge '" + kv["gauge"] +
                    "' does not match link");

  const Matrix mmat = read_bmat((fs::path(dir) / "m.bmat").string());
  const Matrix vmat = read_bmat((fs::path(dir) / "V.bmat").string());
  if (mmat.cols() != 1 || mmat.rows() != d)
    throw DataError("load_model: m.bmat shape does not match manifest");
  if (vmat.rows() != d || vmat.cols() != k)
    throw DataError("load_model: V.bmat shape does not match manifest");

  BpcaModel model(link, mmat.col(0), vmat);

  // Conjugacy is re-checked on load; round-off drift warns, not errors.
  const Matrix gram =
      vmat.transpose() * model.metric_at_mean().apply(vmat);
  const Matrix eye = Matrix::Identity(k, k);
  if ((gram - eye).cwiseAbs().maxCoeff() > 1e-6)
    std::cerr << "warning: load_model: directions in '" << dir
              << "' deviate from metric conjugacy\n";
  return model;
}

}  // namespace bpca

#endif  // BPCA_IO_HPP_
