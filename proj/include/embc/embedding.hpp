#pragma once

// Dense V x d embeddings: text ("word v1 ... vd") and EMB1 binary I/O.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "embc/binary_io.hpp"
#include "embc/error.hpp"
#include "embc/vocabulary.hpp"

namespace embc {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Immutable after construction.
class Embedding {
 public:
  Embedding(Vocabulary vocab, RowMatrixF matrix) : vocab_(std::move(vocab)), matrix_(std::move(matrix)) {
    if (vocab_.empty()) throw InputError("empty embedding refused");
    if (static_cast<std::size_t>(matrix_.rows()) != vocab_.size())
      throw InputError("matrix rows do not match vocabulary size");
    if (matrix_.cols() == 0) throw InputError("embedding dimensionality is zero");
    if (!matrix_.allFinite()) throw InputError("embedding contains non-finite values");
  }

  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const RowMatrixF& matrix() const { return matrix_; }
  [[nodiscard]] std::size_t size() const { return vocab_.size(); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(matrix_.cols()); }

  [[nodiscard]] auto row(std::size_t i) const { return matrix_.row(static_cast<Eigen::Index>(i)); }
  [[nodiscard]] auto row(const std::string& token) const { return row(vocab_.at(token)); }

 private:
  Vocabulary vocab_;
  RowMatrixF matrix_;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_float(std::string_view s, float& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace detail

// Rows in file order. d is taken from the first line unless expected_d > 0.
inline Embedding load_text(std::istream& in, std::size_t expected_d = 0) {
  std::vector<std::string> words;
  std::vector<float> values;
  std::size_t d = expected_d;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    const std::size_t n = fields.size() - 1;
    if (d == 0) d = n;
    if (n != d || n == 0) {
      throw InputError("line " + std::to_string(line_no) + ": dimension mismatch (expected " +
                       std::to_string(d) + ", got " + std::to_string(n) + ")");
    }
    for (std::size_t j = 1; j < fields.size(); ++j) {
      float v = 0;
      if (!detail::parse_float(fields[j], v))
        throw InputError("line " + std::to_string(line_no) + ": non-numeric field '" + std::string(fields[j]) + "'");
      values.push_back(v);
    }
    if (!seen.emplace(std::string(fields[0]), line_no).second)
      throw InputError("line " + std::to_string(line_no) + ": duplicate token '" + std::string(fields[0]) + "'");
    words.emplace_back(fields[0]);
  }
  if (words.empty()) throw InputError("empty embedding file");
  RowMatrixF m = Eigen::Map<RowMatrixF>(values.data(), static_cast<Eigen::Index>(words.size()),
                                        static_cast<Eigen::Index>(d));
  return Embedding(Vocabulary(std::move(words)), std::move(m));
}

inline Embedding load_text(const std::string& path, std::size_t expected_d = 0) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  return load_text(in, expected_d);
}

// 9 significant digits: exact round trip for float32 values.
inline void save_text(const Embedding& e, std::ostream& out) {
  if (e.size() == 0) throw InputError("empty embedding refused");
  char buf[32];
  for (std::size_t i = 0; i < e.size(); ++i) {
    out << e.vocab()[i];
    for (std::size_t j = 0; j < e.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(e.matrix()(i, j)));
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw InputError("write failed");
}

inline void save_text(const Embedding& e, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  save_text(e, out);
}

// Rows for tokens present in both, in keep order.
inline Embedding subset(const Embedding& e, const std::vector<std::string>& keep) {
  std::vector<std::string> words;
  std::vector<Eigen::Index> rows;
  std::unordered_map<std::string_view, bool> taken;
  for (const auto& token : keep) {
    auto idx = e.vocab().find(token);
    if (!idx || !taken.emplace(token, true).second) continue;
    words.push_back(token);
    rows.push_back(static_cast<Eigen::Index>(*idx));
  }
  if (words.empty()) throw InputError("subset is empty");
  RowMatrixF m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(e.dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = e.matrix().row(rows[i]);
  return Embedding(Vocabulary(std::move(words)), std::move(m));
}

// EMB1: magic, u32 V, u32 d, vocabulary block, V*d float32 row-major.
inline void save_binary(const Embedding& e, std::ostream& out) {
  io::ByteWriter w(out);
  w.magic("EMB1");
  w.u32(static_cast<std::uint32_t>(e.size()));
  w.u32(static_cast<std::uint32_t>(e.dim()));
  io::write_vocabulary(w, e.vocab());
  const RowMatrixF& m = e.matrix();
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(m.data()[i]);
  w.check();
}

inline void save_binary(const Embedding& e, const std::string& path) {
  auto out = io::open_output(path);
  save_binary(e, out);
}

inline Embedding load_binary(std::istream& in) {
  io::ByteReader r(in);
  r.expect_magic("EMB1");
  const std::uint32_t v = r.u32();
  const std::uint32_t d = r.u32();
  Vocabulary vocab = io::read_vocabulary(r, v);
  RowMatrixF m(v, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
  return Embedding(std::move(vocab), std::move(m));
}

inline Embedding load_binary(const std::string& path) {
  auto in = io::open_input(path);
  return load_binary(in);
}

// Text or EMB1, decided by the first four bytes.
inline Embedding load_any(const std::string& path) {
  if (io::sniff_magic(path) == "EMB1") return load_binary(path);
  return load_text(path);
}

}  // namespace embc
