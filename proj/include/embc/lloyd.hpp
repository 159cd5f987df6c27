#pragma once

// Per-dimension adaptive level quantization (1-D Lloyd iteration) and the
// LQE1 file format.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "embc/binary_io.hpp"
#include "embc/embedding.hpp"
#include "embc/error.hpp"

namespace embc::lloyd {

// Levels for one dimension. The first `effective` entries are strictly
// ascending; any remaining entries repeat the top level so every table
// has the requested length.
struct LevelTable {
  std::vector<double> levels;
  std::size_t effective = 0;

  [[nodiscard]] std::size_t size() const { return levels.size(); }

  // Nearest level, ties to the lower index.
  [[nodiscard]] std::size_t nearest(double v) const {
    std::size_t lo = 0, hi = effective - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const double boundary = 0.5 * (levels[mid] + levels[mid + 1]);
      if (v > boundary) lo = mid + 1;
      else hi = mid;
    }
    return lo;
  }
};

struct FitOptions {
  std::size_t max_iters = 100;
  // Stop once no level moves more than this. Negative selects
  // 1e-7 * (max - min) of the data.
  double tol = -1.0;
};

// Sum over values of the squared distance to the nearest level.
inline double objective(std::span<const double> values, const LevelTable& table) {
  double total = 0;
  for (double v : values) {
    const double diff = v - table.levels[table.nearest(v)];
    total += diff * diff;
  }
  return total;
}

namespace detail {

// Initial placement at the (i + 0.5) / n quantiles of the sorted data.
inline std::vector<double> quantile_levels(std::span<const double> sorted, std::size_t n) {
  std::vector<double> levels(n);
  const std::size_t count = sorted.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto idx = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(count) /
                                        static_cast<double>(n));
    levels[i] = sorted[std::min(idx, count - 1)];
  }
  return levels;
}

// Contiguous-run assignment of sorted values to ascending levels. Returns
// the first value index of each cluster plus an end sentinel.
inline std::vector<std::size_t> assign_sorted(std::span<const double> sorted, std::span<const double> levels) {
  const std::size_t n = levels.size();
  std::vector<std::size_t> start(n + 1, sorted.size());
  std::size_t j = 0;
  start[0] = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    while (j + 1 < n && sorted[i] > 0.5 * (levels[j] + levels[j + 1])) {
      ++j;
      start[j] = i;
    }
  }
  for (std::size_t c = j + 1; c < n; ++c) start[c] = sorted.size();
  return start;
}

inline double run_objective(std::span<const double> sorted, std::span<const double> levels,
                            std::span<const std::size_t> start) {
  double total = 0;
  for (std::size_t c = 0; c + 1 < start.size(); ++c) {
    for (std::size_t i = start[c]; i < start[c + 1]; ++i) {
      const double diff = sorted[i] - levels[c];
      total += diff * diff;
    }
  }
  return total;
}

// Moves an empty level to the midpoint of the widest gap between adjacent
// sorted values that currently sit in the same cluster.
inline bool reseed_empty(std::span<const double> sorted, std::vector<double>& levels,
                         std::span<const std::size_t> start) {
  bool any = false;
  for (std::size_t c = 0; c < levels.size(); ++c) {
    if (start[c] != start[c + 1]) continue;
    double best_gap = 0;
    double best_mid = levels[c];
    for (std::size_t g = 0; g + 1 < start.size(); ++g) {
      for (std::size_t i = start[g]; i + 1 < start[g + 1]; ++i) {
        const double gap = sorted[i + 1] - sorted[i];
        if (gap > best_gap) {
          best_gap = gap;
          best_mid = 0.5 * (sorted[i] + sorted[i + 1]);
        }
      }
    }
    if (best_gap > 0) {
      levels[c] = best_mid;
      any = true;
    }
  }
  std::sort(levels.begin(), levels.end());
  return any;
}

}  // namespace detail

// Lloyd's algorithm on one column. If `trace` is given, it receives the
// objective evaluated at the start of every iteration.
inline LevelTable fit_dimension(std::span<const double> values, std::size_t n_levels,
                                const FitOptions& options = {}, std::vector<double>* trace = nullptr) {
  if (values.empty()) throw InputError("fit_dimension: empty input");
  if (n_levels == 0) throw InputError("fit_dimension: n_levels must be >= 1");
  for (double v : values)
    if (!std::isfinite(v)) throw InputError("fit_dimension: non-finite input");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t distinct_count = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) ++distinct_count;
  const std::size_t n = std::min(n_levels, distinct_count);

  const double range = sorted.back() - sorted.front();
  const double tol = options.tol < 0 ? 1e-7 * range : options.tol;

  std::vector<double> levels = detail::quantile_levels(sorted, n);
  std::sort(levels.begin(), levels.end());
  std::vector<std::size_t> previous;

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    auto start = detail::assign_sorted(sorted, levels);
    if (detail::reseed_empty(sorted, levels, start)) {
      previous.clear();
      continue;
    }
    if (trace) trace->push_back(detail::run_objective(sorted, levels, start));

    double movement = 0;
    for (std::size_t c = 0; c < n; ++c) {
      double sum = 0;
      for (std::size_t i = start[c]; i < start[c + 1]; ++i) sum += sorted[i];
      const double centroid = sum / static_cast<double>(start[c + 1] - start[c]);
      movement = std::max(movement, std::abs(centroid - levels[c]));
      levels[c] = centroid;
    }
    const bool unchanged = start == previous;
    previous = std::move(start);
    if (unchanged || movement <= tol) break;
  }

  LevelTable table;
  table.effective = n;
  table.levels = std::move(levels);
  table.levels.resize(n_levels, table.levels.back());
  return table;
}

inline LevelTable fit_dimension(std::span<const float> values, std::size_t n_levels,
                                const FitOptions& options = {}, std::vector<double>* trace = nullptr) {
  std::vector<double> wide(values.begin(), values.end());
  return fit_dimension(std::span<const double>(wide), n_levels, options, trace);
}

[[nodiscard]] inline unsigned bits_per_index(std::size_t n_levels) {
  return n_levels <= 1 ? 0u : static_cast<unsigned>(std::bit_width(n_levels - 1));
}

struct QuantizedEmbedding {
  Vocabulary vocab;
  std::size_t n_levels = 0;
  std::vector<LevelTable> tables;      // one per dimension
  std::vector<std::uint16_t> indices;  // V x d, row-major

  [[nodiscard]] std::size_t size() const { return vocab.size(); }
  [[nodiscard]] std::size_t dim() const { return tables.size(); }
  [[nodiscard]] std::uint16_t index(std::size_t word, std::size_t dim_j) const {
    return indices[word * dim() + dim_j];
  }
  [[nodiscard]] std::size_t payload_bits_per_word() const { return dim() * bits_per_index(n_levels); }
};

inline QuantizedEmbedding quantize(const Embedding& e, std::size_t n_levels, const FitOptions& options = {}) {
  if (n_levels == 0) throw InputError("quantize: n_levels must be >= 1");
  if (n_levels > std::numeric_limits<std::uint16_t>::max()) throw InputError("quantize: too many levels");
  const std::size_t v = e.size(), d = e.dim();
  QuantizedEmbedding q;
  q.vocab = e.vocab();
  q.n_levels = n_levels;
  q.tables.resize(d);
  q.indices.resize(v * d);

  const auto dims = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t jj = 0; jj < dims; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    std::vector<double> column(v);
    for (std::size_t i = 0; i < v; ++i) column[i] = e.matrix()(static_cast<Eigen::Index>(i), jj);
    LevelTable table = fit_dimension(std::span<const double>(column), n_levels, options);
    for (std::size_t i = 0; i < v; ++i) q.indices[i * d + j] = static_cast<std::uint16_t>(table.nearest(column[i]));
    q.tables[j] = std::move(table);
  }
  return q;
}

inline Embedding dequantize(const QuantizedEmbedding& q) {
  const std::size_t v = q.size(), d = q.dim();
  RowMatrixF m(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<float>(q.tables[j].levels.at(q.index(i, j)));
  return Embedding(q.vocab, std::move(m));
}

// LQE1: magic, u32 V, u32 d, u16 n_levels, vocabulary block, d * n_levels
// float32 levels (dimension-major), then per word d indices of
// bits_per_index(n_levels) bits, MSB-first, padded to a byte per word.
inline void write_lqe(const QuantizedEmbedding& q, std::ostream& out) {
  io::ByteWriter w(out);
  w.magic("LQE1");
  w.u32(static_cast<std::uint32_t>(q.size()));
  w.u32(static_cast<std::uint32_t>(q.dim()));
  w.u16(static_cast<std::uint16_t>(q.n_levels));
  io::write_vocabulary(w, q.vocab);
  for (const auto& t : q.tables)
    for (double level : t.levels) w.f32(static_cast<float>(level));
  const unsigned bits = bits_per_index(q.n_levels);
  for (std::size_t i = 0; i < q.size(); ++i) {
    io::BitWriter bw;
    for (std::size_t j = 0; j < q.dim(); ++j) bw.put(q.index(i, j), bits);
    w.bytes(bw.bytes());
  }
  w.check();
}

inline void write_lqe(const QuantizedEmbedding& q, const std::string& path) {
  auto out = io::open_output(path);
  write_lqe(q, out);
}

inline QuantizedEmbedding read_lqe(std::istream& in) {
  io::ByteReader r(in);
  r.expect_magic("LQE1");
  QuantizedEmbedding q;
  const std::uint32_t v = r.u32();
  const std::uint32_t d = r.u32();
  q.n_levels = r.u16();
  if (q.n_levels == 0) throw InputError("LQE1: zero levels");
  q.vocab = io::read_vocabulary(r, v);
  q.tables.resize(d);
  for (auto& t : q.tables) {
    t.levels.resize(q.n_levels);
    for (auto& level : t.levels) level = r.f32();
    t.effective = 1;
    while (t.effective < t.levels.size() && t.levels[t.effective] > t.levels[t.effective - 1]) ++t.effective;
  }
  const unsigned bits = bits_per_index(q.n_levels);
  const std::size_t word_bytes = (static_cast<std::size_t>(d) * bits + 7) / 8;
  q.indices.resize(static_cast<std::size_t>(v) * d);
  for (std::size_t i = 0; i < v; ++i) {
    auto raw = r.bytes(word_bytes);
    io::BitReader br(raw);
    for (std::size_t j = 0; j < d; ++j) {
      const auto idx = br.get(bits);
      if (idx >= q.n_levels) throw InputError("LQE1: level index out of range");
      q.indices[i * d + j] = static_cast<std::uint16_t>(idx);
    }
  }
  return q;
}

inline QuantizedEmbedding read_lqe(const std::string& path) {
  auto in = io::open_input(path);
  return read_lqe(in);
}

}  // namespace embc::lloyd
