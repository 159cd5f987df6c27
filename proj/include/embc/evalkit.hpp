#pragma once

// Word-similarity (Spearman rho over cosine scores) and word-analogy
// (3CosAdd / 3CosMul) evaluation, plus the top-words probe for sparse codes.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "embc/embedding.hpp"
#include "embc/error.hpp"
#include "embc/lsh.hpp"
#include "embc/sparse_encoding.hpp"

namespace embc::eval {

// u.v / (|u| |v|); zero when either vector is zero, with `zero` set.
template <typename A, typename B>
double cosine(const A& u, const B& v, bool* zero = nullptr) {
  if (u.size() != v.size()) throw InputError("cosine: dimension mismatch");
  const Eigen::VectorXd a = u.template cast<double>().reshaped();
  const Eigen::VectorXd b = v.template cast<double>().reshaped();
  const double na = a.norm(), nb = b.norm();
  const bool is_zero = na == 0.0 || nb == 0.0;
  if (zero) *zero = is_zero;
  if (is_zero) return 0.0;
  return a.dot(b) / (na * nb);
}

// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("spearman: length mismatch");
  if (x.size() < 2) throw InputError("spearman: need at least 2 observations");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

// Anything that can report cosines between its vocabulary rows.
class Representation {
 public:
  virtual ~Representation() = default;
  [[nodiscard]] virtual const Vocabulary& vocab() const = 0;
  [[nodiscard]] virtual double cosine(std::size_t i, std::size_t j) const = 0;

  // V x rows.size(): column c holds the cosine of every word to rows[c].
  [[nodiscard]] virtual Eigen::MatrixXd cosines_to(std::span<const std::size_t> rows) const {
    const auto V = static_cast<Eigen::Index>(vocab().size());
    Eigen::MatrixXd out(V, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c)
      for (Eigen::Index i = 0; i < V; ++i)
        out(i, static_cast<Eigen::Index>(c)) = cosine(static_cast<std::size_t>(i), rows[c]);
    return out;
  }
};

class DenseRepresentation final : public Representation {
 public:
  explicit DenseRepresentation(const Embedding& e) : vocab_(e.vocab()), unit_(e.matrix().cast<double>()) {
    for (Eigen::Index i = 0; i < unit_.rows(); ++i) {
      const double n = unit_.row(i).norm();
      if (n > 0.0) unit_.row(i) /= n;
      else ++zero_rows_;
    }
  }

  [[nodiscard]] const Vocabulary& vocab() const override { return vocab_; }

  [[nodiscard]] double cosine(std::size_t i, std::size_t j) const override {
    return unit_.row(static_cast<Eigen::Index>(i)).dot(unit_.row(static_cast<Eigen::Index>(j)));
  }

  [[nodiscard]] Eigen::MatrixXd cosines_to(std::span<const std::size_t> rows) const override {
    Eigen::MatrixXd queries(unit_.cols(), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c)
      queries.col(static_cast<Eigen::Index>(c)) = unit_.row(static_cast<Eigen::Index>(rows[c])).transpose();
    return unit_ * queries;
  }

  // Rows of all zeros; their cosine to anything is 0.
  [[nodiscard]] std::size_t zero_rows() const { return zero_rows_; }

 private:
  Vocabulary vocab_;
  RowMatrixD unit_;
  std::size_t zero_rows_ = 0;
};

// Cosines estimated from LSH signatures.
class SignatureRepresentation final : public Representation {
 public:
  explicit SignatureRepresentation(lsh::SignatureSet set) : set_(std::move(set)) {}

  [[nodiscard]] const Vocabulary& vocab() const override { return set_.vocab; }

  [[nodiscard]] double cosine(std::size_t i, std::size_t j) const override {
    return lsh::similarity(set_.signatures[i], set_.signatures[j]);
  }

 private:
  lsh::SignatureSet set_;
};

struct SimilarityPair {
  std::string first, second;
  double score = 0.0;
};

struct SimilarityDataset {
  std::string name;
  std::vector<SimilarityPair> pairs;
};

struct AnalogyQuestion {
  std::string a, a_star, b, b_star;
};

struct AnalogyDataset {
  std::string name;
  std::vector<AnalogyQuestion> questions;
};

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string stem(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace detail

// One "word1 word2 score" per line, whitespace or tab separated.
inline SimilarityDataset load_similarity(std::istream& in, bool lowercase = false, std::string name = "similarity") {
  SimilarityDataset ds{std::move(name), {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = embc::detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 3) throw InputError("line " + std::to_string(line_no) + ": expected 'word1 word2 score'");
    float score = 0;
    if (!embc::detail::parse_float(fields[2], score))
      throw InputError("line " + std::to_string(line_no) + ": bad score");
    SimilarityPair p{std::string(fields[0]), std::string(fields[1]), score};
    if (lowercase) {
      p.first = detail::lower(p.first);
      p.second = detail::lower(p.second);
    }
    ds.pairs.push_back(std::move(p));
  }
  if (ds.pairs.empty()) throw InputError("similarity dataset is empty");
  return ds;
}

inline SimilarityDataset load_similarity(const std::string& path, bool lowercase = false) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  return load_similarity(in, lowercase, detail::stem(path));
}

// Four tokens per line; lines starting with ':' are section headers.
inline AnalogyDataset load_analogy(std::istream& in, bool lowercase = false, std::string name = "analogy") {
  AnalogyDataset ds{std::move(name), {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = embc::detail::split_ws(line);
    if (fields.empty() || fields[0].front() == ':') continue;
    if (fields.size() != 4) throw InputError("line " + std::to_string(line_no) + ": expected 4 tokens");
    AnalogyQuestion q{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), std::string(fields[3])};
    if (lowercase) {
      q.a = detail::lower(q.a);
      q.a_star = detail::lower(q.a_star);
      q.b = detail::lower(q.b);
      q.b_star = detail::lower(q.b_star);
    }
    ds.questions.push_back(std::move(q));
  }
  if (ds.questions.empty()) throw InputError("analogy dataset is empty");
  return ds;
}

inline AnalogyDataset load_analogy(const std::string& path, bool lowercase = false) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  return load_analogy(in, lowercase, detail::stem(path));
}

struct EvalReport {
  std::string task;
  double metric = 0.0;    // rho for similarity, accuracy for analogy
  double coverage = 0.0;  // answerable / total
  std::size_t count = 0;  // answerable items
  std::size_t total = 0;
};

// Evaluation impossible (nothing answerable); carries the coverage seen.
class EvalError : public InputError {
 public:
  EvalError(const std::string& what, double coverage) : InputError(what), coverage_(coverage) {}
  [[nodiscard]] double coverage() const { return coverage_; }

 private:
  double coverage_;
};

inline EvalReport eval_similarity(const Representation& rep, const SimilarityDataset& ds) {
  std::vector<double> model, human;
  for (const auto& p : ds.pairs) {
    auto i = rep.vocab().find(p.first), j = rep.vocab().find(p.second);
    if (!i || !j) continue;
    model.push_back(rep.cosine(*i, *j));
    human.push_back(p.score);
  }
  const double coverage = ds.pairs.empty() ? 0.0 : static_cast<double>(model.size()) / static_cast<double>(ds.pairs.size());
  if (model.size() < 2) throw EvalError(ds.name + ": fewer than 2 pairs in vocabulary", coverage);
  return {ds.name, spearman(model, human), coverage, model.size(), ds.pairs.size()};
}

enum class AnalogyMethod { add, mul };

inline const char* method_name(AnalogyMethod m) { return m == AnalogyMethod::add ? "add" : "mul"; }

inline constexpr double kMulEpsilon = 0.001;

// Best candidate given cosines of every word to a*, a and b. Ties go to
// the lower vocabulary index; excluded rows are skipped.
template <typename ColA, typename ColB, typename ColC>
std::size_t best_candidate(const ColA& cos_a_star, const ColB& cos_a, const ColC& cos_b,
                           std::span<const std::size_t> exclude, AnalogyMethod method) {
  const auto V = static_cast<std::size_t>(cos_a_star.size());
  std::size_t best = V;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < V; ++c) {
    if (std::find(exclude.begin(), exclude.end(), c) != exclude.end()) continue;
    const auto ci = static_cast<Eigen::Index>(c);
    double score;
    if (method == AnalogyMethod::add) {
      score = cos_a_star(ci) - cos_a(ci) + cos_b(ci);
    } else {
      const double s_star = (cos_a_star(ci) + 1.0) / 2.0;
      const double s_a = (cos_a(ci) + 1.0) / 2.0;
      const double s_b = (cos_b(ci) + 1.0) / 2.0;
      score = s_star * s_b / (s_a + kMulEpsilon);
    }
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  if (best == V) throw InputError("analogy: no candidate outside the query words");
  return best;
}

// "a is to a_star as b is to ?" over the whole vocabulary minus {a, a_star, b}.
inline std::string answer_analogy(const Representation& rep, const std::string& a, const std::string& a_star,
                                  const std::string& b, AnalogyMethod method) {
  const std::array<std::size_t, 3> rows = {rep.vocab().at(a_star), rep.vocab().at(a), rep.vocab().at(b)};
  const Eigen::MatrixXd cos = rep.cosines_to(rows);
  const std::array<std::size_t, 3> exclude = {rows[1], rows[0], rows[2]};
  return rep.vocab()[best_candidate(cos.col(0), cos.col(1), cos.col(2), exclude, method)];
}

// Accuracy for each requested method over the questions whose four words
// are all in the vocabulary.
inline std::vector<EvalReport> eval_analogy(const Representation& rep, const AnalogyDataset& ds,
                                            std::span<const AnalogyMethod> methods) {
  struct Item {
    std::size_t a, a_star, b, b_star;
  };
  std::vector<Item> items;
  for (const auto& q : ds.questions) {
    auto a = rep.vocab().find(q.a), as = rep.vocab().find(q.a_star), b = rep.vocab().find(q.b),
         bs = rep.vocab().find(q.b_star);
    if (a && as && b && bs) items.push_back({*a, *as, *b, *bs});
  }
  const double coverage =
      ds.questions.empty() ? 0.0 : static_cast<double>(items.size()) / static_cast<double>(ds.questions.size());
  if (items.empty()) throw EvalError(ds.name + ": no answerable analogy questions", coverage);

  std::vector<std::size_t> correct(methods.size(), 0);
  constexpr std::size_t kBlock = 128;
  for (std::size_t start = 0; start < items.size(); start += kBlock) {
    const std::size_t end = std::min(start + kBlock, items.size());
    std::vector<std::size_t> rows;
    for (std::size_t q = start; q < end; ++q) {
      rows.push_back(items[q].a_star);
      rows.push_back(items[q].a);
      rows.push_back(items[q].b);
    }
    const Eigen::MatrixXd cos = rep.cosines_to(rows);
    const auto n = static_cast<std::ptrdiff_t>(end - start);
    std::vector<std::vector<char>> hit(methods.size(), std::vector<char>(static_cast<std::size_t>(n), 0));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t qq = 0; qq < n; ++qq) {
      const Item& it = items[start + static_cast<std::size_t>(qq)];
      const auto base = static_cast<Eigen::Index>(3 * qq);
      const std::array<std::size_t, 3> exclude = {it.a, it.a_star, it.b};
      for (std::size_t m = 0; m < methods.size(); ++m) {
        const std::size_t guess = best_candidate(cos.col(base), cos.col(base + 1), cos.col(base + 2), exclude, methods[m]);
        hit[m][static_cast<std::size_t>(qq)] = guess == it.b_star ? 1 : 0;
      }
    }
    for (std::size_t m = 0; m < methods.size(); ++m)
      correct[m] += static_cast<std::size_t>(std::count(hit[m].begin(), hit[m].end(), 1));
  }

  std::vector<EvalReport> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out.push_back({ds.name + "/" + method_name(methods[m]),
                   static_cast<double>(correct[m]) / static_cast<double>(items.size()), coverage, items.size(),
                   ds.questions.size()});
  }
  return out;
}

inline EvalReport eval_analogy(const Representation& rep, const AnalogyDataset& ds, AnalogyMethod method) {
  const std::array<AnalogyMethod, 1> one = {method};
  return eval_analogy(rep, ds, one).front();
}

struct DimensionWords {
  std::size_t dimension = 0;
  float weight = 0.0f;  // the probe word's own code value in this dimension
  std::vector<std::pair<std::string, float>> top;
};

// The n_dims dimensions where `word` is most strongly coded, each with the
// n_words words coded most strongly in that dimension. Only non-zero codes
// are listed.
inline std::vector<DimensionWords> interpret(const SparseEncoding& enc, const std::string& word, std::size_t n_dims,
                                             std::size_t n_words) {
  const auto row = static_cast<Eigen::Index>(enc.vocab.at(word));
  const auto K = enc.codes.cols();
  std::vector<Eigen::Index> dims;
  for (Eigen::Index j = 0; j < K; ++j)
    if (enc.codes(row, j) > 0.0f) dims.push_back(j);
  if (dims.empty()) throw InputError("'" + word + "' is uncoded (all-zero code vector)");
  std::stable_sort(dims.begin(), dims.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return enc.codes(row, a) > enc.codes(row, b); });
  if (dims.size() > n_dims) dims.resize(n_dims);

  std::vector<DimensionWords> out;
  for (Eigen::Index j : dims) {
    std::vector<Eigen::Index> words;
    for (Eigen::Index i = 0; i < enc.codes.rows(); ++i)
      if (enc.codes(i, j) > 0.0f) words.push_back(i);
    const std::size_t keep = std::min(n_words, words.size());
    std::partial_sort(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(keep), words.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        const float va = enc.codes(a, j), vb = enc.codes(b, j);
                        return va > vb || (va == vb && a < b);
                      });
    words.resize(keep);
    DimensionWords dw{static_cast<std::size_t>(j), enc.codes(row, j), {}};
    for (Eigen::Index i : words) dw.top.emplace_back(enc.vocab[static_cast<std::size_t>(i)], enc.codes(i, j));
    out.push_back(std::move(dw));
  }
  return out;
}

// "task<TAB>metric<TAB>coverage<TAB>count"
inline std::string machine_line(const EvalReport& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t", r.metric, r.coverage);
  return r.task + buf + std::to_string(r.count);
}

inline std::string format_table(std::span<const EvalReport> reports) {
  std::size_t width = 4;
  for (const auto& r : reports) width = std::max(width, r.task.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "task" << "  " << std::right << std::setw(8) << "metric"
      << "  " << std::setw(8) << "coverage" << "  " << std::setw(8) << "count" << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.task << "  " << std::right << std::fixed
        << std::setprecision(2) << std::setw(7) << 100.0 * r.metric << "%  " << std::setw(7) << 100.0 * r.coverage
        << "%  " << std::setw(8) << r.count << '\n';
  }
  return out.str();
}

}  // namespace embc::eval
