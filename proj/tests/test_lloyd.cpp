#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "embc/lloyd.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace lloyd = embc::lloyd;

namespace {

std::vector<double> centroids_of(const std::vector<double>& values, const lloyd::LevelTable& t) {
  std::vector<double> sum(t.effective, 0.0), count(t.effective, 0.0);
  for (double v : values) {
    const auto j = t.nearest(v);
    sum[j] += v;
    count[j] += 1;
  }
  for (std::size_t j = 0; j < t.effective; ++j) sum[j] = count[j] > 0 ? sum[j] / count[j] : t.levels[j];
  return sum;
}

// Quantile placement with brute-force nearest assignment, for comparison.
double quantile_baseline_sse(std::vector<double> values, std::size_t n) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> levels;
  for (std::size_t i = 0; i < n; ++i)
    levels.push_back(sorted[std::min(sorted.size() - 1, static_cast<std::size_t>((i + 0.5) * sorted.size() / n))]);
  double sse = 0;
  for (double v : values) {
    double best = std::numeric_limits<double>::infinity();
    for (double l : levels) best = std::min(best, (v - l) * (v - l));
    sse += best;
  }
  return sse;
}

}  // namespace

TEST(FitDimension, ExactClusters) {
  const std::vector<double> v = {1, 1, 5, 5};
  const auto t = lloyd::fit_dimension(std::span<const double>(v), 2);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(t.levels[0], 1.0);
  EXPECT_DOUBLE_EQ(t.levels[1], 5.0);
  EXPECT_DOUBLE_EQ(lloyd::objective(v, t), 0.0);
}

TEST(FitDimension, OneLevelPerDistinctValue) {
  const std::vector<double> v = {0, 1, 2, 3};
  const auto t = lloyd::fit_dimension(std::span<const double>(v), 4);
  EXPECT_EQ(t.levels, (std::vector<double>{0, 1, 2, 3}));
}

TEST(FitDimension, EmptyClusterIsReseeded) {
  // Quantile start gives levels {0, 0, 1}; the middle level starts empty.
  const std::vector<double> v = {0, 0, 0, 0, 0, 0, 1, 2};
  const auto t = lloyd::fit_dimension(std::span<const double>(v), 3);
  EXPECT_EQ(t.effective, 3u);
  EXPECT_EQ(t.levels, (std::vector<double>{0, 1, 2}));
}

TEST(FitDimension, LevelsClampedToDistinctCountAndPadded) {
  const std::vector<double> v = {2, 2, 7, 7, 7};
  const auto t = lloyd::fit_dimension(std::span<const double>(v), 8);
  EXPECT_EQ(t.effective, 2u);
  ASSERT_EQ(t.size(), 8u);
  EXPECT_DOUBLE_EQ(t.levels[0], 2.0);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_DOUBLE_EQ(t.levels[i], 7.0);
  EXPECT_EQ(t.nearest(7.0), 1u);
}

TEST(FitDimension, RejectsEmptyAndNonFinite) {
  const std::vector<double> empty;
  EXPECT_THROW(lloyd::fit_dimension(std::span<const double>(empty), 2), embc::InputError);
  const std::vector<double> bad = {1, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(lloyd::fit_dimension(std::span<const double>(bad), 2), embc::InputError);
  const std::vector<double> inf = {1, std::numeric_limits<double>::infinity()};
  EXPECT_THROW(lloyd::fit_dimension(std::span<const double>(inf), 2), embc::InputError);
}

TEST(FitDimension, TiesGoToLowerLevel) {
  lloyd::LevelTable t{{0.0, 2.0}, 2};
  EXPECT_EQ(t.nearest(1.0), 0u);
  EXPECT_EQ(t.nearest(1.0000001), 1u);
}

TEST(FitDimension, ObjectiveMonotoneAndFixedPoint) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::normal_distribution<double> n01;
    std::vector<double> v(200);
    for (auto& x : v) x = std::exp(n01(rng));  // skewed
    lloyd::FitOptions opt;
    opt.tol = 0;
    opt.max_iters = 1000;
    std::vector<double> trace;
    const auto t = lloyd::fit_dimension(std::span<const double>(v), 5, opt, &trace);
    ASSERT_FALSE(trace.empty());
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] * (1 + 1e-12));
    const double final_obj = lloyd::objective(v, t);
    EXPECT_LE(final_obj, trace.front());
    EXPECT_LE(final_obj, quantile_baseline_sse(v, 5) * (1 + 1e-12));
    const auto c = centroids_of(v, t);
    for (std::size_t j = 0; j < t.effective; ++j) EXPECT_NEAR(c[j], t.levels[j], 1e-9);
    for (std::size_t j = 1; j < t.effective; ++j) EXPECT_LT(t.levels[j - 1], t.levels[j]);
  }
}

TEST(FitDimension, MatchesDynamicProgrammingOptimumOnSeparatedClusters) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    // Three clusters of width 1 separated by gaps of at least 5.
    std::uniform_real_distribution<double> within(0, 1);
    std::vector<double> v;
    const double centers[3] = {0, 6 + within(rng) * 3, 14 + within(rng) * 3};
    for (int i = 0; i < 64; ++i) v.push_back(centers[i % 3] + within(rng));
    const auto t = lloyd::fit_dimension(std::span<const double>(v), 3, {1000, 0});
    EXPECT_NEAR(lloyd::objective(v, t), oracle::kmeans_1d(v, 3), 1e-9);
  }
}

TEST(Quantize, ConstantColumnIsExact) {
  embc::RowMatrixF m(6, 2);
  m << 1.5f, 0.1f, 1.5f, 0.2f, 1.5f, 0.3f, 1.5f, 0.4f, 1.5f, 0.5f, 1.5f, 0.6f;
  const embc::Embedding e(synth::words(6), m);
  const auto q = lloyd::quantize(e, 4);
  EXPECT_EQ(q.tables[0].effective, 1u);
  const auto back = lloyd::dequantize(q);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(back.matrix()(i, 0), 1.5f);
}

TEST(Quantize, ExactWhenLevelsCoverDistinctValues) {
  embc::RowMatrixF m(5, 3);
  m << 0, 1, 2, 1, 1, 2, 0, 3, 4, 1, 3, 2, 0, 1, 4;
  const embc::Embedding e(synth::words(5), m);
  const auto back = lloyd::dequantize(lloyd::quantize(e, 4));
  EXPECT_TRUE(back.matrix() == e.matrix());
}

TEST(Quantize, PayloadIsNineHundredBitsAt300Dimensions) {
  const auto e = synth::gaussian(40, 300, 1);
  const auto q = lloyd::quantize(e, 8);
  EXPECT_EQ(lloyd::bits_per_index(8), 3u);
  EXPECT_EQ(q.payload_bits_per_word(), 900u);
}

TEST(Quantize, StorageIdentity) {
  EXPECT_EQ(lloyd::bits_per_index(1), 0u);
  EXPECT_EQ(lloyd::bits_per_index(2), 1u);
  EXPECT_EQ(lloyd::bits_per_index(5), 3u);
  EXPECT_EQ(lloyd::bits_per_index(16), 4u);
  EXPECT_EQ(lloyd::bits_per_index(17), 5u);
}

TEST(Quantize, NearestLevelAssignment) {
  const auto e = synth::gaussian(300, 6, 9);
  const auto q = lloyd::quantize(e, 8);
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = 0; j < e.dim(); ++j) {
      const double v = e.matrix()(i, j);
      const double chosen = std::abs(v - q.tables[j].levels[q.index(i, j)]);
      for (double l : q.tables[j].levels) EXPECT_LE(chosen, std::abs(v - l));
    }
  }
}

TEST(Quantize, ColumnErrorNoWorseThanQuantileBaseline) {
  const auto e = synth::gaussian(100, 10, 21);
  const auto q = lloyd::quantize(e, 8);
  const auto back = lloyd::dequantize(q);
  for (std::size_t j = 0; j < e.dim(); ++j) {
    std::vector<double> col(e.size());
    double sse = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      col[i] = e.matrix()(i, j);
      const double diff = static_cast<double>(back.matrix()(i, j)) - col[i];
      sse += diff * diff;
    }
    EXPECT_LE(sse, quantile_baseline_sse(col, 8) * (1 + 1e-6) + 1e-10) << "dimension " << j;
  }
}

TEST(Quantize, RequantizingIsIdempotent) {
  const auto e = synth::gaussian(120, 5, 4);
  const auto once = lloyd::dequantize(lloyd::quantize(e, 8, {1000, 0}));
  const auto twice = lloyd::dequantize(lloyd::quantize(once, 8, {1000, 0}));
  EXPECT_TRUE(once.matrix() == twice.matrix());
}

TEST(Dequantize, AllZeroIndicesGiveLowestLevels) {
  const auto e = synth::gaussian(50, 4, 8);
  auto q = lloyd::quantize(e, 4);
  std::fill(q.indices.begin(), q.indices.end(), 0);
  const auto back = lloyd::dequantize(q);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(back.matrix()(i, j), static_cast<float>(q.tables[j].levels[0]));
}

TEST(LqeFile, RoundTripAndLayout) {
  const auto e = synth::gaussian(33, 7, 12);
  const auto q = lloyd::quantize(e, 8);
  std::stringstream buf;
  lloyd::write_lqe(q, buf);
  const std::string bytes = buf.str();
  std::size_t vocab_bytes = 0;
  for (const auto& w : e.vocab().words()) vocab_bytes += 4 + w.size();
  // header + vocabulary + level tables + ceil(7 * 3 / 8) bytes per word
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + 2 + vocab_bytes + 7 * 8 * 4 + 33 * 3);
  EXPECT_EQ(bytes.substr(0, 4), "LQE1");

  const auto back = lloyd::read_lqe(buf);
  EXPECT_EQ(back.vocab, q.vocab);
  EXPECT_EQ(back.indices, q.indices);
  EXPECT_TRUE(lloyd::dequantize(back).matrix() == lloyd::dequantize(q).matrix());
}

TEST(LqeFile, SingleLevelHasNoIndexBytes) {
  const auto e = synth::gaussian(10, 3, 1);
  const auto q = lloyd::quantize(e, 1);
  std::stringstream buf;
  lloyd::write_lqe(q, buf);
  const auto back = lloyd::dequantize(lloyd::read_lqe(buf));
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 1; i < 10; ++i) EXPECT_EQ(back.matrix()(i, j), back.matrix()(0, j));
}

TEST(LqeFile, TruncatedStreamRejected) {
  const auto q = lloyd::quantize(synth::gaussian(10, 3, 1), 4);
  std::stringstream buf;
  lloyd::write_lqe(q, buf);
  std::stringstream cut(buf.str().substr(0, buf.str().size() - 1));
  EXPECT_THROW(lloyd::read_lqe(cut), embc::InputError);
}
