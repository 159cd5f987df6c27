#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "embc/wta.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace wta = embc::wta;
using wta::Matrix;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

std::vector<double> half_normal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> v(n);
  for (auto& x : v) x = std::abs(n01(rng));
  return v;
}

wta::ModelParams toy_params(std::size_t d, std::size_t hidden, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = wta::ModelParams::initialize(d, hidden, k, rng);
  // Non-trivial gain, shift and biases so every term of the gradient is exercised.
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto t : {wta::kHiddenBias, wta::kCodeBias, wta::kNormShift, wta::kDictionaryBias})
    for (Eigen::Index i = 0; i < p.tensors[t].size(); ++i) p.tensors[t].data()[i] = u(rng);
  for (Eigen::Index i = 0; i < p.tensors[wta::kNormGain].size(); ++i) p.tensors[wta::kNormGain].data()[i] += u(rng);
  return p;
}

}  // namespace

TEST(Hurdle, SingleLargeValue) {
  std::vector<double> v(16, 0.0);
  v[9] = 1.0;
  const auto h = wta::top_alpha_hurdle(v, 0.0675, 5);
  EXPECT_FALSE(h.degenerate);
  EXPECT_GT(h.value, 0.0625);
  EXPECT_LT(h.value, 1.0);
  EXPECT_NEAR(h.value, 0.091796875, 1e-15);
  EXPECT_DOUBLE_EQ(oracle::fraction_above_sorted(v, h.value), 1.0 / 16);
}

TEST(Hurdle, ConstantColumnIsDegenerate) {
  const std::vector<double> v(10, 0.4);
  const auto h = wta::top_alpha_hurdle(v, 0.1, 5);
  EXPECT_TRUE(h.degenerate);
  EXPECT_DOUBLE_EQ(oracle::fraction_above_sorted(v, h.value), 0.0);
}

TEST(Hurdle, LowerBracketNeverNegative) {
  const std::vector<double> v = {-5, -4, -3, -2, -1, 0.5};
  const auto h = wta::top_alpha_hurdle(v, 0.3, 10);
  EXPECT_GE(h.value, 0.0);
}

TEST(Hurdle, HalfNormalFractionNearTarget) {
  std::mt19937_64 rng(2024);
  for (double alpha : {0.015, 0.0675}) {
    int inside = 0;
    for (int trial = 0; trial < 30; ++trial) {
      const auto v = half_normal(16384, rng);
      const auto h = wta::top_alpha_hurdle(v, alpha, 5);
      const double frac = oracle::fraction_above_sorted(v, h.value);
      std::size_t count = 0;
      for (double x : v) count += x > h.value;
      EXPECT_DOUBLE_EQ(frac, static_cast<double>(count) / v.size());
      inside += (frac >= 0.67 * alpha && frac <= 1.5 * alpha);
    }
    EXPECT_GE(inside, 28) << "alpha " << alpha;
  }
}

TEST(Hurdle, MoreIterationsConverge) {
  std::mt19937_64 rng(8);
  const auto v = half_normal(16384, rng);
  const auto h = wta::top_alpha_hurdle(v, 0.0675, 20);
  EXPECT_NEAR(oracle::fraction_above_sorted(v, h.value), 0.0675, 1e-3);
}

TEST(Sparsify, SurvivorsPassThroughUnchanged) {
  const Matrix batch = random_matrix(64, 6, 1).cwiseAbs();
  const auto s = wta::wta_sparsify(batch, 0.1, 5);
  for (Eigen::Index j = 0; j < 6; ++j) {
    for (Eigen::Index i = 0; i < 64; ++i) {
      const bool alive = batch(i, j) > s.hurdles[j];
      EXPECT_EQ(s.mask(i, j), alive);
      EXPECT_EQ(s.values(i, j), alive ? batch(i, j) : 0.0);
    }
  }
}

TEST(Sparsify, ZeroColumnStaysZero) {
  Matrix batch = random_matrix(32, 3, 2).cwiseAbs();
  batch.col(1).setZero();
  const auto s = wta::wta_sparsify(batch, 0.2, 5);
  EXPECT_EQ(s.degenerate_columns, 1u);
  EXPECT_TRUE(s.values.col(1).isZero());
  EXPECT_GT(s.mask.col(0).count(), 0);
}

TEST(Sparsify, HalfOfAUniformColumn) {
  Matrix batch(100, 1);
  for (int i = 0; i < 100; ++i) batch(i, 0) = i + 1;
  const auto s = wta::wta_sparsify(batch, 0.5, 30);
  EXPECT_NEAR(static_cast<double>(s.mask.count()), 50.0, 1.0);
}

TEST(Schedule, Values) {
  const auto s0 = wta::ScheduleState::at(0.0, 0.0675);
  EXPECT_DOUBLE_EQ(s0.alpha_t, 0.5);
  EXPECT_DOUBLE_EQ(s0.beta_t, 0.2);
  const auto s = wta::ScheduleState::at(0.46, 0.0675);
  const double w = std::exp(-4.6);
  EXPECT_NEAR(s.alpha_t, 0.5 * w + 0.0675 * (1 - w), 1e-15);
  EXPECT_NEAR(s.alpha_t, 0.071848, 1e-6);
  EXPECT_NEAR(s.beta_t, 0.2 * std::exp(-0.0046), 1e-15);
}

TEST(Schedule, ErrorGate) {
  wta::TrainConfig cfg;
  const auto s0 = wta::ScheduleState::at(0.0, cfg.alpha);
  EXPECT_DOUBLE_EQ(wta::schedule_update(s0, 0.02, cfg).sigma, 0.0);
  EXPECT_DOUBLE_EQ(wta::schedule_update(s0, 0.01, cfg).sigma, 0.0);
  EXPECT_DOUBLE_EQ(wta::schedule_update(s0, 0.009, cfg).sigma, 0.01);
}

TEST(Schedule, MonotoneTowardTarget) {
  double prev_alpha = 1, prev_beta = 1;
  for (int i = 0; i <= 500; ++i) {
    const auto s = wta::ScheduleState::at(i * 0.01, 0.0675);
    EXPECT_LE(s.alpha_t, prev_alpha + 1e-15);
    EXPECT_LE(s.beta_t, prev_beta + 1e-15);
    EXPECT_GE(s.alpha_t, 0.0675);
    EXPECT_LE(s.alpha_t, 0.5);
    EXPECT_GT(s.beta_t, 0.0);
    prev_alpha = s.alpha_t;
    prev_beta = s.beta_t;
  }
  EXPECT_NEAR(wta::ScheduleState::at(5.0, 0.0675).alpha_t, 0.0675, 1e-4);
}

TEST(Loss, Examples) {
  EXPECT_DOUBLE_EQ(wta::loss(Matrix::Zero(2, 2), Matrix::Ones(2, 2)), 1.0);
  const Matrix a = random_matrix(3, 4, 1);
  EXPECT_DOUBLE_EQ(wta::loss(a, a), 0.0);
  Matrix x(1, 2);
  x << 1, 2;
  EXPECT_DOUBLE_EQ(wta::loss(x, Matrix::Zero(1, 2)), 2.5);
  EXPECT_THROW(wta::loss(x, Matrix::Zero(2, 1)), embc::InputError);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Matrix p = random_matrix(3, 3, 1), m = Matrix::Zero(3, 3), v = Matrix::Zero(3, 3);
  const Matrix before = p;
  wta::adam_update(p, Matrix::Zero(3, 3), m, v, 1, {});
  EXPECT_TRUE(p == before);
}

TEST(Adam, FirstStepMovesByStepSize) {
  Matrix p = Matrix::Zero(1, 1), m = Matrix::Zero(1, 1), v = Matrix::Zero(1, 1);
  wta::adam_update(p, Matrix::Ones(1, 1), m, v, 1, {});
  EXPECT_NEAR(p(0, 0), -1e-3 / (1 + 1e-8), 1e-15);
}

TEST(Adam, MatchesElementwiseOracle) {
  Matrix p = random_matrix(4, 5, 2), m = Matrix::Zero(4, 5), v = Matrix::Zero(4, 5);
  std::vector<double> q(p.data(), p.data() + p.size());
  oracle::AdamOracle ref;
  for (long step = 1; step <= 10; ++step) {
    const Matrix g = random_matrix(4, 5, 100 + static_cast<std::uint64_t>(step));
    wta::adam_update(p, g, m, v, step, {});
    ref.step(q, std::vector<double>(g.data(), g.data() + g.size()));
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p.data()[i], q[static_cast<std::size_t>(i)], 1e-12);
}

TEST(Forward, ZeroWeightsReconstructDictionaryBias) {
  auto p = wta::ModelParams::zeros(4, 8, 16);
  p.tensors[wta::kDictionaryBias] << 1, 2, 3, 4;
  const auto s = wta::ScheduleState::at(0.0, 0.1);
  const auto r = wta::forward(p, random_matrix(10, 4, 3), s, wta::Mode::infer);
  EXPECT_TRUE(r.codes.isZero());
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_TRUE(r.recon.row(i).isApprox(p.tensors[wta::kDictionaryBias].row(0)));
}

TEST(Forward, ShapesAndNonNegativity) {
  const auto p = toy_params(4, 8, 16, 1);
  const auto s = wta::ScheduleState::at(0.0, 0.1);
  std::mt19937_64 rng(1);
  for (Eigen::Index rows : {2, 16384}) {
    const auto r = wta::forward(p, random_matrix(rows, 4, 5), s, wta::Mode::train, &rng);
    EXPECT_EQ(r.codes.rows(), rows);
    EXPECT_EQ(r.codes.cols(), 16);
    EXPECT_EQ(r.recon.rows(), rows);
    EXPECT_EQ(r.recon.cols(), 4);
    EXPECT_GE(r.codes.minCoeff(), 0.0);
  }
  EXPECT_THROW(wta::forward(p, random_matrix(1, 4, 5), s, wta::Mode::train, &rng), embc::InputError);
  EXPECT_THROW(wta::forward(p, random_matrix(3, 5, 5), s, wta::Mode::infer), embc::InputError);
}

TEST(Forward, InferIsDeterministicAndTrainIsSeeded) {
  const auto p = toy_params(4, 8, 16, 2);
  const auto s = wta::ScheduleState::at(0.1, 0.1);
  const Matrix x = random_matrix(40, 4, 6);
  EXPECT_TRUE(wta::forward(p, x, s, wta::Mode::infer).codes == wta::forward(p, x, s, wta::Mode::infer).codes);
  std::mt19937_64 a(3), b(3);
  EXPECT_TRUE(wta::forward(p, x, s, wta::Mode::train, &a).codes == wta::forward(p, x, s, wta::Mode::train, &b).codes);
}

TEST(BatchNorm, TrainModeNormalizesColumns) {
  const auto p = toy_params(3, 6, 5, 4);
  const auto s = wta::ScheduleState::at(0.0, 0.1);
  const Matrix x = random_matrix(64, 3, 7, 5.0);
  const auto c = wta::forward_cached(p, x, s, wta::Mode::train, nullptr, {5, 1e-5, false, nullptr});
  for (Eigen::Index j = 0; j < 5; ++j) {
    const auto col = c.normalized.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(var, c.batch_var(j) / (c.batch_var(j) + 1e-5), 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(GradientCheck, FullStack) {
  const auto p = toy_params(3, 5, 6, 11);
  const auto s = wta::ScheduleState::at(0.0, 0.1);
  const auto r = wta::gradient_check(p, random_matrix(8, 3, 12), s);
  for (std::size_t t = 0; t < wta::kTensorCount; ++t) EXPECT_LE(r.per_tensor[t], 1e-4) << wta::kTensorNames[t];
}

TEST(GradientCheck, AllRectifiersOpen) {
  auto p = toy_params(3, 5, 6, 13);
  p.tensors[wta::kHiddenBias].array() += 10.0;
  p.tensors[wta::kNormShift].array() += 10.0;
  const auto s = wta::ScheduleState::at(0.0, 0.1);
  const auto r = wta::gradient_check(p, random_matrix(8, 3, 14), s);
  for (std::size_t t = 0; t < wta::kTensorCount; ++t) EXPECT_LE(r.per_tensor[t], 1e-4) << wta::kTensorNames[t];
}

TEST(GradientCheck, ZeroInput) {
  const auto p = toy_params(3, 5, 6, 15);
  const auto s = wta::ScheduleState::at(0.0, 0.1);
  const auto r = wta::gradient_check(p, Matrix::Zero(8, 3), s);
  EXPECT_LE(r.max_relative, 1e-4) << r.worst_tensor;
}

TEST(Train, SmallRunIsDeterministicAndNonNegative) {
  const auto e = synth::factor_model(96, 6, 4, 3);
  wta::TrainConfig cfg;
  cfg.k = 16;
  cfg.alpha = 0.2;
  cfg.hidden_mult = 2;
  cfg.batch_size = 32;
  cfg.epochs = 6;
  cfg.seed = 5;
  std::size_t callbacks = 0;
  const auto a = wta::train(e, cfg, [&](const wta::EpochLog&) { ++callbacks; });
  const auto b = wta::train(e, cfg);
  EXPECT_EQ(callbacks, 6u);
  ASSERT_EQ(a.log.size(), 6u);
  EXPECT_TRUE(a.encoding.codes == b.encoding.codes);
  EXPECT_GE(a.encoding.codes.minCoeff(), 0.0f);
  EXPECT_EQ(a.encoding.code_dim(), 16u);
  EXPECT_TRUE(a.encoding.reconstruct().matrix().isApprox(a.reconstruction.matrix(), 1e-5f));
}

TEST(Train, ErrorDecreases) {
  const auto e = synth::factor_model(256, 8, 5, 4);
  wta::TrainConfig cfg;
  cfg.k = 32;
  cfg.alpha = 0.1;
  cfg.hidden_mult = 4;
  cfg.batch_size = 64;
  cfg.epochs = 40;
  const auto r = wta::train(e, cfg);
  EXPECT_LT(r.log.back().mean_error, 0.5 * r.log.front().mean_error);
}

TEST(Train, StopSigmaEndsEarly) {
  const auto e = synth::factor_model(64, 4, 3, 1);
  wta::TrainConfig cfg;
  cfg.k = 8;
  cfg.alpha = 0.2;
  cfg.hidden_mult = 2;
  cfg.batch_size = 64;
  cfg.epochs = 50;
  cfg.error_threshold = 1e9;  // every epoch passes the gate
  cfg.stop_sigma = 0.05;
  const auto r = wta::train(e, cfg);
  EXPECT_EQ(r.log.size(), 5u);
  EXPECT_NEAR(r.schedule.sigma, 0.05, 1e-12);
}

TEST(Train, RejectsBadConfig) {
  const auto e = synth::gaussian(10, 3, 1);
  wta::TrainConfig cfg;
  cfg.alpha = 0.6;
  EXPECT_THROW(wta::train(e, cfg), embc::InputError);
  cfg.alpha = 0.1;
  cfg.batch_size = 1;
  EXPECT_THROW(wta::train(e, cfg), embc::InputError);
}

TEST(Chunks, BalancedSplit) {
  const auto c = wta::detail::balanced_chunks(10, 4);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], (std::pair<std::size_t, std::size_t>{0, 4}));
  EXPECT_EQ(c[1], (std::pair<std::size_t, std::size_t>{4, 7}));
  EXPECT_EQ(c[2], (std::pair<std::size_t, std::size_t>{7, 10}));
}

TEST(Checkpoint, RoundTrip) {
  wta::Checkpoint ck;
  ck.config.k = 6;
  ck.config.hidden_mult = 2;
  ck.config.seed = 77;
  ck.schedule = wta::ScheduleState::at(0.3, ck.config.alpha);
  ck.params = toy_params(3, 6, 6, 21);
  ck.params.running_mean = random_matrix(1, 6, 1);
  std::stringstream first;
  wta::write_checkpoint(ck, first);
  const auto back = wta::read_checkpoint(first);
  EXPECT_EQ(back.config.seed, 77u);
  EXPECT_DOUBLE_EQ(back.schedule.alpha_t, ck.schedule.alpha_t);
  for (std::size_t t = 0; t < wta::kTensorCount; ++t)
    EXPECT_TRUE(back.params.tensors[t].isApprox(ck.params.tensors[t].cast<float>().cast<double>(), 0.0));
  std::stringstream second;
  wta::write_checkpoint(back, second);
  EXPECT_EQ(first.str(), second.str());
  std::stringstream bad(first.str().substr(0, 40));
  EXPECT_THROW(wta::read_checkpoint(bad), embc::InputError);
}
