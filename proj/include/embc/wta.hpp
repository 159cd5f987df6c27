#pragma once

// Sparse non-negative autoencoder with per-dimension winner-take-all
// sparsification over each minibatch.
//
//   x -> relu(x Wh + bh) -> (. Wl + bl) -> batchnorm -> relu -> + N(0, beta_t)
//     -> keep top alpha_t of each code column -> codes -> codes D + bD
//
// Backpropagation is written out by hand; gradient_check() compares it to
// central finite differences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "embc/binary_io.hpp"
#include "embc/embedding.hpp"
#include "embc/error.hpp"
#include "embc/sparse_encoding.hpp"

namespace embc::wta {

using Matrix = Eigen::MatrixXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct AdamSettings {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t k = 1024;
  double alpha = 0.0675;
  std::size_t hidden_mult = 8;
  std::size_t batch_size = 16384;
  int bisect_iters = 5;
  double sigma_step = 0.01;
  double error_threshold = 0.01;
  std::size_t epochs = 1000;
  AdamSettings adam;
  std::uint64_t seed = 1;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;
  // When positive, training ends after the first epoch at which sigma
  // reaches this value. Zero runs all `epochs`.
  double stop_sigma = 0.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 0.5)) throw InputError("alpha must lie in (0, 0.5)");
    if (k == 0) throw InputError("k must be positive");
    if (batch_size < 2) throw InputError("batch_size must be > 1");
    if (hidden_mult == 0) throw InputError("hidden_mult must be positive");
    if (bisect_iters < 0) throw InputError("bisect_iters must be >= 0");
  }
};

// Annealing state: sigma grows by sigma_step after each epoch whose mean
// error is below error_threshold; alpha_t and beta_t follow from it.
struct ScheduleState {
  double sigma = 0.0;
  double alpha_t = 0.5;
  double beta_t = 0.2;

  static ScheduleState at(double sigma, double alpha) {
    const double w = std::exp(-10.0 * sigma);
    return {sigma, 0.5 * w + alpha * (1.0 - w), 0.2 * std::exp(-0.01 * sigma)};
  }
};

inline ScheduleState schedule_update(const ScheduleState& state, double epoch_mean_error, const TrainConfig& cfg) {
  double sigma = state.sigma;
  if (epoch_mean_error < cfg.error_threshold) sigma += cfg.sigma_step;
  return ScheduleState::at(sigma, cfg.alpha);
}

struct Hurdle {
  double value = 0.0;
  bool degenerate = false;  // column is constant; nothing exceeds the hurdle
};

// Fixed-iteration bisection for the value above which `alpha` of the
// column lies, bracketed by [mean, max]. Entries strictly greater than the
// returned value survive. The lower bracket never goes below zero, so a
// noisy column cannot let negative entries through.
inline Hurdle top_alpha_hurdle(std::span<const double> column, double alpha, int iters) {
  if (column.empty()) throw InputError("top_alpha_hurdle: empty column");
  const double n = static_cast<double>(column.size());
  const auto [min_it, max_it] = std::minmax_element(column.begin(), column.end());
  double hi = *max_it;
  double lo = std::max(0.0, std::accumulate(column.begin(), column.end(), 0.0) / n);
  if (*min_it == hi || !(lo < hi)) return {hi, true};
  double h = hi;
  for (int it = 0; it < iters; ++it) {
    h = 0.5 * (lo + hi);
    std::size_t above = 0;
    for (double v : column) above += v > h ? 1u : 0u;
    if (static_cast<double>(above) / n > alpha) lo = h;
    else hi = h;
  }
  return {h, false};
}

struct Sparsified {
  Matrix values;
  Mask mask;
  std::vector<double> hurdles;
  std::size_t degenerate_columns = 0;
};

// Zeroes every entry at or below its column's hurdle; survivors pass
// through unchanged.
inline Sparsified wta_sparsify(const Matrix& batch, double alpha_t, int iters) {
  Sparsified out;
  out.values = Matrix::Zero(batch.rows(), batch.cols());
  out.mask = Mask::Constant(batch.rows(), batch.cols(), false);
  out.hurdles.resize(static_cast<std::size_t>(batch.cols()));
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    std::span<const double> column(batch.col(j).data(), static_cast<std::size_t>(batch.rows()));
    const Hurdle h = top_alpha_hurdle(column, alpha_t, iters);
    out.hurdles[static_cast<std::size_t>(j)] = h.value;
    if (h.degenerate) {
      ++out.degenerate_columns;
      continue;
    }
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
      if (batch(i, j) > h.value) {
        out.mask(i, j) = true;
        out.values(i, j) = batch(i, j);
      }
    }
  }
  return out;
}

// Trainable tensors, in checkpoint order.
enum Tensor : std::size_t {
  kHiddenWeight,    // d x hidden
  kHiddenBias,      // 1 x hidden
  kCodeWeight,      // hidden x k
  kCodeBias,        // 1 x k
  kNormGain,        // 1 x k
  kNormShift,       // 1 x k
  kDictionary,      // k x d
  kDictionaryBias,  // 1 x d
  kTensorCount
};

inline constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
    "hidden_weight", "hidden_bias", "code_weight", "code_bias",
    "norm_gain",     "norm_shift",  "dictionary",  "dictionary_bias"};

using TensorSet = std::array<Matrix, kTensorCount>;

struct ModelParams {
  TensorSet tensors;
  Matrix running_mean;  // 1 x k
  Matrix running_var;   // 1 x k

  [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(tensors[kHiddenWeight].rows()); }
  [[nodiscard]] std::size_t hidden_dim() const { return static_cast<std::size_t>(tensors[kHiddenWeight].cols()); }
  [[nodiscard]] std::size_t code_dim() const { return static_cast<std::size_t>(tensors[kCodeWeight].cols()); }

  static ModelParams zeros(std::size_t d, std::size_t hidden, std::size_t k) {
    const auto D = static_cast<Eigen::Index>(d), H = static_cast<Eigen::Index>(hidden),
               K = static_cast<Eigen::Index>(k);
    ModelParams p;
    p.tensors[kHiddenWeight] = Matrix::Zero(D, H);
    p.tensors[kHiddenBias] = Matrix::Zero(1, H);
    p.tensors[kCodeWeight] = Matrix::Zero(H, K);
    p.tensors[kCodeBias] = Matrix::Zero(1, K);
    p.tensors[kNormGain] = Matrix::Zero(1, K);
    p.tensors[kNormShift] = Matrix::Zero(1, K);
    p.tensors[kDictionary] = Matrix::Zero(K, D);
    p.tensors[kDictionaryBias] = Matrix::Zero(1, D);
    p.running_mean = Matrix::Zero(1, K);
    p.running_var = Matrix::Ones(1, K);
    return p;
  }

  // Weights uniform in +-1/sqrt(fan_in); biases and shift zero; gain one.
  static ModelParams initialize(std::size_t d, std::size_t hidden, std::size_t k, std::mt19937_64& rng) {
    ModelParams p = zeros(d, hidden, k);
    auto fill = [&rng](Matrix& m, double fan_in) {
      const double bound = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    };
    fill(p.tensors[kHiddenWeight], static_cast<double>(d));
    fill(p.tensors[kCodeWeight], static_cast<double>(hidden));
    fill(p.tensors[kDictionary], static_cast<double>(k));
    p.tensors[kNormGain].setOnes();
    return p;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.allFinite()) return false;
    return running_mean.allFinite() && running_var.allFinite();
  }
};

enum class Mode { train, infer };

struct ForwardOptions {
  int bisect_iters = 5;
  double bn_epsilon = 1e-5;
  bool noise = true;                  // train mode only
  const Mask* frozen_mask = nullptr;  // replaces the WTA selection when set
};

// Every intermediate needed by backward().
struct ForwardCache {
  Matrix input;
  Matrix hidden_pre, hidden;
  Matrix code_pre;
  Eigen::RowVectorXd batch_mean, batch_var, inv_std;
  Matrix normalized, norm_out;
  Matrix noisy;  // rectified plus noise
  Mask mask;
  Matrix codes, recon;
  std::vector<double> hurdles;
  std::size_t degenerate_columns = 0;
};

inline ForwardCache forward_cached(const ModelParams& p, const Matrix& batch, const ScheduleState& state, Mode mode,
                                   std::mt19937_64* rng, const ForwardOptions& opt = {}) {
  if (static_cast<std::size_t>(batch.cols()) != p.input_dim()) throw InputError("forward: batch width != d");
  const auto& t = p.tensors;
  ForwardCache c;
  c.input = batch;
  c.hidden_pre = batch * t[kHiddenWeight];
  c.hidden_pre.rowwise() += t[kHiddenBias].row(0);
  c.hidden = c.hidden_pre.cwiseMax(0.0);
  c.code_pre = c.hidden * t[kCodeWeight];
  c.code_pre.rowwise() += t[kCodeBias].row(0);

  const double rows = static_cast<double>(batch.rows());
  if (mode == Mode::train) {
    if (batch.rows() < 2) throw InputError("forward: train mode needs at least 2 rows");
    c.batch_mean = c.code_pre.colwise().mean();
    c.batch_var = (c.code_pre.rowwise() - c.batch_mean).array().square().colwise().sum().matrix() / rows;
  } else {
    c.batch_mean = p.running_mean.row(0);
    c.batch_var = p.running_var.row(0);
  }
  c.inv_std = (c.batch_var.array() + opt.bn_epsilon).rsqrt().matrix();
  c.normalized = (c.code_pre.rowwise() - c.batch_mean).array().rowwise() * c.inv_std.array();
  c.norm_out = c.normalized.array().rowwise() * t[kNormGain].row(0).array();
  c.norm_out.rowwise() += t[kNormShift].row(0);

  c.noisy = c.norm_out.cwiseMax(0.0);
  if (mode == Mode::train && opt.noise && state.beta_t > 0.0) {
    if (rng == nullptr) throw InputError("forward: train-mode noise needs an rng");
    std::normal_distribution<double> noise(0.0, state.beta_t);
    for (Eigen::Index i = 0; i < c.noisy.size(); ++i) c.noisy.data()[i] += noise(*rng);
  }

  if (opt.frozen_mask != nullptr) {
    c.mask = *opt.frozen_mask;
    c.codes = c.mask.select(c.noisy, 0.0);
  } else {
    Sparsified s = wta_sparsify(c.noisy, state.alpha_t, opt.bisect_iters);
    c.mask = std::move(s.mask);
    c.codes = std::move(s.values);
    c.hurdles = std::move(s.hurdles);
    c.degenerate_columns = s.degenerate_columns;
  }
  c.recon = c.codes * t[kDictionary];
  c.recon.rowwise() += t[kDictionaryBias].row(0);

  if (!c.recon.allFinite() || !c.codes.allFinite())
    throw NumericError("forward: non-finite activations (max |code_pre| = " +
                       std::to_string(c.code_pre.cwiseAbs().maxCoeff()) + ")");
  return c;
}

struct ForwardResult {
  Matrix codes;
  Matrix recon;
};

inline ForwardResult forward(const ModelParams& p, const Matrix& batch, const ScheduleState& state, Mode mode,
                             std::mt19937_64* rng = nullptr, const ForwardOptions& opt = {}) {
  ForwardCache c = forward_cached(p, batch, state, mode, rng, opt);
  return {std::move(c.codes), std::move(c.recon)};
}

// Mean squared error over every element.
inline double loss(const Matrix& recon, const Matrix& target) {
  if (recon.rows() != target.rows() || recon.cols() != target.cols()) throw InputError("loss: shape mismatch");
  return (recon - target).squaredNorm() / static_cast<double>(recon.size());
}

// Gradients of loss(recon, target) for a train-mode forward pass. The WTA
// mask passes gradient to surviving entries only; noise is additive.
inline TensorSet backward(const ModelParams& p, const ForwardCache& c, const Matrix& target) {
  const auto& t = p.tensors;
  const double rows = static_cast<double>(c.input.rows());
  TensorSet g;

  const Matrix d_recon = (c.recon - target) * (2.0 / static_cast<double>(c.recon.size()));
  g[kDictionary] = c.codes.transpose() * d_recon;
  g[kDictionaryBias] = d_recon.colwise().sum();

  Matrix d_codes = d_recon * t[kDictionary].transpose();
  Matrix d_norm_out = (c.mask && (c.norm_out.array() > 0.0)).select(d_codes, 0.0);

  g[kNormGain] = (d_norm_out.array() * c.normalized.array()).colwise().sum().matrix();
  g[kNormShift] = d_norm_out.colwise().sum();

  const Eigen::ArrayXXd d_normalized = d_norm_out.array().rowwise() * t[kNormGain].row(0).array();
  const Eigen::RowVectorXd sum_d = d_normalized.colwise().sum().matrix();
  const Eigen::RowVectorXd sum_d_norm = (d_normalized * c.normalized.array()).colwise().sum().matrix();
  Eigen::ArrayXXd d_code_pre = d_normalized * rows;
  d_code_pre.rowwise() -= sum_d.array();
  d_code_pre -= c.normalized.array().rowwise() * sum_d_norm.array();
  d_code_pre.rowwise() *= (c.inv_std.array() / rows);

  g[kCodeWeight] = c.hidden.transpose() * d_code_pre.matrix();
  g[kCodeBias] = d_code_pre.colwise().sum().matrix();

  Matrix d_hidden = d_code_pre.matrix() * t[kCodeWeight].transpose();
  Matrix d_hidden_pre = (c.hidden_pre.array() > 0.0).select(d_hidden, 0.0);
  g[kHiddenWeight] = c.input.transpose() * d_hidden_pre;
  g[kHiddenBias] = d_hidden_pre.colwise().sum();
  return g;
}

// One bias-corrected Adam update of a single tensor.
inline void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, long step,
                        const AdamSettings& s) {
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  param.array() -= s.step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
}

class Adam {
 public:
  Adam(const ModelParams& p, AdamSettings settings) : settings_(settings) {
    for (std::size_t i = 0; i < kTensorCount; ++i) {
      m_[i] = Matrix::Zero(p.tensors[i].rows(), p.tensors[i].cols());
      v_[i] = m_[i];
    }
  }

  void step(ModelParams& p, const TensorSet& grads) {
    ++step_;
    for (std::size_t i = 0; i < kTensorCount; ++i) adam_update(p.tensors[i], grads[i], m_[i], v_[i], step_, settings_);
  }

  [[nodiscard]] long steps() const { return step_; }

 private:
  AdamSettings settings_;
  TensorSet m_, v_;
  long step_ = 0;
};

struct GradientCheckResult {
  double max_relative = 0.0;
  std::string worst_tensor;
  std::array<double, kTensorCount> per_tensor{};
};

// Analytic gradients against central differences with the WTA mask frozen
// at the one chosen by an unperturbed train-mode pass, noise off. Per-tensor
// deviation is max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
inline GradientCheckResult gradient_check(const ModelParams& params, const Matrix& batch,
                                          const ScheduleState& state, double step = 1e-4,
                                          ForwardOptions opt = {}) {
  opt.noise = false;
  opt.frozen_mask = nullptr;
  const ForwardCache base = forward_cached(params, batch, state, Mode::train, nullptr, opt);
  const TensorSet analytic = backward(params, base, batch);
  const Mask mask = base.mask;
  opt.frozen_mask = &mask;

  GradientCheckResult result;
  ModelParams probe = params;
  for (std::size_t ti = 0; ti < kTensorCount; ++ti) {
    Matrix& tensor = probe.tensors[ti];
    double max_diff = 0.0, scale = 1e-6;
    for (Eigen::Index e = 0; e < tensor.size(); ++e) {
      const double saved = tensor.data()[e];
      tensor.data()[e] = saved + step;
      const double up = loss(forward_cached(probe, batch, state, Mode::train, nullptr, opt).recon, batch);
      tensor.data()[e] = saved - step;
      const double down = loss(forward_cached(probe, batch, state, Mode::train, nullptr, opt).recon, batch);
      tensor.data()[e] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[ti].data()[e];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    const double rel = max_diff / scale;
    result.per_tensor[ti] = rel;
    if (rel >= result.max_relative) {
      result.max_relative = rel;
      result.worst_tensor = std::string(kTensorNames[ti]);
    }
  }
  return result;
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_error = 0.0;
  double sigma = 0.0;
  double alpha_t = 0.0;
  double beta_t = 0.0;
  double sparsity = 0.0;  // mean fraction of non-zero codes over the epoch's batches
};

// Thrown when the loss stops being finite; carries the parameters from the
// end of the last complete epoch.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, ModelParams last_good, std::size_t epoch)
      : NumericError(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  [[nodiscard]] const ModelParams& last_good() const { return last_good_; }
  [[nodiscard]] std::size_t epoch() const { return epoch_; }

 private:
  ModelParams last_good_;
  std::size_t epoch_;
};

namespace detail {

inline Matrix gather_rows(const RowMatrixF& source, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  return out;
}

// Splits [0, n) into ceil(n / max_size) contiguous chunks of near-equal size.
inline std::vector<std::pair<std::size_t, std::size_t>> balanced_chunks(std::size_t n, std::size_t max_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n == 0) return out;
  const std::size_t count = (n + max_size - 1) / max_size;
  std::size_t begin = 0;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t size = n / count + (c < n % count ? 1 : 0);
    out.emplace_back(begin, begin + size);
    begin += size;
  }
  return out;
}

}  // namespace detail

struct Encoded {
  SparseEncoding encoding;
  Embedding reconstruction;
};

// Inference pass: noise off, running batch-norm statistics, WTA at the
// schedule's alpha_t over vocabulary-order chunks of at most batch_size.
inline Encoded encode_embedding(const ModelParams& p, const Embedding& e, const ScheduleState& state,
                                std::size_t batch_size, int bisect_iters = 5, double bn_epsilon = 1e-5) {
  if (e.dim() != p.input_dim()) throw InputError("embedding dimensionality does not match the model");
  const auto V = static_cast<Eigen::Index>(e.size());
  const auto K = static_cast<Eigen::Index>(p.code_dim());
  const auto D = static_cast<Eigen::Index>(e.dim());
  RowMatrixF codes(V, K), recon(V, D);
  ForwardOptions opt;
  opt.bisect_iters = bisect_iters;
  opt.bn_epsilon = bn_epsilon;
  for (auto [begin, end] : detail::balanced_chunks(e.size(), std::max<std::size_t>(batch_size, 2))) {
    const auto b = static_cast<Eigen::Index>(begin), n = static_cast<Eigen::Index>(end - begin);
    const Matrix batch = e.matrix().middleRows(b, n).cast<double>();
    ForwardResult r = forward(p, batch, state, Mode::infer, nullptr, opt);
    codes.middleRows(b, n) = r.codes.cast<float>();
    recon.middleRows(b, n) = r.recon.cast<float>();
  }
  SparseEncoding enc{e.vocab(), std::move(codes), p.tensors[kDictionary].cast<float>(),
                     p.tensors[kDictionaryBias].row(0).cast<float>()};
  return {std::move(enc), Embedding(e.vocab(), std::move(recon))};
}

struct TrainResult {
  SparseEncoding encoding;
  Embedding reconstruction;
  ModelParams params;
  ScheduleState schedule;
  std::vector<EpochLog> log;
};

inline TrainResult train(const Embedding& e, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  const std::size_t V = e.size(), d = e.dim();
  const std::size_t batch_size = std::min(cfg.batch_size, V);
  if (batch_size < 2) throw InputError("train: need at least 2 words");

  std::mt19937_64 rng(cfg.seed);
  ModelParams params = ModelParams::initialize(d, d * cfg.hidden_mult, cfg.k, rng);
  ModelParams last_good = params;
  Adam adam(params, cfg.adam);
  ScheduleState state = ScheduleState::at(0.0, cfg.alpha);
  ForwardOptions opt;
  opt.bisect_iters = cfg.bisect_iters;
  opt.bn_epsilon = cfg.bn_epsilon;

  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochLog> log;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double error_sum = 0.0, sparsity_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < V; begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, V);
      if (end - begin < 2) break;
      const Matrix batch = detail::gather_rows(e.matrix(), std::span(order).subspan(begin, end - begin));
      ForwardCache cache;
      try {
        cache = forward_cached(params, batch, state, Mode::train, &rng, opt);
      } catch (const NumericError& err) {
        throw TrainingDiverged(err.what(), std::move(last_good), epoch);
      }
      const double batch_loss = loss(cache.recon, batch);
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch), std::move(last_good), epoch);
      adam.step(params, backward(params, cache, batch));

      const double m = cfg.bn_momentum;
      const double unbias = static_cast<double>(batch.rows()) / static_cast<double>(batch.rows() - 1);
      params.running_mean = m * params.running_mean + (1.0 - m) * cache.batch_mean;
      params.running_var = m * params.running_var + (1.0 - m) * unbias * cache.batch_var;

      error_sum += batch_loss;
      sparsity_sum += static_cast<double>(cache.mask.count()) / static_cast<double>(cache.mask.size());
      ++batches;
    }
    if (!params.all_finite())
      throw TrainingDiverged("non-finite parameters at epoch " + std::to_string(epoch), std::move(last_good), epoch);
    last_good = params;

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_error = error_sum / static_cast<double>(batches);
    entry.sparsity = sparsity_sum / static_cast<double>(batches);
    state = schedule_update(state, entry.mean_error, cfg);
    entry.sigma = state.sigma;
    entry.alpha_t = state.alpha_t;
    entry.beta_t = state.beta_t;
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (cfg.stop_sigma > 0.0 && state.sigma >= cfg.stop_sigma - 1e-12) break;
  }

  Encoded enc = encode_embedding(params, e, state, batch_size, cfg.bisect_iters, cfg.bn_epsilon);
  return {std::move(enc.encoding), std::move(enc.reconstruction), std::move(params), state, std::move(log)};
}

// WTA1 checkpoint: magic, config block, schedule state, then u32 tensor
// count and each tensor as u32 rows, u32 cols, float32 row-major values.
// Tensor order: the trainable tensors, then running mean and variance.
struct Checkpoint {
  TrainConfig config;
  ScheduleState schedule;
  ModelParams params;
};

inline void write_checkpoint(const Checkpoint& ck, std::ostream& out) {
  io::ByteWriter w(out);
  const TrainConfig& c = ck.config;
  w.magic("WTA1");
  w.u32(static_cast<std::uint32_t>(ck.params.input_dim()));
  w.u32(static_cast<std::uint32_t>(c.k));
  w.u32(static_cast<std::uint32_t>(c.hidden_mult));
  w.f64(c.alpha);
  w.u32(static_cast<std::uint32_t>(c.batch_size));
  w.u32(static_cast<std::uint32_t>(c.bisect_iters));
  w.f64(c.sigma_step);
  w.f64(c.error_threshold);
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.f64(c.adam.step_size);
  w.f64(c.adam.beta1);
  w.f64(c.adam.beta2);
  w.f64(c.adam.epsilon);
  w.u64(c.seed);
  w.f64(c.bn_epsilon);
  w.f64(c.bn_momentum);
  w.f64(ck.schedule.sigma);
  w.f64(ck.schedule.alpha_t);
  w.f64(ck.schedule.beta_t);

  auto put = [&w](const Matrix& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
  };
  w.u32(static_cast<std::uint32_t>(kTensorCount + 2));
  for (const auto& t : ck.params.tensors) put(t);
  put(ck.params.running_mean);
  put(ck.params.running_var);
  w.check();
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  auto out = io::open_output(path);
  write_checkpoint(ck, out);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  io::ByteReader r(in);
  r.expect_magic("WTA1");
  Checkpoint ck;
  TrainConfig& c = ck.config;
  const std::uint32_t d = r.u32();
  c.k = r.u32();
  c.hidden_mult = r.u32();
  c.alpha = r.f64();
  c.batch_size = r.u32();
  c.bisect_iters = static_cast<int>(r.u32());
  c.sigma_step = r.f64();
  c.error_threshold = r.f64();
  c.epochs = r.u32();
  c.adam.step_size = r.f64();
  c.adam.beta1 = r.f64();
  c.adam.beta2 = r.f64();
  c.adam.epsilon = r.f64();
  c.seed = r.u64();
  c.bn_epsilon = r.f64();
  c.bn_momentum = r.f64();
  ck.schedule.sigma = r.f64();
  ck.schedule.alpha_t = r.f64();
  ck.schedule.beta_t = r.f64();

  ck.params = ModelParams::zeros(d, d * c.hidden_mult, c.k);
  auto get = [&r](Matrix& m) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows != m.rows() || cols != m.cols()) throw InputError("WTA1: tensor shape mismatch");
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f32();
  };
  if (r.u32() != kTensorCount + 2) throw InputError("WTA1: unexpected tensor count");
  for (auto& t : ck.params.tensors) get(t);
  get(ck.params.running_mean);
  get(ck.params.running_var);
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  auto in = io::open_input(path);
  return read_checkpoint(in);
}

}  // namespace embc::wta
