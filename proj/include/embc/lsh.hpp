#pragma once

// Sign-of-random-projection signatures (Charikar). The Hamming fraction
// between two signatures estimates angle / pi.

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "embc/binary_io.hpp"
#include "embc/embedding.hpp"
#include "embc/error.hpp"

namespace embc::lsh {

class HyperplaneSet {
 public:
  HyperplaneSet(std::size_t n_bits, std::size_t d, std::uint64_t seed)
      : planes_(static_cast<Eigen::Index>(n_bits), static_cast<Eigen::Index>(d)), seed_(seed) {
    if (n_bits == 0 || d == 0) throw InputError("hyperplane set needs n_bits > 0 and d > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < planes_.rows(); ++i)
      for (Eigen::Index j = 0; j < planes_.cols(); ++j) planes_(i, j) = normal(rng);
  }

  [[nodiscard]] std::size_t bits() const { return static_cast<std::size_t>(planes_.rows()); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(planes_.cols()); }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] const RowMatrixD& planes() const { return planes_; }

 private:
  RowMatrixD planes_;
  std::uint64_t seed_;
};

// Bits packed MSB-first into 64-bit words; bit i is (words[i/64] >> (63 - i%64)) & 1.
class BitSignature {
 public:
  BitSignature() = default;
  explicit BitSignature(std::size_t n_bits) : n_bits_(n_bits), words_((n_bits + 63) / 64, 0) {}

  [[nodiscard]] std::size_t size() const { return n_bits_; }
  [[nodiscard]] bool get(std::size_t i) const { return (words_[i / 64] >> (63 - i % 64)) & 1u; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (63 - i % 64); }
  [[nodiscard]] const std::vector<std::uint64_t>& words() const { return words_; }

  friend bool operator==(const BitSignature&, const BitSignature&) = default;

 private:
  std::size_t n_bits_ = 0;
  std::vector<std::uint64_t> words_;
};

struct HashResult {
  BitSignature signature;
  bool zero_vector = false;
};

template <typename Vec>
HashResult hash_flagged(const Vec& v, const HyperplaneSet& planes) {
  if (static_cast<std::size_t>(v.size()) != planes.dim()) throw InputError("hash: dimension mismatch");
  const Eigen::VectorXd x = v.template cast<double>().transpose();
  if (!x.allFinite()) throw InputError("hash: non-finite input");
  const Eigen::VectorXd proj = planes.planes() * x;
  HashResult out{BitSignature(planes.bits()), x.squaredNorm() == 0.0};
  for (Eigen::Index i = 0; i < proj.size(); ++i)
    if (proj(i) > 0.0) out.signature.set(static_cast<std::size_t>(i));
  return out;
}

template <typename Vec>
BitSignature hash(const Vec& v, const HyperplaneSet& planes) {
  return hash_flagged(v, planes).signature;
}

inline std::size_t hamming(const BitSignature& a, const BitSignature& b) {
  if (a.size() != b.size()) throw InputError("signature length mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < a.words().size(); ++i) total += std::popcount(a.words()[i] ^ b.words()[i]);
  return total;
}

// cos(pi * hamming / n_bits).
inline double similarity(const BitSignature& a, const BitSignature& b) {
  const double frac = static_cast<double>(hamming(a, b)) / static_cast<double>(a.size());
  return std::cos(std::numbers::pi * frac);
}

struct SignatureSet {
  Vocabulary vocab;
  std::size_t n_bits = 0;
  std::uint64_t seed = 0;
  std::vector<BitSignature> signatures;
};

inline SignatureSet hash_embedding(const Embedding& e, std::size_t n_bits, std::uint64_t seed,
                                   std::size_t* zero_vectors = nullptr) {
  HyperplaneSet planes(n_bits, e.dim(), seed);
  SignatureSet out{e.vocab(), n_bits, seed, {}};
  out.signatures.reserve(e.size());
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    HashResult r = hash_flagged(e.row(i), planes);
    zeros += r.zero_vector ? 1 : 0;
    out.signatures.push_back(std::move(r.signature));
  }
  if (zero_vectors) *zero_vectors = zeros;
  return out;
}

// LSH1: "LSH1", u32 V, u16 n_bits, u64 seed, vocabulary block, then per
// word ceil(n_bits / 8) bytes of signature, MSB-first.
inline void write_signatures(const SignatureSet& s, std::ostream& out) {
  io::ByteWriter w(out);
  w.magic("LSH1");
  w.u32(static_cast<std::uint32_t>(s.vocab.size()));
  w.u16(static_cast<std::uint16_t>(s.n_bits));
  w.u64(s.seed);
  io::write_vocabulary(w, s.vocab);
  for (const auto& sig : s.signatures) {
    io::BitWriter bw;
    for (std::size_t i = 0; i < sig.size(); ++i) bw.put(sig.get(i) ? 1u : 0u, 1);
    w.bytes(bw.bytes());
  }
  w.check();
}

inline void write_signatures(const SignatureSet& s, const std::string& path) {
  auto out = io::open_output(path);
  write_signatures(s, out);
}

inline SignatureSet read_signatures(std::istream& in) {
  io::ByteReader r(in);
  r.expect_magic("LSH1");
  SignatureSet s;
  const std::uint32_t v = r.u32();
  s.n_bits = r.u16();
  s.seed = r.u64();
  if (s.n_bits == 0) throw InputError("LSH1: zero-length signatures");
  s.vocab = io::read_vocabulary(r, v);
  s.signatures.reserve(v);
  for (std::uint32_t i = 0; i < v; ++i) {
    auto raw = r.bytes((s.n_bits + 7) / 8);
    io::BitReader br(raw);
    BitSignature sig(s.n_bits);
    for (std::size_t b = 0; b < s.n_bits; ++b)
      if (br.get(1)) sig.set(b);
    s.signatures.push_back(std::move(sig));
  }
  return s;
}

inline SignatureSet read_signatures(const std::string& path) {
  auto in = io::open_input(path);
  return read_signatures(in);
}

}  // namespace embc::lsh
