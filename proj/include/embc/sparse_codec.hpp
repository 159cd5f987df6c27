#pragma once

// Bit-budget records for non-negative sparse codes.
//
// A word's non-zeros are listed in declining value order. The record holds
// the list length, each location, the largest value at half precision and,
// for every successive pair, the ratio next/previous quantized to one of
// 2^ratio_bits uniform levels on [ratio_lo, ratio_hi].
//
// SNE1 layout (little-endian):
//   "SNE1", u32 V, u32 k, u32 d, u16 n_bits, u8 ratio_bits, vocabulary block,
//   k*d float32 dictionary (row-major), d float32 dictionary bias,
//   then per word: u8 count, count * log2(k) location bits, 16 head bits
//   (if count > 0), (count - 1) * ratio_bits ratio bits; MSB-first, each
//   record padded to a byte boundary.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "embc/binary_io.hpp"
#include "embc/error.hpp"
#include "embc/sparse_encoding.hpp"

namespace embc::codec {

inline constexpr std::size_t kMaxCount = 255;
inline constexpr unsigned kHeadBits = 16;

// Sparsity that fits n_bits when every non-zero costs log2(k) location
// bits plus ratio_bits.
inline double compute_alpha(double n_bits, std::size_t k, unsigned ratio_bits = 3) {
  if (k == 0 || !std::has_single_bit(k)) throw InputError("k must be a power of two");
  if (!(n_bits > 0)) throw InputError("n_bits must be positive");
  return n_bits / (static_cast<double>(k) * (std::log2(static_cast<double>(k)) + ratio_bits));
}

struct BudgetSpec {
  std::size_t n_bits = 900;
  std::size_t k = 1024;
  unsigned ratio_bits = 3;
  double ratio_lo = 0.70;
  double ratio_hi = 1.00;

  [[nodiscard]] double alpha() const { return compute_alpha(static_cast<double>(n_bits), k, ratio_bits); }
  [[nodiscard]] unsigned location_bits() const { return static_cast<unsigned>(std::countr_zero(k)); }
  [[nodiscard]] unsigned ratio_levels() const { return 1u << ratio_bits; }
  [[nodiscard]] double ratio_step() const { return (ratio_hi - ratio_lo) / (ratio_levels() - 1); }

  [[nodiscard]] double decode_ratio(unsigned code) const { return ratio_lo + code * ratio_step(); }

  [[nodiscard]] unsigned encode_ratio(double r) const {
    const double c = std::nearbyint((r - ratio_lo) / ratio_step());
    return static_cast<unsigned>(std::clamp(c, 0.0, static_cast<double>(ratio_levels() - 1)));
  }

  void validate() const {
    if (k == 0 || !std::has_single_bit(k)) throw InputError("k must be a power of two");
    if (ratio_bits == 0 || ratio_bits > 8) throw InputError("ratio_bits must be in [1, 8]");
    if (!(ratio_lo > 0 && ratio_lo < ratio_hi)) throw InputError("ratio range must satisfy 0 < lo < hi");
  }
};

struct SparseRecord {
  std::vector<std::uint32_t> locations;  // declining value order
  std::uint16_t head = 0;                // IEEE half bits of the largest value
  std::vector<std::uint8_t> ratio_codes; // locations.size() - 1 entries

  [[nodiscard]] std::size_t count() const { return locations.size(); }

  [[nodiscard]] std::size_t payload_bits(const BudgetSpec& spec) const {
    const std::size_t m = count();
    return 8 + m * spec.location_bits() + (m > 0 ? kHeadBits : 0) + (m > 1 ? (m - 1) * spec.ratio_bits : 0);
  }

  friend bool operator==(const SparseRecord&, const SparseRecord&) = default;
};

inline std::uint16_t to_half_bits(double v) {
  // Clamp into the positive half range so a stored head is never zero or inf.
  const double clamped = std::clamp(v, 5.9604644775390625e-08, 65504.0);
  return std::bit_cast<std::uint16_t>(Eigen::half(static_cast<float>(clamped)));
}

inline double from_half_bits(std::uint16_t bits) {
  return static_cast<double>(static_cast<float>(std::bit_cast<Eigen::half>(bits)));
}

// Lists longer than 255 keep the 255 largest values; `truncated` reports it.
inline SparseRecord encode_word(std::span<const float> code, const BudgetSpec& spec, bool* truncated = nullptr) {
  std::vector<std::uint32_t> order;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i] < 0.0f || !std::isfinite(code[i])) throw InputError("encode_word: codes must be finite and >= 0");
    if (code[i] > 0.0f) order.push_back(static_cast<std::uint32_t>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return code[a] > code[b]; });
  if (truncated) *truncated = order.size() > kMaxCount;
  if (order.size() > kMaxCount) order.resize(kMaxCount);

  SparseRecord rec;
  rec.locations = std::move(order);
  if (rec.locations.empty()) return rec;
  rec.head = to_half_bits(code[rec.locations[0]]);
  rec.ratio_codes.reserve(rec.locations.size() - 1);
  for (std::size_t i = 1; i < rec.locations.size(); ++i) {
    const double ratio = static_cast<double>(code[rec.locations[i]]) / static_cast<double>(code[rec.locations[i - 1]]);
    rec.ratio_codes.push_back(static_cast<std::uint8_t>(spec.encode_ratio(ratio)));
  }
  return rec;
}

inline std::vector<double> decode_word(const SparseRecord& rec, const BudgetSpec& spec) {
  std::vector<double> out(spec.k, 0.0);
  if (rec.locations.empty()) return out;
  if (rec.ratio_codes.size() + 1 != rec.locations.size()) throw InputError("decode_word: ratio count mismatch");
  double value = from_half_bits(rec.head);
  for (std::size_t i = 0; i < rec.locations.size(); ++i) {
    const std::uint32_t loc = rec.locations[i];
    if (loc >= spec.k) throw InputError("decode_word: location out of range");
    if (out[loc] != 0.0) throw InputError("decode_word: duplicate location");
    if (i > 0) value *= spec.decode_ratio(rec.ratio_codes[i - 1]);
    out[loc] = value;
  }
  return out;
}

inline std::vector<std::uint8_t> pack_record(const SparseRecord& rec, const BudgetSpec& spec) {
  io::BitWriter bw;
  bw.put(rec.count(), 8);
  for (auto loc : rec.locations) bw.put(loc, spec.location_bits());
  if (rec.count() > 0) bw.put(rec.head, kHeadBits);
  for (auto c : rec.ratio_codes) bw.put(c, spec.ratio_bits);
  return bw.bytes();
}

inline SparseRecord unpack_record(io::BitReader& br, const BudgetSpec& spec) {
  SparseRecord rec;
  const auto m = static_cast<std::size_t>(br.get(8));
  rec.locations.resize(m);
  for (auto& loc : rec.locations) loc = static_cast<std::uint32_t>(br.get(spec.location_bits()));
  if (m > 0) rec.head = static_cast<std::uint16_t>(br.get(kHeadBits));
  if (m > 1) {
    rec.ratio_codes.resize(m - 1);
    for (auto& c : rec.ratio_codes) c = static_cast<std::uint8_t>(br.get(spec.ratio_bits));
  }
  br.align();
  return rec;
}

// In-memory image of an SNE1 file.
struct SparseCodeFile {
  Vocabulary vocab;
  BudgetSpec spec;
  std::size_t d = 0;
  std::vector<SparseRecord> records;
  RowMatrixF dictionary;  // k x d
  Eigen::RowVectorXf dictionary_bias;

  [[nodiscard]] RowMatrixF decode_codes() const {
    RowMatrixF codes = RowMatrixF::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(spec.k));
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto values = decode_word(records[i], spec);
      for (std::size_t j = 0; j < spec.k; ++j)
        codes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<float>(values[j]);
    }
    return codes;
  }

  [[nodiscard]] SparseEncoding to_encoding() const {
    return SparseEncoding{vocab, decode_codes(), dictionary, dictionary_bias};
  }

  [[nodiscard]] double mean_payload_bits() const {
    if (records.empty()) return 0.0;
    double total = 0;
    for (const auto& r : records) total += static_cast<double>(r.payload_bits(spec));
    return total / static_cast<double>(records.size());
  }
};

struct WriteStats {
  std::size_t truncated_words = 0;
  double mean_count = 0.0;
  bool over_budget = false;  // mean count above alpha * k
};

inline SparseCodeFile make_code_file(const SparseEncoding& enc, const BudgetSpec& spec, WriteStats* stats = nullptr) {
  spec.validate();
  if (enc.code_dim() != spec.k) throw InputError("encoding code dimension does not match budget k");
  SparseCodeFile file;
  file.vocab = enc.vocab;
  file.spec = spec;
  file.d = enc.dim();
  file.dictionary = enc.dictionary;
  file.dictionary_bias = enc.dictionary_bias;
  file.records.resize(enc.size());
  WriteStats local;
  double count_sum = 0.0;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const auto row = enc.codes.row(static_cast<Eigen::Index>(i));
    bool truncated = false;
    file.records[i] = encode_word(std::span<const float>(row.data(), static_cast<std::size_t>(row.size())), spec, &truncated);
    local.truncated_words += truncated ? 1 : 0;
    count_sum += static_cast<double>(file.records[i].count());
  }
  if (enc.size() > 0) local.mean_count = count_sum / static_cast<double>(enc.size());
  local.over_budget = local.mean_count > spec.alpha() * static_cast<double>(spec.k);
  if (stats) *stats = local;
  return file;
}

inline void write_file(const SparseCodeFile& file, std::ostream& out) {
  const BudgetSpec& spec = file.spec;
  io::ByteWriter w(out);
  w.magic("SNE1");
  w.u32(static_cast<std::uint32_t>(file.vocab.size()));
  w.u32(static_cast<std::uint32_t>(spec.k));
  w.u32(static_cast<std::uint32_t>(file.d));
  w.u16(static_cast<std::uint16_t>(spec.n_bits));
  w.u8(static_cast<std::uint8_t>(spec.ratio_bits));
  io::write_vocabulary(w, file.vocab);
  for (Eigen::Index i = 0; i < file.dictionary.rows(); ++i)
    for (Eigen::Index j = 0; j < file.dictionary.cols(); ++j) w.f32(file.dictionary(i, j));
  for (Eigen::Index j = 0; j < file.dictionary_bias.size(); ++j) w.f32(file.dictionary_bias(j));
  for (const auto& rec : file.records) w.bytes(pack_record(rec, spec));
  w.check();
}

inline void write_file(const SparseCodeFile& file, const std::string& path) {
  auto out = io::open_output(path);
  write_file(file, out);
}

inline WriteStats write_file(const SparseEncoding& enc, const BudgetSpec& spec, const std::string& path) {
  WriteStats stats;
  write_file(make_code_file(enc, spec, &stats), path);
  return stats;
}

inline SparseCodeFile read_file(std::istream& in) {
  io::ByteReader r(in);
  r.expect_magic("SNE1");
  SparseCodeFile file;
  const std::uint32_t v = r.u32();
  file.spec.k = r.u32();
  file.d = r.u32();
  file.spec.n_bits = r.u16();
  file.spec.ratio_bits = r.u8();
  file.spec.validate();
  file.vocab = io::read_vocabulary(r, v);
  const auto K = static_cast<Eigen::Index>(file.spec.k), D = static_cast<Eigen::Index>(file.d);
  file.dictionary.resize(K, D);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < D; ++j) file.dictionary(i, j) = r.f32();
  file.dictionary_bias.resize(D);
  for (Eigen::Index j = 0; j < D; ++j) file.dictionary_bias(j) = r.f32();

  // Records are variable length; read the rest and walk it.
  std::vector<std::uint8_t> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  io::BitReader br(rest);
  file.records.reserve(v);
  for (std::uint32_t i = 0; i < v; ++i) {
    file.records.push_back(unpack_record(br, file.spec));
    const auto& rec = file.records.back();
    std::vector<bool> seen(file.spec.k, false);
    for (auto loc : rec.locations) {
      if (loc >= file.spec.k || seen[loc]) throw InputError("SNE1: invalid location in record " + std::to_string(i));
      seen[loc] = true;
    }
  }
  if (br.byte_position() != rest.size()) throw InputError("SNE1: trailing bytes after last record");
  return file;
}

inline SparseCodeFile read_file(const std::string& path) {
  auto in = io::open_input(path);
  return read_file(in);
}

}  // namespace embc::codec
