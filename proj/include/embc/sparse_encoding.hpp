#pragma once

#include <Eigen/Core>

#include "embc/embedding.hpp"
#include "embc/vocabulary.hpp"

namespace embc {

// Non-negative sparse codes for every word plus the dictionary that maps
// them back to the dense space: reconstruction = codes * dictionary + bias.
struct SparseEncoding {
  Vocabulary vocab;
  RowMatrixF codes;       // V x k, entries >= 0
  RowMatrixF dictionary;  // k x d
  Eigen::RowVectorXf dictionary_bias;

  [[nodiscard]] std::size_t size() const { return vocab.size(); }
  [[nodiscard]] std::size_t code_dim() const { return static_cast<std::size_t>(codes.cols()); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(dictionary.cols()); }

  [[nodiscard]] double nonzero_fraction() const {
    if (codes.size() == 0) return 0.0;
    return static_cast<double>((codes.array() != 0.0f).count()) / static_cast<double>(codes.size());
  }

  [[nodiscard]] Embedding reconstruct() const {
    RowMatrixF m = codes * dictionary;
    m.rowwise() += dictionary_bias;
    return Embedding(vocab, std::move(m));
  }

  // The codes themselves used as word vectors.
  [[nodiscard]] Embedding codes_as_embedding() const { return Embedding(vocab, codes); }
};

}  // namespace embc
