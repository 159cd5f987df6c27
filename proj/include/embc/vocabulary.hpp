#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embc/error.hpp"

namespace embc {

// Ordered list of unique tokens with its inverse index. Tokens compare
// by exact bytes.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      auto [it, inserted] = index_.emplace(words_[i], i);
      if (!inserted) throw InputError("duplicate token '" + words_[i] + "'");
    }
  }

  [[nodiscard]] std::size_t size() const { return words_.size(); }
  [[nodiscard]] bool empty() const { return words_.empty(); }
  [[nodiscard]] const std::vector<std::string>& words() const { return words_; }
  [[nodiscard]] const std::string& operator[](std::size_t i) const { return words_[i]; }

  [[nodiscard]] std::optional<std::size_t> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] bool contains(const std::string& token) const { return index_.contains(token); }

  [[nodiscard]] std::size_t at(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw InputError("out-of-vocabulary token '" + token + "'");
    return it->second;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace embc
