#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dape/tensor.hpp"

namespace dape {

/// Token-sequence text condition [L, D].
struct ConditionEmbedding {
  Tensor tokens;

  std::size_t length() const { return tokens.dim(0); }
  std::size_t dim() const { return tokens.dim(1); }
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual ConditionEmbedding encode(std::string_view prompt) const = 0;
};

/// Lower-cased alphanumeric words.
std::vector<std::string> tokenize_words(std::string_view text);

/// Offline embedder: each word maps to a fixed pseudo-random vector seeded by
/// its hash. A <bos> token leads every sequence, so "" encodes to one token.
class HashTextEncoder final : public TextEncoder {
 public:
  HashTextEncoder(std::size_t dim, std::size_t max_tokens);

  std::size_t dim() const override { return dim_; }
  std::size_t max_tokens() const noexcept { return max_tokens_; }
  ConditionEmbedding encode(std::string_view prompt) const override;

  std::vector<double> word_vector(std::string_view word) const;

 private:
  std::size_t dim_;
  std::size_t max_tokens_;
};

}  // namespace dape
