#include "dape/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <random>

#include "dape/error.hpp"
#include "dape/hashing.hpp"

namespace dape {

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

HashTextEncoder::HashTextEncoder(std::size_t dim, std::size_t max_tokens) : dim_(dim), max_tokens_(max_tokens) {
  if (dim_ == 0) throw ConfigError("text embedding dimension must be positive");
  if (max_tokens_ < 2) throw ConfigError("text encoder needs room for <bos> and at least one word");
}

std::vector<double> HashTextEncoder::word_vector(std::string_view word) const {
  std::mt19937_64 rng(fnv1a(word));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(dim_);
  for (auto& x : v) x = dist(rng);
  return v;
}

ConditionEmbedding HashTextEncoder::encode(std::string_view prompt) const {
  std::vector<std::string> tokens{"<bos>"};
  for (auto& w : tokenize_words(prompt)) {
    if (tokens.size() >= max_tokens_) break;
    tokens.push_back(std::move(w));
  }
  Tensor out({tokens.size(), dim_});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto v = word_vector(tokens[i]);
    for (std::size_t j = 0; j < dim_; ++j) out[i * dim_ + j] = v[j];
  }
  return ConditionEmbedding{std::move(out)};
}

}  // namespace dape
