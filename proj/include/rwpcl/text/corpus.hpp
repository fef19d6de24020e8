#pragma once

#include <span>
#include <string>
#include <vector>

#include "rwpcl/text/dataset.hpp"
#include "rwpcl/text/tokenize.hpp"

namespace rwpcl::text {

/// Preprocessed dataset: word lists ready for vocabulary building and tokenization.
struct Corpus {
  std::vector<std::vector<std::string>> words;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

inline Corpus prepare_corpus(const Dataset& ds, const Preprocessor& pre) {
  Corpus c;
  c.num_classes = ds.num_classes;
  for (const auto& p : ds.posts) {
    c.words.push_back(pre.words(p.text));
    c.labels.push_back(p.label);
  }
  return c;
}

inline Vocabulary build_vocabulary(const Corpus& c, std::span<const std::size_t> indices, std::size_t min_count) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(indices.size());
  for (auto i : indices) docs.push_back(c.words[i]);
  return Vocabulary::build(docs, min_count);
}

/// Tokenizes the selected examples. Warnings name the example index.
inline std::vector<TokenizedExample> tokenize_subset(const Corpus& c, std::span<const std::size_t> indices,
                                                     const Vocabulary& vocab, std::size_t max_len,
                                                     std::vector<std::string>* warnings = nullptr) {
  std::vector<TokenizedExample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    std::vector<std::string> w;
    out.push_back(tokenize_words(c.words[i], vocab, max_len, c.labels[i], &w));
    if (warnings)
      for (auto& m : w) warnings->push_back("example " + std::to_string(i) + ": " + m);
  }
  return out;
}

}  // namespace rwpcl::text
