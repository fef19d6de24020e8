#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/text/utf8.hpp"

namespace rwpcl::text {

/// Lowercases ASCII letters and splits on ASCII whitespace and punctuation.
/// Punctuation is a separator, not a token; non-ASCII bytes stay inside words.
inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kCls = 2;
  static constexpr std::int32_t kSep = 3;

  Vocabulary() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) push(t);
  }

  /// Every token with count >= min_count, ordered by descending count then
  /// lexicographically, after the four reserved ids.
  static Vocabulary build(const std::vector<std::vector<std::string>>& docs, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& d : docs)
      for (const auto& t : d) ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : counts)
      if (n >= std::max<std::size_t>(min_count, 1)) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(), [](auto& a, auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [tok, n] : kept)
      if (!v.contains(tok)) v.push(tok);
    return v;
  }

  std::int32_t id(std::string_view tok) const {
    auto it = ids_.find(std::string(tok));
    return it == ids_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view tok) const { return ids_.count(std::string(tok)) > 0; }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary: " + path);
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
    if (!out) throw IoError("write failed: " + path);
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocabulary: " + path);
    Vocabulary v;
    v.tokens_.clear();
    v.ids_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw InputError(path + ":" + std::to_string(lineno) + ": expected token<TAB>id");
      const auto id = std::stoul(line.substr(tab + 1));
      if (id != v.tokens_.size())
        throw InputError(path + ":" + std::to_string(lineno) + ": ids must be dense and ascending");
      v.push(line.substr(0, tab));
    }
    if (v.size() < 4 || v.token(kPad) != "[PAD]" || v.token(kUnk) != "[UNK]" || v.token(kCls) != "[CLS]" ||
        v.token(kSep) != "[SEP]")
      throw InputError(path + ": reserved ids 0-3 must be [PAD] [UNK] [CLS] [SEP]");
    return v;
  }

 private:
  void push(std::string tok) {
    ids_.emplace(tok, static_cast<std::int32_t>(tokens_.size()));
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

struct TokenizedExample {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  int label = 0;
};

/// [CLS] + first max_len-2 tokens + [SEP], padded with [PAD] to max_len.
/// An empty token list yields [CLS, SEP, PAD...] and appends a warning.
inline TokenizedExample tokenize_words(const std::vector<std::string>& words, const Vocabulary& vocab,
                                       std::size_t max_len, int label = 0,
                                       std::vector<std::string>* warnings = nullptr) {
  if (max_len < 3) throw ConfigError("tokenize: max_len must be >= 3, got " + std::to_string(max_len));
  if (words.empty() && warnings) warnings->push_back("empty text after preprocessing");
  TokenizedExample ex;
  ex.label = label;
  ex.ids.assign(max_len, Vocabulary::kPad);
  ex.mask.assign(max_len, 0);
  const std::size_t n = std::min(words.size(), max_len - 2);
  ex.ids[0] = Vocabulary::kCls;
  for (std::size_t i = 0; i < n; ++i) ex.ids[i + 1] = vocab.id(words[i]);
  ex.ids[n + 1] = Vocabulary::kSep;
  std::fill_n(ex.mask.begin(), n + 2, std::uint8_t{1});
  return ex;
}

inline TokenizedExample tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len,
                                 int label = 0, std::vector<std::string>* warnings = nullptr) {
  return tokenize_words(split_words(text), vocab, max_len, label, warnings);
}

}  // namespace rwpcl::text
