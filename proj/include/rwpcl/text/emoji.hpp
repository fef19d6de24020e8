#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/text/utf8.hpp"

namespace rwpcl::text {

/// Codepoint -> name table loaded from a "HEX<TAB>name" file ('#' lines are comments).
class EmojiTable {
 public:
  EmojiTable() = default;

  static EmojiTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open emoji table: " + path);
    EmojiTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') {
        if (t.header_.empty() && !line.empty()) t.header_ = line;
        continue;
      }
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw InputError(path + ":" + std::to_string(lineno) + ": expected codepoint<TAB>name");
      t.add(static_cast<char32_t>(std::stoul(line.substr(0, tab), nullptr, 16)), line.substr(tab + 1));
    }
    return t;
  }

  void add(char32_t cp, std::string name) { names_[cp] = std::move(name); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& header() const noexcept { return header_; }

  const std::string* find(char32_t cp) const {
    auto it = names_.find(cp);
    return it == names_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<char32_t, std::string> names_;
  std::string header_;
};

/// Pictographic and emoji-modifier ranges. Codepoints here that are missing
/// from the table are dropped rather than passed through.
inline bool is_emoji_codepoint(char32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) ||
         (cp >= 0x2300 && cp <= 0x23FF) || (cp >= 0x2B00 && cp <= 0x2BFF) ||
         (cp >= 0xFE00 && cp <= 0xFE0F) || cp == 0x200D || cp == 0x20E3 ||
         (cp >= 0xE0020 && cp <= 0xE007F);
}

/// Table names look like ":face_with_medical_mask:"; ':', '-' and '_' become spaces.
inline std::string emoji_name_to_words(std::string_view name) {
  std::string s(name);
  for (char& c : s)
    if (c == ':' || c == '-' || c == '_') c = ' ';
  return collapse_whitespace(s);
}

/// Replaces each known emoji with its words (space separated from neighbours)
/// and drops unknown emoji. Text without emoji is returned unchanged.
inline std::string emoji_to_text(std::string_view text, const EmojiTable& table) {
  std::string out;
  out.reserve(text.size());
  bool changed = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = next_codepoint(text, pos);
    if (const std::string* name = cp >= 0x80 ? table.find(cp) : nullptr) {
      out += ' ';
      out += emoji_name_to_words(*name);
      out += ' ';
      changed = true;
    } else if (is_emoji_codepoint(cp)) {
      out += ' ';
      changed = true;
    } else {
      out.append(text.substr(start, pos - start));
    }
  }
  return changed ? collapse_whitespace(out) : std::string(text);
}

}  // namespace rwpcl::text
