#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "rwpcl/text/utf8.hpp"

namespace rwpcl::text {

struct CleanOptions {
  // false: a '#word' token is dropped entirely; true: only the '#' marks go.
  bool keep_hashtag_text = false;
};

namespace detail {

inline std::size_t find_url(std::string_view token) {
  static constexpr std::array<std::string_view, 3> kPrefixes{"http://", "https://", "www."};
  std::string lower(token);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t best = std::string_view::npos;
  for (auto p : kPrefixes) best = std::min(best, lower.find(p));
  return best;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

/// Removes user mentions ('@...' tokens), hashtags ('#...' tokens) and URLs
/// (http://, https://, www. up to the next whitespace), then collapses
/// whitespace. Idempotent.
inline std::string clean(std::string_view text, const CleanOptions& opt = {}) {
  std::string out;
  for (std::string_view tok : detail::split_ws(text)) {
    if (tok.front() == '#') {
      if (!opt.keep_hashtag_text) continue;
      tok.remove_prefix(std::min(tok.find_first_not_of('#'), tok.size()));
      if (tok.empty()) continue;
    }
    if (tok.front() == '@') continue;
    if (auto u = detail::find_url(tok); u != std::string_view::npos) tok = tok.substr(0, u);
    if (tok.empty()) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

}  // namespace rwpcl::text
