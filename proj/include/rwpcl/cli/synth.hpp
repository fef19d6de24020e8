#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/rng.hpp"
#include "rwpcl/text/dataset.hpp"

namespace rwpcl::cli {

/// Parameters of the synthetic post generator. Word "sK" with K in
/// [c*signal_tokens, (c+1)*signal_tokens) belongs to class c; the remaining
/// vocabulary words are shared noise.
struct SyntheticSpec {
  std::size_t examples = 2000;
  std::size_t classes = 2;
  std::size_t vocab_size = 400;
  std::size_t signal_tokens = 8;
  double noise_rate = 0.5;
  double flip_rate = 0.05;
  std::size_t min_words = 4;
  std::size_t max_words = 12;
  bool decorate = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 2) throw ConfigError("synth: need at least 2 classes");
    if (examples < classes) throw ConfigError("synth: fewer examples than classes");
    if (signal_tokens < 1) throw ConfigError("synth: signal_tokens must be >= 1");
    if (vocab_size <= classes * signal_tokens)
      throw ConfigError("synth: vocab_size must exceed classes * signal_tokens");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("synth: noise rate must lie in [0,1)");
    if (!(flip_rate >= 0.0 && flip_rate < 1.0)) throw ConfigError("synth: flip rate must lie in [0,1)");
    if (min_words < 1 || max_words < min_words) throw ConfigError("synth: need 1 <= min_words <= max_words");
  }

  std::size_t signal_class(std::size_t word) const {
    return word < classes * signal_tokens ? word / signal_tokens : classes;
  }
};

inline std::string synth_word(std::size_t k) { return (k < 10 ? "w00" : k < 100 ? "w0" : "w") + std::to_string(k); }

/// Class whose signal words appear in `text`, or -1 when none or several do.
inline int signal_label(const std::string& text, const SyntheticSpec& spec) {
  int found = -1;
  for (const auto& w : text::split_words(text)) {
    if (w.size() < 2 || w[0] != 'w') continue;
    std::size_t k = 0;
    try {
      k = std::stoul(w.substr(1));
    } catch (...) {
      continue;
    }
    const std::size_t c = spec.signal_class(k);
    if (c == spec.classes) continue;
    if (found >= 0 && static_cast<std::size_t>(found) != c) return -1;
    found = static_cast<int>(c);
  }
  return found;
}

/// Balanced synthetic corpus. Every post carries at least one signal word of
/// its clean class and none of any other class. Clean labels are exactly
/// balanced (remainders go to the lowest classes). round(flip_rate*n/C)
/// posts of each class get label (c+1) mod C, so balance survives the flips.
inline text::Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth"));
  std::vector<int> labels(spec.examples);
  for (std::size_t i = 0; i < spec.examples; ++i) labels[i] = static_cast<int>(i % spec.classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  text::Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = static_cast<int>(spec.classes);
  const std::size_t noise_words = spec.vocab_size - spec.classes * spec.signal_tokens;
  std::uniform_int_distribution<std::size_t> len(spec.min_words, spec.max_words);
  std::uniform_int_distribution<std::size_t> pick_signal(0, spec.signal_tokens - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, noise_words - 1);
  std::bernoulli_distribution is_noise(spec.noise_rate), decorate(0.15);
  for (std::size_t i = 0; i < spec.examples; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const std::size_t n = len(rng);
    std::uniform_int_distribution<std::size_t> anchor_pos(0, n - 1);
    const std::size_t anchor = anchor_pos(rng);
    std::vector<std::string> words;
    for (std::size_t p = 0; p < n; ++p) {
      if (p != anchor && is_noise(rng))
        words.push_back(synth_word(spec.classes * spec.signal_tokens + pick_noise(rng)));
      else
        words.push_back(synth_word(c * spec.signal_tokens + pick_signal(rng)));
    }
    if (spec.decorate) {
      if (decorate(rng)) words.insert(words.begin(), "@user" + std::to_string(pick_noise(rng)));
      if (decorate(rng)) words.push_back("#" + synth_word(c * spec.signal_tokens + pick_signal(rng)));
      if (decorate(rng)) words.push_back("https://t.co/" + std::to_string(pick_noise(rng)));
    }
    std::string textv;
    for (const auto& w : words) textv += (textv.empty() ? "" : " ") + w;
    ds.posts.push_back({std::move(textv), labels[i], labels[i]});
  }

  const auto per_class =
      static_cast<std::size_t>(std::llround(spec.flip_rate * static_cast<double>(spec.examples) / spec.classes));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < spec.examples; ++i)
      if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < std::min(per_class, members.size()); ++k)
      ds.posts[members[k]].label = static_cast<int>((c + 1) % spec.classes);
  }
  return ds;
}

}  // namespace rwpcl::cli
