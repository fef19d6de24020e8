#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/rng.hpp"

namespace rwpcl::text {

namespace detail {

inline std::map<int, std::vector<std::size_t>> by_class(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
  return out;
}

}  // namespace detail

/// Stratified split into parts with the given ratios. Each class is shuffled
/// with its own derived seed and divided by largest remainder; every part
/// receives at least one example of every class.
inline std::vector<std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                              std::span<const double> ratios,
                                                              std::uint64_t seed) {
  if (ratios.empty()) throw ConfigError("split: no ratios");
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split: ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
  const std::size_t parts = ratios.size();
  std::vector<std::vector<std::size_t>> out(parts);
  for (auto& [cls, idx] : detail::by_class(labels)) {
    const std::size_t n = idx.size();
    if (n < parts)
      throw ConfigError("split: class " + std::to_string(cls) + " has " + std::to_string(n) +
                        " examples, fewer than " + std::to_string(parts) + " split parts");
    Rng rng(derive_seed(seed, "split/class/" + std::to_string(cls)));
    std::shuffle(idx.begin(), idx.end(), rng);

    std::vector<std::size_t> count(parts);
    std::vector<double> frac(parts);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      const double exact = ratios[p] * static_cast<double>(n);
      count[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[p] = exact - static_cast<double>(count[p]);
      assigned += count[p];
    }
    std::vector<std::size_t> order(parts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++count[order[i % parts]];
    for (std::size_t p = 0; p < parts; ++p) {
      if (count[p] > 0) continue;
      auto donor = std::max_element(count.begin(), count.end()) - count.begin();
      --count[donor];
      ++count[p];
    }
    std::size_t at = 0;
    for (std::size_t p = 0; p < parts; ++p)
      for (std::size_t i = 0; i < count[p]; ++i) out[p].push_back(idx[at++]);
  }
  for (auto& part : out) std::sort(part.begin(), part.end());
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

inline SplitIndices split(std::span<const int> labels, std::array<double, 3> ratios, std::uint64_t seed) {
  auto parts = stratified_split(labels, ratios, seed);
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

/// Stratified k-fold assignment.
struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignment;  // example index -> fold id

  std::vector<std::size_t> test_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> s(k, 0);
    for (auto f : assignment) ++s[f];
    return s;
  }
};

/// Classes are visited in ascending order, each shuffled, and dealt round-robin
/// with one cursor shared across classes. Fold sizes and per-class fold counts
/// both differ by at most one.
inline FoldPlan kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2, got " + std::to_string(k));
  if (k > labels.size())
    throw ConfigError("kfold: k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(labels.size()));
  FoldPlan plan;
  plan.k = k;
  plan.assignment.assign(labels.size(), 0);
  std::size_t cursor = 0;
  for (auto& [cls, idx] : detail::by_class(labels)) {
    Rng rng(derive_seed(seed, "kfold/class/" + std::to_string(cls)));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) plan.assignment[i] = cursor++ % k;
  }
  return plan;
}

}  // namespace rwpcl::text
