#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/errors.hpp"

namespace rwpcl::eval {

/// counts[g][p] = number of examples with gold g predicted p.
struct Confusion {
  std::size_t classes = 0;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (auto c : row) n += c;
    return n;
  }
};

inline Confusion confusion(std::span<const int> gold, std::span<const int> pred, std::size_t classes) {
  if (gold.size() != pred.size())
    throw InputError("confusion: " + std::to_string(gold.size()) + " gold labels vs " + std::to_string(pred.size()) +
                     " predictions");
  Confusion c{classes, std::vector<std::vector<std::size_t>>(classes, std::vector<std::size_t>(classes, 0))};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i], p = pred[i];
    if (g < 0 || p < 0 || static_cast<std::size_t>(g) >= classes || static_cast<std::size_t>(p) >= classes)
      throw InputError("confusion: label out of range at index " + std::to_string(i));
    ++c.counts[g][p];
  }
  return c;
}

struct MetricReport {
  std::vector<double> precision, recall, f1;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  Confusion matrix;
};

/// Per-class precision/recall/F1 and their unweighted means. Any 0/0 is 0.
inline MetricReport macro_report(const Confusion& c) {
  MetricReport r;
  r.matrix = c;
  const std::size_t k = c.classes;
  for (std::size_t cls = 0; cls < k; ++cls) {
    std::size_t tp = c.counts[cls][cls], pred = 0, gold = 0;
    for (std::size_t o = 0; o < k; ++o) {
      pred += c.counts[o][cls];
      gold += c.counts[cls][o];
    }
    const double p = pred ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    const double rc = gold ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
    const double f = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(f);
    r.macro_precision += p;
    r.macro_recall += rc;
    r.macro_f1 += f;
  }
  if (k) {
    r.macro_precision /= static_cast<double>(k);
    r.macro_recall /= static_cast<double>(k);
    r.macro_f1 /= static_cast<double>(k);
  }
  return r;
}

inline MetricReport macro_report(std::span<const int> gold, std::span<const int> pred, std::size_t classes) {
  return macro_report(confusion(gold, pred, classes));
}

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"precision", r.precision},       {"recall", r.recall},           {"f1", r.f1},
          {"macro_precision", r.macro_precision}, {"macro_recall", r.macro_recall}, {"macro_f1", r.macro_f1},
          {"confusion", r.matrix.counts}};
}

}  // namespace rwpcl::eval
