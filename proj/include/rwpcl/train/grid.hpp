#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/parallel.hpp"
#include "rwpcl/train/fit.hpp"

namespace rwpcl {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct GridSpec {
  std::vector<std::size_t> batch_sizes{16, 32};
  std::vector<double> epsilons{5e-4, 1e-4, 5e-3, 1e-3};
  std::vector<double> lambdas{0.1, 0.2, 0.3, 0.4, 0.5};

  std::size_t cells() const { return batch_sizes.size() * epsilons.size() * lambdas.size(); }
};

struct GridCell {
  std::size_t batch_size = 0;
  double epsilon = 0.0, lambda = 0.0;
  std::uint64_t seed = 0;
  double val_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::string error;  // non-empty when the trial failed
};

struct GridResult {
  GridSpec spec;
  std::vector<GridCell> cells;  // batch size outer, λ middle, ε inner
  std::vector<std::size_t> ranking;  // cell indices, best first
  TrainConfig best_config;
  std::vector<std::vector<EpochRecord>> logs;  // per cell
};

/// Ordering for "better" trials: higher F1, then smaller ε, smaller λ, smaller b.
inline bool grid_better(const GridCell& a, const GridCell& b) {
  const bool fa = a.error.empty(), fb = b.error.empty();
  if (fa != fb) return fa;
  if (a.val_f1 != b.val_f1) return a.val_f1 > b.val_f1;
  if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
  if (a.lambda != b.lambda) return a.lambda < b.lambda;
  return a.batch_size < b.batch_size;
}

inline std::string grid_cell_name(std::size_t b, double eps, double lambda) {
  return "grid/b=" + std::to_string(b) + "/eps=" + format_number(eps) + "/lambda=" + format_number(lambda);
}

/// Runs fit() on every (b, ε, λ) point. Each cell's seed is derived from the
/// master seed and the cell's coordinates, so results do not depend on `jobs`.
inline GridResult grid_search(std::span<const TokenizedExample> train, std::span<const TokenizedExample> val,
                              const EncoderConfig& enc, const TrainConfig& base, const GridSpec& spec,
                              std::uint64_t master_seed, std::size_t jobs = 1) {
  if (spec.cells() == 0) throw ConfigError("grid: every grid axis needs at least one value");
  GridResult res;
  res.spec = spec;
  for (auto b : spec.batch_sizes)
    for (auto l : spec.lambdas)
      for (auto e : spec.epsilons) {
        GridCell c;
        c.batch_size = b;
        c.epsilon = e;
        c.lambda = l;
        c.seed = derive_seed(master_seed, grid_cell_name(b, e, l));
        res.cells.push_back(c);
      }
  res.logs.resize(res.cells.size());
  parallel_for(res.cells.size(), jobs, [&](std::size_t i) {
    GridCell& c = res.cells[i];
    TrainConfig cfg = base;
    cfg.batch_size = c.batch_size;
    cfg.epsilon = c.epsilon;
    cfg.lambda = c.lambda;
    cfg.seed = c.seed;
    try {
      FitResult f = fit(train, val, enc, cfg);
      c.val_f1 = f.best_val_f1;
      c.best_epoch = f.best_epoch;
      c.epochs_run = f.log.size();
      res.logs[i] = std::move(f.log);
    } catch (const std::exception& ex) {
      c.error = ex.what();
    }
  });
  res.ranking.resize(res.cells.size());
  std::iota(res.ranking.begin(), res.ranking.end(), 0);
  std::stable_sort(res.ranking.begin(), res.ranking.end(),
                   [&](auto a, auto b) { return grid_better(res.cells[a], res.cells[b]); });
  const GridCell& best = res.cells[res.ranking.front()];
  res.best_config = base;
  res.best_config.batch_size = best.batch_size;
  res.best_config.epsilon = best.epsilon;
  res.best_config.lambda = best.lambda;
  res.best_config.seed = best.seed;
  return res;
}

/// Noise-sweep layout: one block per batch size, λ rows × ε columns, cells are
/// validation macro-F1 in percent.
inline std::string render_grid_table(const GridResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  std::size_t i = 0;
  for (auto b : r.spec.batch_sizes) {
    os << "b=" << b << "\tlambda\\epsilon";
    for (auto e : r.spec.epsilons) os << '\t' << format_number(e);
    os << '\n';
    for (auto l : r.spec.lambdas) {
      os << "b=" << b << '\t' << format_number(l);
      for (std::size_t k = 0; k < r.spec.epsilons.size(); ++k, ++i) {
        const auto& c = r.cells[i];
        os << '\t';
        if (c.error.empty())
          os << 100.0 * c.val_f1;
        else
          os << "failed";
      }
      os << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json to_json(const GridResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json j{{"batch_size", c.batch_size}, {"epsilon", c.epsilon},     {"lambda", c.lambda},
                     {"seed", c.seed},             {"val_macro_f1", c.val_f1}, {"best_epoch", c.best_epoch},
                     {"epochs_run", c.epochs_run}};
    if (!c.error.empty()) j["error"] = c.error;
    cells.push_back(std::move(j));
  }
  const auto& best = r.cells[r.ranking.front()];
  return {{"batch_sizes", r.spec.batch_sizes},
          {"epsilons", r.spec.epsilons},
          {"lambdas", r.spec.lambdas},
          {"cells", cells},
          {"ranking", r.ranking},
          {"best", {{"batch_size", best.batch_size}, {"epsilon", best.epsilon}, {"lambda", best.lambda},
                    {"val_macro_f1", best.val_f1}}}};
}

}  // namespace rwpcl
