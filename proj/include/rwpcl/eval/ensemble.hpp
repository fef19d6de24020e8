#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/tensor.hpp"
#include "rwpcl/model/encoder.hpp"

namespace rwpcl::eval {

/// Class probabilities of one trained model over a test set: probs[n_test, C].
struct ProbabilityMatrix {
  std::string model_id;
  Tensor<double> probs;

  std::size_t rows() const { return probs.rows(); }
  std::size_t classes() const { return probs.cols(); }

  /// Rows on the simplex within `tol`, all entries in [0, 1].
  void validate(double tol = 1e-5) const {
    if (probs.rank() != 2) throw InputError("probabilities of " + model_id + " must be a matrix");
    const std::size_t c = classes();
    for (std::size_t i = 0; i < rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double v = probs.values[i * c + j];
        if (!(v >= 0.0 && v <= 1.0))
          throw InputError("probabilities of " + model_id + " row " + std::to_string(i) + " outside [0,1]");
        s += v;
      }
      if (std::abs(s - 1.0) > tol)
        throw InputError("probabilities of " + model_id + " row " + std::to_string(i) + " sum to " + std::to_string(s));
    }
  }
};

struct EnsembleResult {
  std::vector<int> labels;
  Tensor<double> mean_probs;
};

/// Uniform average of the models' probabilities, then row argmax (ties to the
/// lowest class). Each element is summed in sorted order so the result is
/// bit-identical under any ordering of the models.
inline EnsembleResult ensemble(std::span<const ProbabilityMatrix> models) {
  if (models.empty()) throw InputError("ensemble: no probability matrices");
  const Shape dims = models[0].probs.dims;
  for (const auto& m : models)
    if (m.probs.dims != dims)
      throw InputError("ensemble: model '" + m.model_id + "' has shape " + shape_str(m.probs.dims) + ", expected " +
                       shape_str(dims));
  EnsembleResult r;
  r.mean_probs = Tensor<double>(dims);
  std::vector<double> col(models.size());
  for (std::size_t i = 0; i < r.mean_probs.size(); ++i) {
    for (std::size_t m = 0; m < models.size(); ++m) col[m] = models[m].probs.values[i];
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (double v : col) s += v;
    r.mean_probs.values[i] = s / static_cast<double>(models.size());
  }
  r.labels = argmax_rows(r.mean_probs);
  return r;
}

/// JSON-lines: {"model_id": str, "index": int, "probs": [..]} per test example.
inline void save_probabilities(std::ostream& out, const ProbabilityMatrix& m) {
  const std::size_t c = m.classes();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.probs.values.begin() + i * c, m.probs.values.begin() + (i + 1) * c);
    out << nlohmann::json{{"model_id", m.model_id}, {"index", i}, {"probs", row}}.dump() << '\n';
  }
}

inline void save_probabilities(const std::string& path, std::span<const ProbabilityMatrix> ms) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write probability file: " + path);
  for (const auto& m : ms) save_probabilities(out, m);
  if (!out) throw IoError("write failed: " + path);
}

/// Loads every model in a probability file (grouped by model_id, ordered by
/// first appearance). Indices must cover 0..n-1 exactly; rows must be on the simplex.
inline std::vector<ProbabilityMatrix> load_probabilities(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open probability file: " + path);
  std::vector<std::string> order;
  std::map<std::string, std::map<std::size_t, std::vector<double>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("model_id").get<std::string>();
      auto idx = j.at("index").get<std::size_t>();
      auto p = j.at("probs").get<std::vector<double>>();
      if (!rows.count(id)) order.push_back(id);
      if (!rows[id].emplace(idx, std::move(p)).second) throw InputError(where + "duplicate index " + std::to_string(idx));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + "malformed row (" + e.what() + ")");
    }
  }
  std::vector<ProbabilityMatrix> out;
  for (const auto& id : order) {
    const auto& r = rows[id];
    const std::size_t n = r.size(), c = r.begin()->second.size();
    if (c == 0) throw InputError(path + ": model " + id + " has empty probability rows");
    ProbabilityMatrix m{id, Tensor<double>({n, c})};
    std::size_t expect = 0;
    for (const auto& [idx, p] : r) {
      if (idx != expect++) throw InputError(path + ": model " + id + " indices are not 0..n-1");
      if (p.size() != c) throw InputError(path + ": model " + id + " has ragged rows");
      std::copy(p.begin(), p.end(), m.probs.values.begin() + idx * c);
    }
    m.validate();
    out.push_back(std::move(m));
  }
  if (out.empty()) throw InputError(path + ": no rows");
  return out;
}

}  // namespace rwpcl::eval
