#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "miold/expr/expr.hpp"
#include "miold/geometry/geometry.hpp"
#include "miold/model/system_file.hpp"

#ifndef MIOLD_CORPUS_DIR
#define MIOLD_CORPUS_DIR "corpus"
#endif

namespace miold::test {

using expr::Expr;
using expr::ExprMatrix;
using expr::ExprVector;
using expr::ParamTable;
using model::MechanicalSystem;

inline std::filesystem::path corpus_file(const std::string& name) {
  return std::filesystem::path(MIOLD_CORPUS_DIR) / name;
}

inline model::SystemCase load_case(const std::string& file, const std::string& regime = {},
                                   const std::string& set = {}) {
  return model::build_system(model::SystemDocument::load(corpus_file(file)), regime, set);
}

inline expr::Point point_of(const model::SystemCase& c) {
  auto p = *c.point;
  p.params = c.system.params;
  return p;
}

/// Every (file, regime, output set) of the corpus, excluding prefeedback sets.
struct CorpusEntry {
  std::string file;
  std::string regime;
  std::string set;
};

inline std::vector<CorpusEntry> corpus_entries(bool include_prefeedback = false) {
  std::vector<CorpusEntry> out;
  for (const auto* file : {"double_pendulum_base.toml", "example1.toml", "iwp.toml", "tora3.toml"}) {
    const auto doc = model::SystemDocument::load(corpus_file(file));
    auto regimes = doc.regimes();
    auto sets = doc.output_sets();
    if (regimes.empty()) regimes.push_back("");
    if (sets.empty()) sets.push_back("");
    const auto pre = doc.sections().find("prefeedback");
    for (const auto& r : regimes)
      for (const auto& s : sets) {
        if (!include_prefeedback && pre != doc.sections().end() && pre->second.entries.contains(s)) continue;
        out.push_back({file, r, s});
      }
  }
  return out;
}

inline std::vector<double> uniform(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Central difference of e in variable i.
inline double central_difference(const Expr& e, std::vector<double> vars, int i, const ParamTable& params,
                                  double h = 1e-5) {
  const double x0 = vars[i];
  vars[i] = x0 + h;
  const double fp = expr::eval(e, vars, params);
  vars[i] = x0 - h;
  const double fm = expr::eval(e, vars, params);
  return (fp - fm) / (2 * h);
}

inline double relative_error(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max(floor, std::max(std::abs(a), std::abs(b)));
}

}  // namespace miold::test
