#pragma once

// RE evaluation with the NoRelation convention: the negative class is
// excluded from both numerators and denominators, micro (pooled counts) and
// macro (unweighted mean over classes). Plus rank-based diagnostics for the
// KGLP head (never used for model selection, only for debugging).

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/corpus.hpp"

namespace jrrelp {

struct RelationCounts {
  long tp = 0, fp = 0, fn = 0;
};

enum class Averaging { micro, macro };

inline const char* to_string(Averaging a) {
  return a == Averaging::micro ? "micro" : "macro";
}

inline Averaging averaging_from_string(const std::string& s) {
  if (s == "micro") return Averaging::micro;
  if (s == "macro") return Averaging::macro;
  throw ConfigError("unknown averaging mode: '" + s + "' (want micro|macro)");
}

struct EvalReport {
  Averaging mode = Averaging::micro;
  double precision = 0, recall = 0, f1 = 0;
  std::map<int, RelationCounts> counts;  // per non-NoRelation relation index
};

// P = matching non-NoRelation predictions / all non-NoRelation predictions,
// R = same numerator / all non-NoRelation golds. Relation index 0 is the
// NoRelation class by vocab convention.
EvalReport micro_prf(const std::vector<int>& preds, const std::vector<int>& golds);

// Unweighted mean of per-class P/R/F1 over every non-NoRelation class that
// occurs in either vector.
EvalReport macro_prf(const std::vector<int>& preds, const std::vector<int>& golds);

std::string eval_report_json(const EvalReport& report, const Vocab& vocab);

// Fixed-width table, percentages with one decimal.
std::string format_metrics_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows);

struct KGLPDiagnostics {
  double hits1 = 0, hits10 = 0, mrr = 0;
  long ranked = 0;  // number of (example, gold) pairs scored
};

// Filtered ranking: each gold answer is ranked against the non-gold
// candidates only; ties resolve by candidate index (earlier index ranks
// first). rank = 1 + #strictly-higher + #ties-at-earlier-index.
template <typename S>
KGLPDiagnostics kglp_diagnostics(const ad::Mat<S>& scores, const ad::Mat<S>& targets,
                                 const ad::RowVec<S>& mask) {
  if (targets.rows() != scores.rows() || targets.cols() != scores.cols() ||
      mask.cols() != scores.cols())
    throw ValidationError("kglp_diagnostics: shape mismatch");
  KGLPDiagnostics d;
  for (Eigen::Index b = 0; b < scores.cols(); ++b) {
    if (mask(0, b) != S(1)) continue;
    for (Eigen::Index g = 0; g < scores.rows(); ++g) {
      if (targets(g, b) != S(1)) continue;
      long rank = 1;
      for (Eigen::Index c = 0; c < scores.rows(); ++c) {
        if (c == g || targets(c, b) == S(1)) continue;  // filter other golds
        if (scores(c, b) > scores(g, b) ||
            (scores(c, b) == scores(g, b) && c < g))
          ++rank;
      }
      d.mrr += 1.0 / static_cast<double>(rank);
      d.hits1 += rank <= 1 ? 1.0 : 0.0;
      d.hits10 += rank <= 10 ? 1.0 : 0.0;
      ++d.ranked;
    }
  }
  if (d.ranked > 0) {
    d.mrr /= static_cast<double>(d.ranked);
    d.hits1 /= static_cast<double>(d.ranked);
    d.hits10 /= static_cast<double>(d.ranked);
  }
  return d;
}

}  // namespace jrrelp
