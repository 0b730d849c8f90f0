#include "jrrelp/metrics.hpp"

#include <cstdio>
#include <json.hpp>

namespace jrrelp {

namespace {

constexpr int kNoRel = 0;  // vocab convention: relation index 0 = NoRelation

double f1_of(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

std::map<int, RelationCounts> confusion(const std::vector<int>& preds,
                                        const std::vector<int>& golds) {
  if (preds.size() != golds.size())
    throw ValidationError("prf: prediction/gold length mismatch");
  std::map<int, RelationCounts> counts;
  for (size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], g = golds[i];
    if (p == g) {
      if (p != kNoRel) ++counts[p].tp;
      continue;
    }
    if (p != kNoRel) ++counts[p].fp;
    if (g != kNoRel) ++counts[g].fn;
  }
  return counts;
}

}  // namespace

EvalReport micro_prf(const std::vector<int>& preds, const std::vector<int>& golds) {
  EvalReport rep;
  rep.mode = Averaging::micro;
  rep.counts = confusion(preds, golds);
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [rel, c] : rep.counts) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  rep.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  rep.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  rep.f1 = f1_of(rep.precision, rep.recall);
  return rep;
}

EvalReport macro_prf(const std::vector<int>& preds, const std::vector<int>& golds) {
  EvalReport rep;
  rep.mode = Averaging::macro;
  rep.counts = confusion(preds, golds);
  if (rep.counts.empty()) return rep;
  double sp = 0, sr = 0, sf = 0;
  for (const auto& [rel, c] : rep.counts) {
    const double p = c.tp + c.fp > 0
                         ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                         : 0.0;
    const double r = c.tp + c.fn > 0
                         ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                         : 0.0;
    sp += p;
    sr += r;
    sf += f1_of(p, r);
  }
  const auto n = static_cast<double>(rep.counts.size());
  rep.precision = sp / n;
  rep.recall = sr / n;
  rep.f1 = sf / n;
  return rep;
}

std::string eval_report_json(const EvalReport& report, const Vocab& vocab) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode == Averaging::micro ? "micro" : "macro";
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  nlohmann::ordered_json per;
  for (const auto& [rel, c] : report.counts) {
    const std::string name = rel >= 0 && rel < vocab.num_relations()
                                 ? vocab.relations[static_cast<size_t>(rel)]
                                 : std::to_string(rel);
    per[name] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  }
  j["per_relation"] = std::move(per);
  return j.dump();
}

std::string format_metrics_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
  size_t width = 6;
  for (const auto& [label, rep] : rows) width = std::max(width, label.size());
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-*s %6s %6s %6s\n", static_cast<int>(width),
                "system", "P", "R", "F1");
  out += buf;
  for (const auto& [label, rep] : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %6.1f %6.1f %6.1f\n",
                  static_cast<int>(width), label.c_str(), 100.0 * rep.precision,
                  100.0 * rep.recall, 100.0 * rep.f1);
    out += buf;
  }
  return out;
}

}  // namespace jrrelp
