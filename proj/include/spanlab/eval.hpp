#pragma once

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "spanlab/error.hpp"
#include "spanlab/numeric.hpp"
#include "spanlab/spanops.hpp"
#include "spanlab/tagcodec.hpp"

namespace spanlab {

struct SpanScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

inline double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace detail {

inline bool labels_match(const Span& a, const Span& b) {
  return !a.cls || !b.cls || *a.cls == *b.cls;
}

struct OverlapSums {
  double precision_sum = 0.0;  // sum over pairs of |s & t| / |s|
  double recall_sum = 0.0;     // sum over pairs of |s & t| / |t|
};

inline OverlapSums overlap_sums(const SpanSet& pred, const SpanSet& gold) {
  OverlapSums out;
  for (const auto& s : pred)
    for (const auto& t : gold) {
      if (!labels_match(s, t)) continue;
      const double o = static_cast<double>(overlap(s, t));
      if (o == 0.0) continue;
      out.precision_sum += o / static_cast<double>(s.length());
      out.recall_sum += o / static_cast<double>(t.length());
    }
  return out;
}

inline SpanScore finish(const OverlapSums& sums, std::size_t n_pred, std::size_t n_gold) {
  SpanScore sc;
  sc.predicted = n_pred;
  sc.gold = n_gold;
  if (n_pred == 0 && n_gold == 0) {
    sc.precision = sc.recall = sc.f1 = 1.0;
    return sc;
  }
  sc.precision = n_pred ? sums.precision_sum / static_cast<double>(n_pred) : 0.0;
  sc.recall = n_gold ? sums.recall_sum / static_cast<double>(n_gold) : 0.0;
  sc.f1 = f1_of(sc.precision, sc.recall);
  return sc;
}

}  // namespace detail

// Proportional-overlap scoring: each predicted span earns the fraction of its
// characters covered by (label-compatible) gold spans, and vice versa for
// recall. Too-long predictions lose precision, too-short ones lose recall.
inline SpanScore span_f1(const SpanSet& pred, const SpanSet& gold) {
  return detail::finish(detail::overlap_sums(pred, gold), pred.size(), gold.size());
}

// Corpus-level variant: pairs only interact within the same document.
inline SpanScore span_f1(const std::map<std::string, SpanSet>& pred,
                         const std::map<std::string, SpanSet>& gold) {
  detail::OverlapSums total;
  std::size_t n_pred = 0, n_gold = 0;
  for (const auto& [doc, s] : pred) n_pred += s.size();
  for (const auto& [doc, t] : gold) {
    n_gold += t.size();
    auto it = pred.find(doc);
    if (it == pred.end()) continue;
    auto sums = detail::overlap_sums(it->second, t);
    total.precision_sum += sums.precision_sum;
    total.recall_sum += sums.recall_sum;
  }
  return detail::finish(total, n_pred, n_gold);
}

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationScore {
  double micro_f1 = 0.0;
  std::map<std::string, ClassScore> per_class;
};

// Instances grouped by key (e.g. span coordinates); within a group, labels
// are matched as multisets so permuted multi-label assignments still count.
inline ClassificationScore micro_f1_grouped(
    const std::vector<std::pair<std::string, std::string>>& pred,   // (group key, label)
    const std::vector<std::pair<std::string, std::string>>& gold) {
  std::map<std::string, std::multiset<std::string>> p, g;
  for (const auto& [k, l] : pred) p[k].insert(l);
  for (const auto& [k, l] : gold) g[k].insert(l);
  std::map<std::string, std::size_t> tp, n_pred, n_gold;
  std::size_t tp_all = 0;
  for (const auto& [k, labels] : p)
    for (const auto& l : labels) ++n_pred[l];
  for (const auto& [k, labels] : g) {
    for (const auto& l : labels) ++n_gold[l];
    auto it = p.find(k);
    if (it == p.end()) continue;
    std::multiset<std::string> remaining = it->second;
    for (const auto& l : labels) {
      auto hit = remaining.find(l);
      if (hit == remaining.end()) continue;
      remaining.erase(hit);
      ++tp[l];
      ++tp_all;
    }
  }
  ClassificationScore out;
  const double prec = pred.empty() ? 0.0 : static_cast<double>(tp_all) / pred.size();
  const double rec = gold.empty() ? 0.0 : static_cast<double>(tp_all) / gold.size();
  out.micro_f1 = (pred.empty() && gold.empty()) ? 1.0 : f1_of(prec, rec);
  std::set<std::string> classes;
  for (const auto& [l, n] : n_pred) classes.insert(l);
  for (const auto& [l, n] : n_gold) classes.insert(l);
  for (const auto& c : classes) {
    ClassScore cs;
    cs.support = n_gold[c];
    cs.precision = n_pred[c] ? static_cast<double>(tp[c]) / n_pred[c] : 0.0;
    cs.recall = n_gold[c] ? static_cast<double>(tp[c]) / n_gold[c] : 0.0;
    cs.f1 = f1_of(cs.precision, cs.recall);
    out.per_class[c] = cs;
  }
  return out;
}

// Micro-averaged F1 over aligned single-label instances.
inline double micro_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.size() != gold.size())
    throw ValidationError("micro_f1: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(gold.size()) + " gold labels");
  std::vector<std::pair<std::string, std::string>> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p.emplace_back(std::to_string(i), pred[i]);
    g.emplace_back(std::to_string(i), gold[i]);
  }
  return micro_f1_grouped(p, g).micro_f1;
}

// Token-level P/R/F1 over non-O tags; a hit needs the same class.
inline SpanScore token_f1(const TagSequence& pred, const TagSequence& gold) {
  if (pred.size() != gold.size())
    throw ValidationError("token_f1: sequences differ in length");
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& a = pred.tags[i];
    const auto& b = gold.tags[i];
    np += !a.is_outside();
    ng += !b.is_outside();
    tp += !a.is_outside() && !b.is_outside() && a.cls == b.cls;
  }
  SpanScore sc;
  sc.predicted = np;
  sc.gold = ng;
  if (np == 0 && ng == 0) {
    sc.precision = sc.recall = sc.f1 = 1.0;
    return sc;
  }
  sc.precision = np ? static_cast<double>(tp) / np : 0.0;
  sc.recall = ng ? static_cast<double>(tp) / ng : 0.0;
  sc.f1 = f1_of(sc.precision, sc.recall);
  return sc;
}

// metric TAB value lines.
inline std::string format_report(const std::vector<std::pair<std::string, double>>& rows) {
  std::string out;
  for (const auto& [k, v] : rows) out += k + '\t' + format_double(v) + '\n';
  return out;
}

inline std::vector<std::pair<std::string, double>> report_rows(const SpanScore& s) {
  return {{"precision", s.precision},
          {"recall", s.recall},
          {"f1", s.f1},
          {"predicted", static_cast<double>(s.predicted)},
          {"gold", static_cast<double>(s.gold)}};
}

inline std::vector<std::pair<std::string, double>> report_rows(const ClassificationScore& s) {
  std::vector<std::pair<std::string, double>> rows{{"micro_f1", s.micro_f1}};
  for (const auto& [c, cs] : s.per_class) {
    rows.emplace_back("precision[" + c + "]", cs.precision);
    rows.emplace_back("recall[" + c + "]", cs.recall);
    rows.emplace_back("f1[" + c + "]", cs.f1);
    rows.emplace_back("support[" + c + "]", static_cast<double>(cs.support));
  }
  return rows;
}

}  // namespace spanlab
