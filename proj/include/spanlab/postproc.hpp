#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spanlab/corpus.hpp"
#include "spanlab/error.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/matrix.hpp"
#include "spanlab/numeric.hpp"
#include "spanlab/spanops.hpp"

namespace spanlab {

// ---------------------------------------------------------------------------
// Boundary fixing
// ---------------------------------------------------------------------------

struct PunctuationRuleConfig {
  std::u32string punctuation_set = U".,;:!?'\"—-()[]“”‘’";
  std::vector<std::pair<char32_t, char32_t>> quote_pairs = {
      {U'"', U'"'}, {U'\'', U'\''}, {U'“', U'”'}, {U'‘', U'’'}};

  bool is_punct(char32_t c) const {
    return punctuation_set.find(c) != std::u32string::npos;
  }
  std::optional<char32_t> closer_for(char32_t open) const {
    for (auto [o, c] : quote_pairs)
      if (o == open) return c;
    return std::nullopt;
  }
  std::optional<char32_t> opener_for(char32_t close) const {
    for (auto [o, c] : quote_pairs)
      if (c == close) return o;
    return std::nullopt;
  }
  bool is_pair(char32_t open, char32_t close) const {
    for (auto [o, c] : quote_pairs)
      if (o == open && c == close) return true;
    return false;
  }

  void check() const {
    for (auto [o, c] : quote_pairs)
      if (!is_punct(o) || !is_punct(c))
        throw ConfigError("quote characters must be part of the punctuation set");
  }
};

namespace detail {

inline bool strippable(char32_t c, const PunctuationRuleConfig& cfg) {
  return cfg.is_punct(c) || utf8::is_space(c);
}

}  // namespace detail

// A span may not begin or end with punctuation unless the two boundary
// characters form a quote pair. Missing quotes just outside the span are
// added first (across an adjacent run of punctuation), then remaining
// boundary punctuation and whitespace are stripped. A span that would become
// empty is returned unchanged.
inline Span fix_boundaries(const Span& span, std::u32string_view text,
                           const PunctuationRuleConfig& cfg = {}) {
  if (span.start >= span.end || span.end > text.size())
    throw ValidationError("span outside document in fix_boundaries");
  std::size_t s = span.start;
  std::size_t e = span.end;
  const std::size_t n = text.size();
  auto enclosed = [&](std::size_t a, std::size_t b) {
    return b - a >= 2 && cfg.is_pair(text[a], text[b - 1]);
  };

  if (!enclosed(s, e)) {
    bool extended = false;
    if (auto close = cfg.closer_for(text[s])) {
      for (std::size_t j = e; j < n && cfg.is_punct(text[j]); ++j) {
        if (text[j] == *close) {
          e = j + 1;
          extended = true;
          break;
        }
      }
    }
    if (!extended) {
      if (auto open = cfg.opener_for(text[e - 1])) {
        for (std::size_t j = s; j-- > 0 && cfg.is_punct(text[j]);) {
          if (text[j] == *open) {
            s = j;
            extended = true;
            break;
          }
        }
      }
    }
    if (!extended && !cfg.closer_for(text[s]) && !cfg.opener_for(text[e - 1]) &&
        (cfg.is_punct(text[s]) || cfg.is_punct(text[e - 1])) && s > 0 && e < n &&
        cfg.is_pair(text[s - 1], text[e])) {
      --s;
      ++e;
    }
  }

  while (e > s && !enclosed(s, e)) {
    if (detail::strippable(text[s], cfg)) ++s;
    else if (detail::strippable(text[e - 1], cfg)) --e;
    else break;
  }
  if (e <= s) return span;
  Span out = span;
  out.start = s;
  out.end = e;
  return out;
}

// ---------------------------------------------------------------------------
// Repetition rule
// ---------------------------------------------------------------------------

struct RepetitionRuleConfig {
  double t1 = 0.001;
  double t2 = 0.99;
  std::string class_name = "Repetition";

  void check() const {
    if (!(0.0 <= t1 && t1 <= t2 && t2 <= 1.0))
      throw ConfigError("repetition thresholds must satisfy 0 <= t1 <= t2 <= 1");
  }
};

// New score for the repetition class given its predicted probability `p` and
// the number `k` of identical spans in the article.
inline double repetition_score(double p, long k, const RepetitionRuleConfig& cfg) {
  if (k < 1) throw ValidationError("occurrence count must be at least 1");
  if (k >= 3 || (k == 2 && p >= cfg.t1)) return 1.0;
  if (k == 1 && p <= cfg.t2) return 0.0;
  return p;
}

// Other classes are left as they are; the result is a score map, not a
// renormalized distribution.
inline SpanProbs apply_repetition(SpanProbs probs, long k, const RepetitionRuleConfig& cfg = {}) {
  cfg.check();
  auto it = probs.find(cfg.class_name);
  const double p = it == probs.end() ? 0.0 : it->second;
  probs[cfg.class_name] = repetition_score(p, k, cfg);
  return probs;
}

// Number of texts in `article_span_texts` equal to `span_text` after
// whitespace normalization and case folding. The span itself should be part
// of the list.
inline long count_occurrences(std::string_view span_text,
                              const std::vector<std::string>& article_span_texts) {
  const std::string key = normalize_text(span_text);
  long k = 0;
  for (const auto& t : article_span_texts)
    if (normalize_text(t) == key) ++k;
  return k;
}

// ---------------------------------------------------------------------------
// Gazetteer boost
// ---------------------------------------------------------------------------

struct GazetteerBoostConfig {
  double delta = 0.5;

  void check() const {
    if (!(delta >= 0.0)) throw ConfigError("gazetteer delta must be non-negative");
  }
};

inline SpanProbs apply_gazetteer_boost(SpanProbs scores, const std::optional<SpanProbs>& hit,
                                       const GazetteerBoostConfig& cfg = {}) {
  cfg.check();
  if (!hit) return scores;
  for (const auto& [cls, p] : *hit)
    if (p > 0.0) scores[cls] += cfg.delta;
  return scores;
}

// ---------------------------------------------------------------------------
// Labels from scores
// ---------------------------------------------------------------------------

// Highest score; ties go to the lexicographically smallest class.
inline std::string argmax_label(const SpanProbs& scores) {
  if (scores.empty()) throw ValidationError("argmax of an empty score map");
  auto best = scores.begin();
  for (auto it = scores.begin(); it != scores.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

// Classes by descending score, ties lexicographic.
inline std::vector<std::string> ranked_labels(const SpanProbs& scores) {
  std::vector<std::pair<std::string, double>> v(scores.begin(), scores.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (auto& [c, p] : v) out.push_back(c);
  return out;
}

// Labels for n copies of the same span: the n best classes, best first.
inline std::vector<std::string> assign_multilabel(std::size_t n, const SpanProbs& scores) {
  if (n > scores.size())
    throw ValidationError("cannot assign " + std::to_string(n) + " distinct labels from " +
                          std::to_string(scores.size()) + " classes");
  auto ranked = ranked_labels(scores);
  ranked.resize(n);
  return ranked;
}

// ---------------------------------------------------------------------------
// Nesting consistency
// ---------------------------------------------------------------------------

// Counts of class x nested inside class y observed in training data.
struct NestingModel {
  std::vector<std::string> classes;
  Matrix cooccurrence;  // (inner, outer)
  double temperature = 0.26;

  std::optional<std::size_t> index(const std::string& c) const {
    auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  }

  // softmax(count / temperature) over all C*C cells.
  Matrix nesting_probabilities() const {
    if (!(temperature > 0.0)) throw ConfigError("nesting temperature must be positive");
    const std::size_t c = classes.size();
    std::vector<double> logits(c * c);
    for (std::size_t i = 0; i < c * c; ++i) logits[i] = cooccurrence.data()[i] / temperature;
    Matrix out(c, c);
    out.data() = softmax(logits);
    return out;
  }

  std::set<std::pair<std::string, std::string>> allowed_pairs() const {
    std::set<std::pair<std::string, std::string>> out;
    for (std::size_t x = 0; x < classes.size(); ++x)
      for (std::size_t y = 0; y < classes.size(); ++y)
        if (cooccurrence(x, y) > 0) out.emplace(classes[x], classes[y]);
    return out;
  }
};

inline NestingModel build_nesting_model(const Corpus& corpus, std::vector<std::string> classes,
                                        double temperature = 0.26) {
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  NestingModel m{classes, Matrix(classes.size(), classes.size()), temperature};
  for (const auto& [id, doc] : corpus.documents()) {
    auto anns = corpus.annotations_for(id);
    for (const auto& inner : anns)
      for (const auto& outer : anns) {
        Span a{inner.start, inner.end, {}, {}};
        Span b{outer.start, outer.end, {}, {}};
        if (!contains(b, a)) continue;
        auto x = m.index(inner.label);
        auto y = m.index(outer.label);
        if (x && y) m.cooccurrence(*x, *y) += 1.0;
      }
  }
  return m;
}

struct NestingResolution {
  std::string inner;
  std::string outer;
  bool fallback = false;  // no allowed pair; independent argmaxes returned

  bool operator==(const NestingResolution&) const = default;
};

namespace detail {

inline double prob_of(const SpanProbs& p, const std::string& c) {
  auto it = p.find(c);
  return it == p.end() ? 0.0 : it->second;
}

}  // namespace detail

// Most probable (inner, outer) pair among those seen nested in training.
// `fixed_inner` pins the inner label (used when resolving chains outward).
inline NestingResolution resolve_nesting_strategy1(
    const SpanProbs& inner, const SpanProbs& outer,
    const std::set<std::pair<std::string, std::string>>& allowed,
    const std::optional<std::string>& fixed_inner = std::nullopt) {
  std::optional<NestingResolution> best;
  double best_score = kNegInf;
  for (const auto& [x, y] : allowed) {  // lexicographic order
    if (fixed_inner && x != *fixed_inner) continue;
    const double v = detail::prob_of(inner, x) * detail::prob_of(outer, y);
    if (!best || v > best_score) {
      best = NestingResolution{x, y, false};
      best_score = v;
    }
  }
  if (best) return *best;
  return {fixed_inner ? *fixed_inner : argmax_label(inner), argmax_label(outer), true};
}

// argmax over class pairs of p_inner(x) * p_outer(y) * p(x nested in y).
inline NestingResolution resolve_nesting_strategy2(
    const SpanProbs& inner, const SpanProbs& outer, const NestingModel& model,
    const std::optional<std::string>& fixed_inner = std::nullopt) {
  const Matrix pa = model.nesting_probabilities();
  std::vector<std::size_t> order(model.classes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return model.classes[a] < model.classes[b]; });
  std::optional<NestingResolution> best;
  double best_score = kNegInf;
  for (std::size_t x : order) {
    if (fixed_inner && model.classes[x] != *fixed_inner) continue;
    for (std::size_t y : order) {
      const double v = detail::prob_of(inner, model.classes[x]) *
                       detail::prob_of(outer, model.classes[y]) * pa(x, y);
      if (!best || v > best_score) {
        best = NestingResolution{model.classes[x], model.classes[y], false};
        best_score = v;
      }
    }
  }
  if (best) return *best;
  return {fixed_inner ? *fixed_inner : argmax_label(inner), argmax_label(outer), true};
}

}  // namespace spanlab
