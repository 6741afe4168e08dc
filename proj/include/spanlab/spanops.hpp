#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "spanlab/error.hpp"

namespace spanlab {

// Character interval [start, end) with optional class and score.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::string> cls;
  std::optional<double> score;

  std::size_t length() const noexcept { return end - start; }
  bool same_extent(const Span& o) const noexcept { return start == o.start && end == o.end; }

  bool operator==(const Span&) const = default;
};

inline bool span_less(const Span& a, const Span& b) {
  return std::tie(a.start, a.end, a.cls) < std::tie(b.start, b.end, b.cls);
}

// Spans kept sorted by (start, end).
class SpanSet {
 public:
  SpanSet() = default;
  SpanSet(std::initializer_list<Span> spans) : SpanSet(std::vector<Span>(spans)) {}
  explicit SpanSet(std::vector<Span> spans) : spans_(std::move(spans)) {
    for (const auto& s : spans_)
      if (s.start >= s.end)
        throw ValidationError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                              ") is empty");
    std::stable_sort(spans_.begin(), spans_.end(), span_less);
  }

  const std::vector<Span>& spans() const noexcept { return spans_; }
  std::size_t size() const noexcept { return spans_.size(); }
  bool empty() const noexcept { return spans_.empty(); }
  auto begin() const { return spans_.begin(); }
  auto end() const { return spans_.end(); }
  const Span& operator[](std::size_t i) const { return spans_[i]; }

  bool operator==(const SpanSet&) const = default;

 private:
  std::vector<Span> spans_;
};

inline std::size_t overlap(const Span& a, const Span& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi > lo ? hi - lo : 0;
}

// Strict containment: `inner` lies within `outer` and has a different extent.
inline bool contains(const Span& outer, const Span& inner) {
  return outer.start <= inner.start && inner.end <= outer.end && !outer.same_extent(inner);
}

// Union-merge of intervals sharing at least one character, across all input
// sets. Touching intervals stay separate. All classes must agree.
inline SpanSet merge_ensemble(const std::vector<SpanSet>& sets) {
  if (sets.empty()) throw ValidationError("merge_ensemble needs at least one span set");
  std::vector<Span> all;
  for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
  std::optional<std::string> cls;
  bool first = true;
  for (const auto& s : all) {
    if (first) cls = s.cls, first = false;
    else if (s.cls != cls) throw ValidationError("cannot merge spans of different classes");
  }
  std::sort(all.begin(), all.end(), span_less);
  std::vector<Span> out;
  for (const auto& s : all) {
    if (!out.empty() && s.start < out.back().end) {
      out.back().end = std::max(out.back().end, s.end);
      if (s.score && (!out.back().score || *s.score > *out.back().score))
        out.back().score = s.score;
    } else {
      out.push_back(s);
    }
  }
  return SpanSet(std::move(out));
}

// Every (inner, outer) pair with strict containment, ordered by the inner span.
inline std::vector<std::pair<Span, Span>> find_nested_pairs(const SpanSet& set) {
  std::vector<std::pair<Span, Span>> out;
  for (const auto& inner : set)
    for (const auto& outer : set)
      if (contains(outer, inner)) out.emplace_back(inner, outer);
  return out;
}

}  // namespace spanlab
