#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spanlab/corpus.hpp"
#include "spanlab/error.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/numeric.hpp"
#include "spanlab/porter.hpp"

namespace spanlab {

// 64-bit FNV-1a.
inline constexpr std::uint64_t feature_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sparse hashed features. Collisions are accepted.
class FeatureVector {
 public:
  void set(std::string_view name, double v) { values_[feature_hash(name)] = v; }
  void add(std::string_view name, double v) { values_[feature_hash(name)] += v; }

  double get(std::string_view name) const {
    auto it = values_.find(feature_hash(name));
    return it == values_.end() ? 0.0 : it->second;
  }
  bool has(std::string_view name) const { return values_.contains(feature_hash(name)); }

  const std::map<std::uint64_t, double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::map<std::uint64_t, double> values_;
};

// Character-length bins: bin i covers [edges[i-1], edges[i]), the last bin
// is open-ended.
class LengthBinning {
 public:
  LengthBinning() : LengthBinning({1, 2, 3, 5, 8, 13, 21, 34, 55, 89}) {}
  explicit LengthBinning(std::vector<std::size_t> edges) : edges_(std::move(edges)) {
    for (std::size_t i = 1; i < edges_.size(); ++i)
      if (edges_[i] <= edges_[i - 1]) throw ConfigError("binning edges must be strictly ascending");
  }

  std::size_t bin(std::size_t length) const {
    return static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), length) -
                                    edges_.begin());
  }
  std::size_t num_bins() const noexcept { return edges_.size() + 1; }
  const std::vector<std::size_t>& edges() const noexcept { return edges_; }

 private:
  std::vector<std::size_t> edges_;
};

struct FeatureOptions {
  bool length = true;
  bool punctuation = true;
  bool span_words = true;
  bool context_words = true;
};

namespace detail {

inline bool is_quote(char32_t c) {
  switch (c) {
    case U'"': case U'\'': case U'“': case U'”': case U'‘': case U'’': case U'«': case U'»':
      return true;
    default:
      return false;
  }
}

}  // namespace detail

// Feature names: len_chars, len_tokens, len_bin=<i>, quest_count,
// excl_count, quote_count, w=<stem> (span words), ctx=<stem> (context words).
// Word features are binary presence indicators.
inline FeatureVector featurize_span(std::string_view span_text, std::string_view context,
                                    const LengthBinning& binning = {},
                                    const FeatureOptions& opt = {}) {
  FeatureVector fv;
  const std::u32string chars = utf8::decode(span_text);
  const auto tokens = tokenize(std::u32string_view(chars));
  if (opt.length) {
    fv.set("len_chars", static_cast<double>(chars.size()));
    fv.set("len_tokens", static_cast<double>(tokens.size()));
    fv.set("len_bin=" + std::to_string(binning.bin(chars.size())), 1.0);
  }
  if (opt.punctuation) {
    double q = 0, e = 0, quotes = 0;
    for (char32_t c : chars) {
      q += c == U'?';
      e += c == U'!';
      quotes += detail::is_quote(c);
    }
    fv.set("quest_count", q);
    fv.set("excl_count", e);
    fv.set("quote_count", quotes);
  }
  auto bag = [&](const std::vector<TokenSpan>& toks, std::string_view ns) {
    for (const auto& t : toks)
      if (utf8::is_word_char(utf8::decode(t.text).front()))
        fv.set(std::string(ns) + stem(t.text), 1.0);
  };
  if (opt.span_words) bag(tokens, "w=");
  if (opt.context_words) bag(tokenize(context), "ctx=");
  return fv;
}

// The sentence around [start, end): boundaries are newlines and . ! ?
// followed by whitespace.
inline std::string containing_sentence(const Document& doc, std::size_t start, std::size_t end) {
  const auto& c = doc.chars();
  auto boundary_after = [&](std::size_t i) {  // a sentence ends right after c[i]
    if (c[i] == U'\n') return true;
    return (c[i] == U'.' || c[i] == U'!' || c[i] == U'?') && i + 1 < c.size() &&
           utf8::is_space(c[i + 1]);
  };
  std::size_t lo = std::min(start, c.size());
  while (lo > 0 && !boundary_after(lo - 1)) --lo;
  std::size_t hi = std::min(end, c.size());
  while (hi < c.size() && !(hi > 0 && boundary_after(hi - 1))) ++hi;
  return doc.slice(lo, hi);
}

struct SoftmaxModel {
  std::vector<std::string> classes;  // sorted
  std::vector<double> bias;
  std::map<std::uint64_t, std::vector<double>> weights;

  std::size_t class_index(const std::string& c) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), c);
    if (it == classes.end() || *it != c) throw ValidationError("unknown class '" + c + "'");
    return static_cast<std::size_t>(it - classes.begin());
  }

  std::vector<double> logits(const FeatureVector& fv) const {
    std::vector<double> z = bias;
    for (const auto& [id, v] : fv.values()) {
      auto it = weights.find(id);
      if (it == weights.end()) continue;
      for (std::size_t k = 0; k < z.size(); ++k) z[k] += it->second[k] * v;
    }
    return z;
  }
};

struct LabeledFeatures {
  FeatureVector features;
  std::string label;
};

struct SoftmaxTrainConfig {
  double learning_rate = 1.0;  // initial step for the line search
  int epochs = 300;
  double l2 = 1e-4;
};

inline SpanProbs predict_proba(const SoftmaxModel& m, const FeatureVector& fv) {
  const auto p = softmax(m.logits(fv));
  SpanProbs out;
  for (std::size_t k = 0; k < m.classes.size(); ++k) out[m.classes[k]] = p[k];
  return out;
}

inline std::string predict_label(const SoftmaxModel& m, const FeatureVector& fv) {
  const auto z = m.logits(fv);
  return m.classes[static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin())];
}

// Mean cross-entropy plus l2 * ||W||^2 (bias unregularized), and its
// gradient in the same layout as the model.
inline double softmax_loss_and_gradient(const SoftmaxModel& m,
                                        const std::vector<LabeledFeatures>& data, double l2,
                                        SoftmaxModel* grad) {
  const std::size_t k = m.classes.size();
  if (grad) {
    grad->classes = m.classes;
    grad->bias.assign(k, 0.0);
    grad->weights.clear();
    for (const auto& [id, w] : m.weights) grad->weights[id].assign(k, 0.0);
  }
  double loss = 0.0;
  const double inv_n = data.empty() ? 0.0 : 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    const std::size_t y = m.class_index(ex.label);
    const auto z = m.logits(ex.features);
    const double lse = log_sum_exp(z);
    loss += (lse - z[y]) * inv_n;
    if (!grad) continue;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0)) * inv_n;
      grad->bias[c] += d;
      for (const auto& [id, v] : ex.features.values()) {
        auto it = grad->weights.find(id);
        if (it != grad->weights.end()) it->second[c] += d * v;
      }
    }
  }
  for (const auto& [id, w] : m.weights)
    for (std::size_t c = 0; c < k; ++c) {
      loss += l2 * w[c] * w[c];
      if (grad) grad->weights[id][c] += 2.0 * l2 * w[c];
    }
  return loss;
}

// Full-batch gradient descent with backtracking line search. Features are
// rescaled by their largest magnitude during training and the scale is
// folded back into the returned weights. Deterministic: starts from zero.
inline SoftmaxModel train_softmax(const std::vector<LabeledFeatures>& data,
                                  const SoftmaxTrainConfig& cfg = {}) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  std::vector<std::string> classes;
  for (const auto& ex : data) classes.push_back(ex.label);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ValidationError("softmax training needs at least two classes");

  std::map<std::uint64_t, double> scale;
  for (const auto& ex : data)
    for (const auto& [id, v] : ex.features.values()) scale[id] = std::max(scale[id], std::abs(v));

  // Optimize over w * scale; raw weights are recovered by dividing back out.
  SoftmaxModel model;
  model.classes = classes;
  model.bias.assign(classes.size(), 0.0);
  for (const auto& [id, s] : scale)
    if (s > 0.0) model.weights[id].assign(classes.size(), 0.0);
  auto to_raw = [&](const SoftmaxModel& ms) {
    SoftmaxModel r = ms;
    for (auto& [id, w] : r.weights)
      for (double& v : w) v /= scale.at(id);
    return r;
  };
  auto objective = [&](const SoftmaxModel& ms, SoftmaxModel* g) {
    const double loss = softmax_loss_and_gradient(to_raw(ms), data, cfg.l2, g);
    if (g)
      for (auto& [id, w] : g->weights)
        for (double& v : w) v /= scale.at(id);
    return loss;
  };

  double step = cfg.learning_rate;
  SoftmaxModel grad;
  double loss = objective(model, &grad);
  for (int it = 0; it < cfg.epochs; ++it) {
    double gnorm = 0.0;
    for (double v : grad.bias) gnorm += v * v;
    for (const auto& [id, w] : grad.weights)
      for (double v : w) gnorm += v * v;
    if (gnorm < 1e-20) break;
    step = std::min(cfg.learning_rate, step * 2.0);
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      SoftmaxModel cand = model;
      for (std::size_t c = 0; c < cand.bias.size(); ++c) cand.bias[c] -= step * grad.bias[c];
      for (auto& [id, w] : cand.weights) {
        const auto& gw = grad.weights.at(id);
        for (std::size_t c = 0; c < w.size(); ++c) w[c] -= step * gw[c];
      }
      const double cand_loss = objective(cand, nullptr);
      if (std::isfinite(cand_loss) && cand_loss <= loss - 1e-4 * step * gnorm) {
        model = std::move(cand);
        loss = objective(model, &grad);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return to_raw(model);
}

}  // namespace spanlab
