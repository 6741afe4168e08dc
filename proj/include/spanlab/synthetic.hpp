#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "spanlab/corpus.hpp"
#include "spanlab/crf.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/spanops.hpp"

// Seeded synthetic corpora for exercising the pipelines end to end without an
// upstream neural model.
namespace spanlab::synthetic {

// Portable random source: explicit uniform/normal transforms so fixtures do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * uniform());
  }

 private:
  std::mt19937_64 eng_;
};

inline std::string random_word(Rng& rng) {
  static const char* syll[] = {"ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "zi", "pa",
                               "do", "fe", "gu", "ho", "ji", "bre", "sto", "tra"};
  std::string w;
  const std::size_t n = rng.between(1, 3);
  for (std::size_t i = 0; i < n; ++i) w += syll[rng.below(std::size(syll))];
  return w;
}

// Builds text from a token stream: no space before closing punctuation or
// after an opening quote.
class TextBuilder {
 public:
  // Appends a token and returns its character range.
  std::pair<std::size_t, std::size_t> add(const std::string& tok, bool attach_left) {
    if (!text_.empty() && !attach_left && !after_open_) {
      text_ += ' ';
      ++len_;
    }
    const std::size_t start = len_;
    text_ += tok;
    len_ += utf8::decode(tok).size();
    after_open_ = false;
    return {start, len_};
  }
  void mark_open_quote() { after_open_ = true; }
  void newline() {
    text_ += '\n';
    ++len_;
    after_open_ = true;
  }
  std::size_t length() const { return len_; }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
  std::size_t len_ = 0;
  bool after_open_ = false;
};

// ---------------------------------------------------------------------------
// Span identification fixture
// ---------------------------------------------------------------------------

struct IdentificationOptions {
  std::size_t train_docs = 40;
  std::size_t test_docs = 25;
  std::size_t sentences_per_doc = 8;
  std::size_t ensemble_size = 3;
  double signal = 1.6;       // emission bonus for the gold tag
  double noise = 1.0;        // std-dev of per-cell noise
  double boundary_punct_bias = 2.2;  // pull of punctuation next to a span into it
};

struct IdentificationFixture {
  std::map<std::string, Document> train_docs;
  std::map<std::string, Document> test_docs;
  std::vector<Annotation> train_gold;
  std::vector<Annotation> test_gold;
  // [member][doc] emissions; doc order follows the document maps.
  std::vector<std::vector<EmissionMatrix>> train_emissions;
  std::vector<std::vector<EmissionMatrix>> test_emissions;
};

namespace detail {

struct GeneratedDoc {
  Document doc;
  std::vector<Annotation> gold;
  std::vector<TokenSpan> tokens;
  std::vector<Tag> gold_tags;        // BIO, with quote-enclosed spans covering quotes
  std::vector<bool> boundary_punct;  // punctuation touching a gold span from outside
};

inline GeneratedDoc generate_identification_doc(const std::string& id, Rng& rng,
                                                const IdentificationOptions& opt) {
  TextBuilder tb;
  struct Tok {
    std::size_t start, end;
    bool punct;
  };
  std::vector<Tok> toks;
  std::vector<std::pair<std::size_t, std::size_t>> span_tok;  // token ranges of gold spans
  auto push = [&](const std::string& s, bool attach, bool punct) {
    auto [a, b] = tb.add(s, attach);
    toks.push_back({a, b, punct});
  };
  for (std::size_t s = 0; s < opt.sentences_per_doc; ++s) {
    const std::size_t n_words = rng.between(10, 18);
    std::size_t w = 0;
    while (w < n_words) {
      if (rng.chance(0.18) && n_words - w >= 4) {
        const std::size_t len = rng.between(2, std::min<std::size_t>(6, n_words - w));
        const bool quoted = rng.chance(0.3);
        const std::size_t first = toks.size();
        if (quoted) {
          push("\"", false, true);
          tb.mark_open_quote();
        }
        for (std::size_t i = 0; i < len; ++i) push(random_word(rng), false, false);
        if (quoted) {
          push(rng.chance(0.5) ? "." : "!", true, true);
          push("\"", true, true);
        }
        span_tok.emplace_back(first, toks.size());
        w += len;
        if (w < n_words && rng.chance(0.4)) push(",", true, true);
      } else {
        push(random_word(rng), false, false);
        ++w;
        if (w < n_words && rng.chance(0.1)) push(",", true, true);
      }
    }
    push(".", true, true);
    if (rng.chance(0.3)) tb.newline();
  }
  GeneratedDoc g{Document(id, tb.text()), {}, {}, {}, {}};
  g.tokens = tokenize(g.doc);
  g.gold_tags.assign(g.tokens.size(), Tag::outside());
  g.boundary_punct.assign(g.tokens.size(), false);
  for (auto [b, e] : span_tok) {
    g.gold.push_back({id, "PROP", toks[b].start, toks[e - 1].end});
    g.gold_tags[b] = Tag::make(Prefix::B, "PROP");
    for (std::size_t t = b + 1; t < e; ++t) g.gold_tags[t] = Tag::make(Prefix::I, "PROP");
    if (e < toks.size() && toks[e].punct) g.boundary_punct[e] = true;
  }
  return g;
}

inline EmissionMatrix noisy_emissions(const GeneratedDoc& g, Rng& rng,
                                      const IdentificationOptions& opt) {
  const std::vector<Tag> order = tag_inventory(Scheme::BIO, {"PROP"});
  EmissionMatrix em{g.doc.id(), order, g.tokens, Matrix(g.tokens.size(), order.size()), std::nullopt};
  for (std::size_t t = 0; t < g.tokens.size(); ++t) {
    for (std::size_t k = 0; k < order.size(); ++k) em.scores(t, k) = opt.noise * rng.normal();
    const std::size_t gold = *tag_index(order, g.gold_tags[t]);
    em.scores(t, gold) += opt.signal;
    // B and I look alike to a token classifier: share part of the bonus.
    if (gold == 1) em.scores(t, 2) += 0.6 * opt.signal;
    if (gold == 2) em.scores(t, 1) += 0.6 * opt.signal;
    if (g.boundary_punct[t]) em.scores(t, 2) += opt.boundary_punct_bias;
  }
  return em;
}

}  // namespace detail

inline IdentificationFixture make_identification_fixture(std::uint64_t seed,
                                                         const IdentificationOptions& opt = {}) {
  Rng rng(seed);
  IdentificationFixture fx;
  fx.train_emissions.resize(opt.ensemble_size);
  fx.test_emissions.resize(opt.ensemble_size);
  auto build = [&](std::size_t n, const std::string& prefix, auto& docs, auto& gold, auto& ems) {
    std::vector<detail::GeneratedDoc> gen;
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s%03zu", prefix.c_str(), i);
      gen.push_back(detail::generate_identification_doc(id, rng, opt));
    }
    for (auto& g : gen) {
      gold.insert(gold.end(), g.gold.begin(), g.gold.end());
      docs.emplace(g.doc.id(), g.doc);
    }
    for (std::size_t m = 0; m < opt.ensemble_size; ++m)
      for (const auto& g : gen) ems[m].push_back(detail::noisy_emissions(g, rng, opt));
  };
  build(opt.train_docs, "9", fx.train_docs, fx.train_gold, fx.train_emissions);
  build(opt.test_docs, "1", fx.test_docs, fx.test_gold, fx.test_emissions);
  return fx;
}

// ---------------------------------------------------------------------------
// Span classification fixture
// ---------------------------------------------------------------------------

struct ClassificationOptions {
  std::size_t train_docs = 40;
  std::size_t test_docs = 25;
  std::size_t spans_per_doc = 10;
  std::size_t repeated_phrases_per_doc = 1;
};

struct ClassificationFixture {
  Corpus train;
  Corpus test;
  std::vector<std::string> classes{"Long", "Repetition", "Short"};
};

namespace detail {

inline Corpus generate_classification_corpus(std::size_t n_docs, const std::string& prefix,
                                             Rng& rng, const ClassificationOptions& opt) {
  // Span words come from a tiny shared vocabulary so that word identity says
  // little about the class; length separates Short from Long.
  static const char* span_vocab[] = {"war", "enemy", "nation"};
  auto phrase = [&](std::size_t len) {
    std::vector<std::string> w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(span_vocab[rng.below(std::size(span_vocab))]);
    return w;
  };
  std::map<std::string, Document> docs;
  std::vector<Annotation> anns;
  for (std::size_t d = 0; d < n_docs; ++d) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "%s%03zu", prefix.c_str(), d);
    const std::string id = idbuf;
    struct Planned {
      std::vector<std::string> words;
      std::string label;
    };
    std::vector<Planned> planned;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < opt.repeated_phrases_per_doc; ++r) {
      auto w = phrase(rng.between(2, 8));
      std::string key;
      for (auto& x : w) key += x + " ";
      if (!seen.insert(key).second) continue;
      for (int c = 0; c < 3; ++c) planned.push_back({w, "Repetition"});
    }
    while (planned.size() < opt.spans_per_doc + 3 * opt.repeated_phrases_per_doc) {
      const bool is_long = rng.chance(0.5);
      auto w = phrase(is_long ? rng.between(5, 8) : rng.between(1, 3));
      std::string key;
      for (auto& x : w) key += x + " ";
      if (!seen.insert(key).second) continue;
      planned.push_back({w, is_long ? "Long" : "Short"});
    }
    for (std::size_t i = planned.size(); i > 1; --i) std::swap(planned[i - 1], planned[rng.below(i)]);
    TextBuilder tb;
    for (const auto& p : planned) {
      for (std::size_t f = rng.between(2, 5); f > 0; --f) tb.add(random_word(rng), false);
      std::size_t start = 0, end = 0;
      for (std::size_t i = 0; i < p.words.size(); ++i) {
        auto [a, b] = tb.add(p.words[i], false);
        if (i == 0) start = a;
        end = b;
      }
      anns.push_back({id, p.label, start, end});
      tb.add(random_word(rng), false);
      tb.add(".", true);
    }
    docs.emplace(id, Document(id, tb.text()));
  }
  return Corpus(std::move(docs), std::move(anns));
}

}  // namespace detail

inline ClassificationFixture make_classification_fixture(std::uint64_t seed,
                                                         const ClassificationOptions& opt = {}) {
  Rng rng(seed);
  ClassificationFixture fx;
  fx.train = detail::generate_classification_corpus(opt.train_docs, "8", rng, opt);
  fx.test = detail::generate_classification_corpus(opt.test_docs, "2", rng, opt);
  return fx;
}

}  // namespace spanlab::synthetic
