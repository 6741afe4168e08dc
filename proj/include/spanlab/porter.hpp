#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

#include "spanlab/utf8.hpp"

namespace spanlab {

// The original (1980) Porter suffix-stripping algorithm, steps 1a to 5b.
// Input is lowercased first; words of length <= 2 and words containing
// anything other than a-z are returned lowercased but otherwise unchanged.
class PorterStemmer {
 public:
  std::string operator()(std::string_view word) const {
    std::string w = utf8::to_lower(word);
    if (w.size() <= 2) return w;
    for (char c : w)
      if (c < 'a' || c > 'z') return w;
    Word s{std::move(w)};
    step1a(s);
    step1b(s);
    step1c(s);
    step2(s);
    step3(s);
    step4(s);
    step5a(s);
    step5b(s);
    return std::move(s.b);
  }

 private:
  struct Word {
    std::string b;

    bool consonant(std::size_t i) const {
      switch (b[i]) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return false;
        case 'y': return i == 0 || !consonant(i - 1);
        default: return true;
      }
    }

    // m in [C](VC)^m[V], over the first `len` letters.
    int measure(std::size_t len) const {
      int m = 0;
      std::size_t i = 0;
      while (i < len && consonant(i)) ++i;
      while (i < len) {
        while (i < len && !consonant(i)) ++i;
        if (i >= len) break;
        while (i < len && consonant(i)) ++i;
        ++m;
      }
      return m;
    }

    bool has_vowel(std::size_t len) const {
      for (std::size_t i = 0; i < len; ++i)
        if (!consonant(i)) return true;
      return false;
    }

    // *d: ends with a double consonant
    bool double_consonant(std::size_t len) const {
      return len >= 2 && b[len - 1] == b[len - 2] && consonant(len - 1);
    }

    // *o: ends consonant-vowel-consonant, last consonant not w, x or y
    bool cvc(std::size_t len) const {
      if (len < 3) return false;
      if (!consonant(len - 3) || consonant(len - 2) || !consonant(len - 1)) return false;
      char c = b[len - 1];
      return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends_with(std::string_view suffix) const { return b.ends_with(suffix); }
    std::size_t stem_len(std::string_view suffix) const { return b.size() - suffix.size(); }
    void replace(std::string_view suffix, std::string_view with) {
      b.resize(stem_len(suffix));
      b += with;
    }
  };

  using Rule = std::pair<std::string_view, std::string_view>;

  // Applies the rule with the longest matching suffix if the stem measure
  // exceeds `min_measure`. Returns whether any suffix matched.
  template <std::size_t N>
  static bool apply_longest(Word& s, const std::array<Rule, N>& rules, int min_measure) {
    const Rule* best = nullptr;
    for (const auto& r : rules)
      if (s.ends_with(r.first) && (!best || r.first.size() > best->first.size())) best = &r;
    if (!best) return false;
    if (s.measure(s.stem_len(best->first)) > min_measure) s.replace(best->first, best->second);
    return true;
  }

  static void step1a(Word& s) {
    if (s.ends_with("sses")) s.replace("sses", "ss");
    else if (s.ends_with("ies")) s.replace("ies", "i");
    else if (s.ends_with("ss")) return;
    else if (s.ends_with("s")) s.replace("s", "");
  }

  static void step1b(Word& s) {
    if (s.ends_with("eed")) {
      if (s.measure(s.stem_len("eed")) > 0) s.replace("eed", "ee");
      return;
    }
    bool stripped = false;
    for (std::string_view suf : {std::string_view("ed"), std::string_view("ing")}) {
      if (s.ends_with(suf) && s.has_vowel(s.stem_len(suf))) {
        s.replace(suf, "");
        stripped = true;
        break;
      }
    }
    if (!stripped) return;
    if (s.ends_with("at")) s.replace("at", "ate");
    else if (s.ends_with("bl")) s.replace("bl", "ble");
    else if (s.ends_with("iz")) s.replace("iz", "ize");
    else if (s.double_consonant(s.b.size())) {
      char c = s.b.back();
      if (c != 'l' && c != 's' && c != 'z') s.b.pop_back();
    } else if (s.measure(s.b.size()) == 1 && s.cvc(s.b.size())) {
      s.b += 'e';
    }
  }

  static void step1c(Word& s) {
    if (s.ends_with("y") && s.has_vowel(s.stem_len("y"))) s.replace("y", "i");
  }

  static void step2(Word& s) {
    static constexpr std::array<Rule, 20> rules{{
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
    }};
    apply_longest(s, rules, 0);
  }

  static void step3(Word& s) {
    static constexpr std::array<Rule, 7> rules{{
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    }};
    apply_longest(s, rules, 0);
  }

  static void step4(Word& s) {
    static constexpr std::array<std::string_view, 19> suffixes{
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
    std::string_view best;
    for (auto suf : suffixes)
      if (s.ends_with(suf) && suf.size() > best.size()) best = suf;
    if (best.empty()) return;
    const std::size_t len = s.stem_len(best);
    if (s.measure(len) <= 1) return;
    if (best == "ion" && !(len > 0 && (s.b[len - 1] == 's' || s.b[len - 1] == 't'))) return;
    s.replace(best, "");
  }

  static void step5a(Word& s) {
    if (!s.ends_with("e")) return;
    const std::size_t len = s.stem_len("e");
    const int m = s.measure(len);
    if (m > 1 || (m == 1 && !s.cvc(len))) s.b.pop_back();
  }

  static void step5b(Word& s) {
    if (s.measure(s.b.size()) > 1 && s.double_consonant(s.b.size()) && s.b.back() == 'l')
      s.b.pop_back();
  }
};

inline std::string stem(std::string_view word) { return PorterStemmer{}(word); }

}  // namespace spanlab
