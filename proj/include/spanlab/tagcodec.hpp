#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "spanlab/error.hpp"

namespace spanlab {

enum class Scheme { IO, BIO, BIOES };

enum class Prefix { O, B, I, E, S };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::IO: return "IO";
    case Scheme::BIO: return "BIO";
    case Scheme::BIOES: return "BIOES";
  }
  return "?";
}

// "BIEOS" is accepted as a spelling of BIOES.
inline Scheme parse_scheme(std::string_view name) {
  std::string up(name);
  for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "IO") return Scheme::IO;
  if (up == "BIO") return Scheme::BIO;
  if (up == "BIOES" || up == "BIEOS") return Scheme::BIOES;
  throw ParseError("unknown encoding scheme '" + std::string(name) + "'");
}

inline bool prefix_allowed(Prefix p, Scheme s) {
  switch (p) {
    case Prefix::O:
    case Prefix::I: return true;
    case Prefix::B: return s != Scheme::IO;
    case Prefix::E:
    case Prefix::S: return s == Scheme::BIOES;
  }
  return false;
}

struct Tag {
  Prefix prefix = Prefix::O;
  std::string cls;  // empty for O

  static Tag outside() { return {}; }
  static Tag make(Prefix p, std::string c) {
    if (p == Prefix::O) return {};
    return {p, std::move(c)};
  }

  bool is_outside() const noexcept { return prefix == Prefix::O; }
  auto operator<=>(const Tag&) const = default;
};

inline std::string to_string(const Tag& t) {
  switch (t.prefix) {
    case Prefix::O: return "O";
    case Prefix::B: return "B-" + t.cls;
    case Prefix::I: return "I-" + t.cls;
    case Prefix::E: return "E-" + t.cls;
    case Prefix::S: return "S-" + t.cls;
  }
  return "?";
}

inline std::ostream& operator<<(std::ostream& os, const Tag& t) { return os << to_string(t); }

// Parses "O", "B-X", "I-X", "E-X", "S-X". A class attached to O ("O-X") is
// read as plain O.
inline Tag parse_tag(std::string_view s) {
  if (s == "O" || s.starts_with("O-")) return Tag::outside();
  if (s.size() < 3 || s[1] != '-') throw ParseError("malformed tag '" + std::string(s) + "'");
  Prefix p;
  switch (s[0]) {
    case 'B': p = Prefix::B; break;
    case 'I': p = Prefix::I; break;
    case 'E': p = Prefix::E; break;
    case 'S': p = Prefix::S; break;
    default: throw ParseError("malformed tag '" + std::string(s) + "'");
  }
  return Tag::make(p, std::string(s.substr(2)));
}

// Every tag a scheme can emit for the given classes: O first, then per class
// B, I, E, S (whichever the scheme allows).
inline std::vector<Tag> tag_inventory(Scheme scheme, const std::vector<std::string>& classes) {
  std::vector<Tag> tags{Tag::outside()};
  for (const auto& c : classes)
    for (Prefix p : {Prefix::B, Prefix::I, Prefix::E, Prefix::S})
      if (prefix_allowed(p, scheme)) tags.push_back(Tag::make(p, c));
  return tags;
}

struct TagSequence {
  std::vector<Tag> tags;
  Scheme scheme = Scheme::BIO;

  std::size_t size() const noexcept { return tags.size(); }
  bool operator==(const TagSequence&) const = default;
};

// Token range [begin, end) carrying a class label.
struct LabeledRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string cls;

  auto operator<=>(const LabeledRange&) const = default;
};

// nullptr stands for the sequence START (as prev) or END (as next).
inline bool legal_transition(const Tag* prev, const Tag* next, Scheme scheme) {
  if (prev && !prefix_allowed(prev->prefix, scheme)) return false;
  if (next && !prefix_allowed(next->prefix, scheme)) return false;
  const bool prev_open = prev && (prev->prefix == Prefix::B || prev->prefix == Prefix::I);
  switch (scheme) {
    case Scheme::IO:
      return true;
    case Scheme::BIO:
      if (next && next->prefix == Prefix::I) return prev_open && prev->cls == next->cls;
      return true;
    case Scheme::BIOES:
      if (prev_open) {
        return next && (next->prefix == Prefix::I || next->prefix == Prefix::E) &&
               next->cls == prev->cls;
      }
      // after START, O, E or S: nothing may continue an entity
      return !next || next->prefix == Prefix::O || next->prefix == Prefix::B ||
             next->prefix == Prefix::S;
  }
  return false;
}

inline bool legal_transition(const Tag& prev, const Tag& next, Scheme scheme) {
  return legal_transition(&prev, &next, scheme);
}

struct Violation {
  std::size_t position = 0;   // index of `next`; equals the length for END
  std::optional<Tag> prev;    // nullopt = START
  std::optional<Tag> next;    // nullopt = END

  bool operator==(const Violation&) const = default;
};

inline std::vector<Violation> validate(const std::vector<Tag>& tags, Scheme scheme) {
  std::vector<Violation> out;
  const Tag* prev = nullptr;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!legal_transition(prev, &tags[i], scheme))
      out.push_back({i, prev ? std::optional<Tag>(*prev) : std::nullopt, tags[i]});
    prev = &tags[i];
  }
  if (!legal_transition(prev, nullptr, scheme))
    out.push_back({tags.size(), prev ? std::optional<Tag>(*prev) : std::nullopt, std::nullopt});
  return out;
}

inline std::vector<Violation> validate(const TagSequence& seq) {
  return validate(seq.tags, seq.scheme);
}

// Fraction of positions with an illegal incoming transition (END excluded).
inline double violation_rate(const TagSequence& seq) {
  if (seq.tags.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& v : validate(seq))
    if (v.next) ++n;
  return static_cast<double>(n) / static_cast<double>(seq.tags.size());
}

inline TagSequence encode(std::vector<LabeledRange> spans, std::size_t n_tokens, Scheme scheme) {
  std::sort(spans.begin(), spans.end());
  TagSequence seq{std::vector<Tag>(n_tokens), scheme};
  std::size_t last_end = 0;
  const LabeledRange* prev = nullptr;
  for (const auto& s : spans) {
    if (s.begin >= s.end || s.end > n_tokens)
      throw ValidationError("span [" + std::to_string(s.begin) + "," + std::to_string(s.end) +
                            ") outside [0," + std::to_string(n_tokens) + ")");
    if (prev && s.begin < last_end)
      throw ValidationError("overlapping spans at token " + std::to_string(s.begin));
    if (s.cls.empty()) throw ValidationError("span without a class");
    // IO has no way to separate two touching spans of the same class.
    if (scheme == Scheme::IO && prev && prev->end == s.begin && prev->cls == s.cls)
      throw ValidationError("adjacent same-class spans at token " + std::to_string(s.begin) +
                            " cannot be encoded under IO");
    for (std::size_t t = s.begin; t < s.end; ++t) {
      Prefix p = Prefix::I;
      if (scheme == Scheme::BIO) {
        p = t == s.begin ? Prefix::B : Prefix::I;
      } else if (scheme == Scheme::BIOES) {
        if (s.end - s.begin == 1) p = Prefix::S;
        else if (t == s.begin) p = Prefix::B;
        else if (t + 1 == s.end) p = Prefix::E;
      }
      seq.tags[t] = Tag::make(p, s.cls);
    }
    last_end = s.end;
    prev = &s;
  }
  return seq;
}

enum class DecodeMode { Strict, Lenient };

// Lenient rules: B and S always open a new span; I continues an open span of
// the same class and otherwise opens one; E closes a same-class span (or is a
// single-token span by itself); O closes; an open span is closed at the end.
inline std::vector<LabeledRange> decode(const TagSequence& seq, DecodeMode mode) {
  if (mode == DecodeMode::Strict) {
    auto v = validate(seq);
    if (!v.empty()) {
      std::string msg = "illegal tag sequence at position(s)";
      for (const auto& x : v) msg += " " + std::to_string(x.position);
      throw ValidationError(msg);
    }
  }
  std::vector<LabeledRange> out;
  std::optional<LabeledRange> open;
  auto close = [&] {
    if (open) out.push_back(*open);
    open.reset();
  };
  for (std::size_t t = 0; t < seq.tags.size(); ++t) {
    const Tag& tag = seq.tags[t];
    switch (tag.prefix) {
      case Prefix::O:
        close();
        break;
      case Prefix::B:
        close();
        open = LabeledRange{t, t + 1, tag.cls};
        break;
      case Prefix::I:
        if (open && open->cls == tag.cls) {
          open->end = t + 1;
        } else {
          close();
          open = LabeledRange{t, t + 1, tag.cls};
        }
        break;
      case Prefix::E:
        if (open && open->cls == tag.cls) {
          open->end = t + 1;
          close();
        } else {
          close();
          out.push_back({t, t + 1, tag.cls});
        }
        break;
      case Prefix::S:
        close();
        out.push_back({t, t + 1, tag.cls});
        break;
    }
  }
  close();
  return out;
}

// Lenient decode followed by re-encoding under the same scheme. Under IO,
// touching same-class spans (only possible from tags IO does not have) are
// joined since IO cannot separate them.
inline TagSequence repair(const TagSequence& seq) {
  auto spans = decode(seq, DecodeMode::Lenient);
  if (seq.scheme == Scheme::IO) {
    std::vector<LabeledRange> joined;
    for (auto& s : spans) {
      if (!joined.empty() && joined.back().end == s.begin && joined.back().cls == s.cls)
        joined.back().end = s.end;
      else
        joined.push_back(std::move(s));
    }
    spans = std::move(joined);
  }
  return encode(spans, seq.size(), seq.scheme);
}

struct ConllToken {
  std::string token;
  Tag tag;

  bool operator==(const ConllToken&) const = default;
};

using ConllDocument = std::vector<ConllToken>;

// token TAB tag per line, one blank line after each document.
inline void write_conll(std::ostream& os, const std::vector<ConllDocument>& docs) {
  for (const auto& doc : docs) {
    for (const auto& t : doc) os << t.token << '\t' << to_string(t.tag) << '\n';
    os << '\n';
  }
}

inline std::vector<ConllDocument> parse_conll(std::string_view content) {
  std::vector<ConllDocument> docs;
  ConllDocument cur;
  bool in_doc = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (in_doc) docs.push_back(std::move(cur));
      cur.clear();
      in_doc = false;
      continue;
    }
    auto tab = line.rfind('\t');
    if (tab == std::string_view::npos)
      throw ParseError("line " + std::to_string(line_no) + ": expected token<TAB>tag");
    cur.push_back({std::string(line.substr(0, tab)), parse_tag(line.substr(tab + 1))});
    in_doc = true;
  }
  if (in_doc) docs.push_back(std::move(cur));
  return docs;
}

}  // namespace spanlab
