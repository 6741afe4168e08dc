#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "spanlab/tagcodec.hpp"

using namespace spanlab;

namespace {

Tag T(std::string_view s) { return parse_tag(s); }

TagSequence seq(std::initializer_list<std::string_view> tags, Scheme scheme) {
  TagSequence out{{}, scheme};
  for (auto t : tags) out.tags.push_back(T(t));
  return out;
}

const Scheme kSchemes[] = {Scheme::IO, Scheme::BIO, Scheme::BIOES};

TagSequence random_sequence(std::mt19937_64& rng, Scheme scheme, std::size_t n,
                            const std::vector<std::string>& classes) {
  const auto inv = tag_inventory(scheme, classes);
  TagSequence s{{}, scheme};
  for (std::size_t i = 0; i < n; ++i) s.tags.push_back(inv[rng() % inv.size()]);
  return s;
}

// Random sorted, non-overlapping spans; under IO touching spans never share
// a class.
std::vector<LabeledRange> random_spans(std::mt19937_64& rng, std::size_t n, Scheme scheme) {
  static const std::vector<std::string> classes{"A", "B", "C"};
  std::vector<LabeledRange> out;
  std::size_t t = 0;
  while (t < n) {
    t += rng() % 3;
    if (t >= n) break;
    const std::size_t len = 1 + rng() % std::min<std::size_t>(4, n - t);
    std::string cls = classes[rng() % classes.size()];
    if (scheme == Scheme::IO && !out.empty() && out.back().end == t && out.back().cls == cls)
      cls = cls == "A" ? "B" : "A";
    out.push_back({t, t + len, cls});
    t += len;
  }
  return out;
}

std::size_t hamming(const TagSequence& a, const TagSequence& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a.tags[i] != b.tags[i];
  return d;
}

// All legal sequences over `inv` that tag the same tokens as `x` (O stays O,
// non-O stays non-O) at the smallest Hamming distance, by enumeration.
std::vector<TagSequence> nearest_legal(const TagSequence& x, const std::vector<Tag>& inv) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n, 0);
  std::size_t best = n + 1;
  std::vector<TagSequence> out;
  while (true) {
    TagSequence cand{{}, x.scheme};
    bool same_support = true;
    for (std::size_t t = 0; t < n; ++t) {
      cand.tags.push_back(inv[idx[t]]);
      same_support = same_support && cand.tags[t].is_outside() == x.tags[t].is_outside();
    }
    if (same_support && validate(cand).empty()) {
      const std::size_t d = hamming(cand, x);
      if (d < best) out.clear();
      if (d <= best) {
        best = d;
        out.push_back(cand);
      }
    }
    std::size_t p = 0;
    while (p < n && ++idx[p] == inv.size()) idx[p++] = 0;
    if (p == n) break;
  }
  return out;
}

}  // namespace

TEST(Scheme, ParsesAliases) {
  EXPECT_EQ(parse_scheme("BIEOS"), Scheme::BIOES);
  EXPECT_EQ(parse_scheme("bioes"), Scheme::BIOES);
  EXPECT_EQ(parse_scheme("IO"), Scheme::IO);
  EXPECT_THROW(parse_scheme("BILOU"), ParseError);
}

TEST(TagParsing, ClassOnOutsideIsOutside) {
  EXPECT_EQ(T("O-PROP"), Tag::outside());
  EXPECT_EQ(T("I-PROP"), Tag::make(Prefix::I, "PROP"));
  EXPECT_EQ(to_string(T("S-Loaded_Language")), "S-Loaded_Language");
  EXPECT_THROW(T("X-PROP"), ParseError);
  EXPECT_THROW(T("B"), ParseError);
}

TEST(Encode, Examples) {
  EXPECT_EQ(encode({{1, 3, "PROP"}}, 4, Scheme::BIO), seq({"O", "B-PROP", "I-PROP", "O"}, Scheme::BIO));
  EXPECT_EQ(encode({{1, 2, "PROP"}}, 3, Scheme::BIOES), seq({"O", "S-PROP", "O"}, Scheme::BIOES));
  EXPECT_EQ(encode({}, 3, Scheme::IO), seq({"O", "O", "O"}, Scheme::IO));
  EXPECT_EQ(encode({{0, 3, "X"}}, 3, Scheme::BIOES), seq({"B-X", "I-X", "E-X"}, Scheme::BIOES));
}

TEST(Encode, RejectsInvalidSpans) {
  EXPECT_THROW(encode({{0, 2, "A"}, {1, 3, "A"}}, 4, Scheme::BIO), ValidationError);
  EXPECT_THROW(encode({{2, 5, "A"}}, 4, Scheme::BIO), ValidationError);
  EXPECT_THROW(encode({{2, 2, "A"}}, 4, Scheme::BIO), ValidationError);
  EXPECT_THROW(encode({{0, 1, "A"}, {1, 2, "A"}}, 2, Scheme::IO), ValidationError);
  EXPECT_NO_THROW(encode({{0, 1, "A"}, {1, 2, "B"}}, 2, Scheme::IO));
}

TEST(Decode, Examples) {
  const auto bio = seq({"O", "B-PROP", "I-PROP", "O"}, Scheme::BIO);
  EXPECT_EQ(decode(bio, DecodeMode::Strict), (std::vector<LabeledRange>{{1, 3, "PROP"}}));
  const auto bad = seq({"O", "I-PROP", "I-PROP", "O"}, Scheme::BIO);
  EXPECT_EQ(decode(bad, DecodeMode::Lenient), (std::vector<LabeledRange>{{1, 3, "PROP"}}));
  try {
    decode(bad, DecodeMode::Strict);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("position(s) 1"), std::string::npos);
  }
}

TEST(Decode, LenientMatchesNearestLegalOnExample) {
  const auto bad = seq({"O", "I-PROP", "I-PROP", "O"}, Scheme::BIO);
  const auto nearest = nearest_legal(bad, tag_inventory(Scheme::BIO, {"PROP"}));
  ASSERT_EQ(nearest.size(), 1u);
  EXPECT_EQ(nearest[0], seq({"O", "B-PROP", "I-PROP", "O"}, Scheme::BIO));
  EXPECT_EQ(decode(nearest[0], DecodeMode::Strict), decode(bad, DecodeMode::Lenient));
}

TEST(Decode, RepairIsTheNearestLegalSequenceForOneClass) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> classes{"PROP"};
  const auto inv = tag_inventory(Scheme::BIO, classes);
  for (int iter = 0; iter < 300; ++iter) {
    const auto x = random_sequence(rng, Scheme::BIO, 1 + rng() % 7, classes);
    const auto nearest = nearest_legal(x, inv);
    ASSERT_EQ(nearest.size(), 1u);
    EXPECT_EQ(repair(x), nearest[0]);
    EXPECT_EQ(decode(nearest[0], DecodeMode::Strict), decode(x, DecodeMode::Lenient));
  }
}

TEST(Legality, Examples) {
  const Tag o = T("O"), b = T("B-PROP"), i = T("I-PROP");
  EXPECT_FALSE(legal_transition(o, i, Scheme::BIO));
  EXPECT_TRUE(legal_transition(b, i, Scheme::BIO));
  EXPECT_FALSE(legal_transition(b, o, Scheme::BIOES));
  EXPECT_FALSE(legal_transition(&i, nullptr, Scheme::BIOES));
  EXPECT_TRUE(legal_transition(&i, nullptr, Scheme::BIO));
  EXPECT_FALSE(legal_transition(nullptr, &i, Scheme::BIO));
  EXPECT_TRUE(legal_transition(nullptr, &i, Scheme::IO));
  EXPECT_FALSE(legal_transition(T("I-A"), T("I-B"), Scheme::BIO));
}

// The legal pairs are exactly the transitions that occur in encode() outputs.
TEST(Legality, TableEqualsTransitionsProducedByEncode) {
  const std::vector<std::string> classes{"A", "B"};
  for (Scheme scheme : kSchemes) {
    const auto inv = tag_inventory(scheme, classes);
    // index inv.size() stands for START (as prev) / END (as next)
    const std::size_t edge = inv.size();
    std::set<std::pair<std::size_t, std::size_t>> seen;
    auto index_of = [&](const Tag& t) {
      return static_cast<std::size_t>(std::find(inv.begin(), inv.end(), t) - inv.begin());
    };
    // Enumerate every span set over up to 5 tokens: each token is either
    // outside, or starts a span of some length and class.
    std::function<void(std::size_t, std::size_t, std::vector<LabeledRange>&)> rec =
        [&](std::size_t n, std::size_t t, std::vector<LabeledRange>& spans) {
          if (t >= n) {
            TagSequence s;
            try {
              s = encode(spans, n, scheme);
            } catch (const ValidationError&) {
              return;  // IO: touching same-class spans
            }
            ASSERT_TRUE(validate(s).empty());
            std::size_t prev = edge;
            for (const auto& tag : s.tags) {
              const auto cur = index_of(tag);
              seen.emplace(prev, cur);
              prev = cur;
            }
            seen.emplace(prev, edge);
            return;
          }
          rec(n, t + 1, spans);
          for (std::size_t len = 1; t + len <= n; ++len)
            for (const auto& c : classes) {
              spans.push_back({t, t + len, c});
              rec(n, t + len, spans);
              spans.pop_back();
            }
        };
    for (std::size_t n = 0; n <= 5; ++n) {
      std::vector<LabeledRange> spans;
      rec(n, 0, spans);
    }
    for (std::size_t p = 0; p <= edge; ++p)
      for (std::size_t q = 0; q <= edge; ++q) {
        if (p == edge && q == edge) continue;
        const Tag* prev = p == edge ? nullptr : &inv[p];
        const Tag* next = q == edge ? nullptr : &inv[q];
        EXPECT_EQ(legal_transition(prev, next, scheme), seen.contains({p, q}))
            << to_string(scheme) << " " << (prev ? to_string(*prev) : "START") << " -> "
            << (next ? to_string(*next) : "END");
      }
  }
}

TEST(Validate, Examples) {
  EXPECT_TRUE(validate(seq({"O", "B-P", "I-P"}, Scheme::BIO)).empty());
  const auto v = validate(seq({"O", "I-P"}, Scheme::BIO));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].position, 1u);
  EXPECT_EQ(v[0].prev, T("O"));
  EXPECT_EQ(v[0].next, T("I-P"));
  for (Scheme s : kSchemes) EXPECT_TRUE(validate(seq({"O", "O", "O"}, s)).empty());
  EXPECT_DOUBLE_EQ(violation_rate(seq({"O", "I-P", "O", "I-P"}, Scheme::BIO)), 0.5);
  // Unterminated BIOES entity: END violation only, not counted in the rate.
  const auto open = seq({"O", "B-P"}, Scheme::BIOES);
  ASSERT_EQ(validate(open).size(), 1u);
  EXPECT_FALSE(validate(open)[0].next.has_value());
  EXPECT_DOUBLE_EQ(violation_rate(open), 0.0);
}

TEST(Repair, Examples) {
  EXPECT_EQ(repair(seq({"O", "I-PROP", "O"}, Scheme::BIO)), seq({"O", "B-PROP", "O"}, Scheme::BIO));
  const auto legal = seq({"B-A", "I-A", "O", "B-B"}, Scheme::BIO);
  EXPECT_EQ(repair(legal), legal);
  EXPECT_EQ(repair(seq({"I-A", "I-B"}, Scheme::BIO)), seq({"B-A", "B-B"}, Scheme::BIO));
  EXPECT_EQ(repair(seq({"B-A", "I-A", "O"}, Scheme::BIOES)), seq({"B-A", "E-A", "O"}, Scheme::BIOES));
}

TEST(Repair, ForeignTagsUnderIo) {
  const auto x = seq({"B-A", "B-A", "O"}, Scheme::IO);
  const auto r = repair(x);
  EXPECT_EQ(r, seq({"I-A", "I-A", "O"}, Scheme::IO));
  EXPECT_TRUE(validate(r).empty());
}

TEST(Properties, RoundtripAllSchemes) {
  std::mt19937_64 rng(3);
  for (Scheme scheme : kSchemes)
    for (int iter = 0; iter < 400; ++iter) {
      const std::size_t n = rng() % 20;
      const auto spans = random_spans(rng, n, scheme);
      const auto enc = encode(spans, n, scheme);
      ASSERT_TRUE(validate(enc).empty());
      EXPECT_EQ(decode(enc, DecodeMode::Strict), spans);
    }
}

TEST(Properties, RepairAndLenientDecode) {
  std::mt19937_64 rng(4);
  const std::vector<std::string> classes{"A", "B"};
  for (Scheme scheme : kSchemes)
    for (int iter = 0; iter < 400; ++iter) {
      const auto x = random_sequence(rng, scheme, rng() % 15, classes);
      std::vector<LabeledRange> spans;
      ASSERT_NO_THROW(spans = decode(x, DecodeMode::Lenient));
      for (std::size_t i = 0; i < spans.size(); ++i) {
        EXPECT_LT(spans[i].begin, spans[i].end);
        if (i) {
          EXPECT_LE(spans[i - 1].end, spans[i].begin);
        }
      }
      const auto r = repair(x);
      EXPECT_TRUE(validate(r).empty());
      EXPECT_EQ(repair(r), r);
      EXPECT_EQ(decode(r, DecodeMode::Strict), spans);
    }
}

TEST(Conll, Roundtrip) {
  std::vector<ConllDocument> docs{
      {{"It", T("O")}, {"is", T("B-PROP")}, {".", T("I-PROP")}},
      {{"\"", T("S-Slogans")}},
  };
  std::ostringstream os;
  write_conll(os, docs);
  EXPECT_EQ(os.str(), "It\tO\nis\tB-PROP\n.\tI-PROP\n\n\"\tS-Slogans\n\n");
  EXPECT_EQ(parse_conll(os.str()), docs);
  EXPECT_THROW(parse_conll("no-tab-here\n"), ParseError);
}
