#include <gtest/gtest.h>

#include <random>

#include "spanlab/eval.hpp"

using namespace spanlab;

namespace {

SpanSet plain(std::vector<std::pair<std::size_t, std::size_t>> ranges) {
  std::vector<Span> v;
  for (auto [a, b] : ranges) v.push_back({a, b, std::nullopt, std::nullopt});
  return SpanSet(std::move(v));
}

SpanSet random_set(std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (std::size_t k = rng() % 5; k > 0; --k) {
    const std::size_t a = rng() % 30;
    r.emplace_back(a, a + 1 + rng() % 8);
  }
  return plain(r);
}

// Independent oracle counting shared characters one by one.
std::pair<double, double> pr_oracle(const SpanSet& pred, const SpanSet& gold) {
  double p = 0.0, r = 0.0;
  for (const auto& s : pred)
    for (const auto& t : gold) {
      double shared = 0.0;
      for (std::size_t c = s.start; c < s.end; ++c) shared += (c >= t.start && c < t.end);
      p += shared / static_cast<double>(s.length());
      r += shared / static_cast<double>(t.length());
    }
  return {pred.empty() ? 0.0 : p / static_cast<double>(pred.size()),
          gold.empty() ? 0.0 : r / static_cast<double>(gold.size())};
}

TagSequence tags(std::initializer_list<const char*> names) {
  TagSequence out;
  for (const char* n : names) out.tags.push_back(parse_tag(n));
  return out;
}

}  // namespace

TEST(SpanF1, Examples) {
  const auto s = span_f1(plain({{0, 5}}), plain({{0, 10}}));
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(span_f1(SpanSet{}, SpanSet{}).f1, 1.0);
  EXPECT_DOUBLE_EQ(span_f1(plain({{0, 3}}), plain({{5, 9}})).f1, 0.0);
  const auto empty_pred = span_f1(SpanSet{}, plain({{0, 3}}));
  EXPECT_EQ(empty_pred.precision, 0.0);
  EXPECT_EQ(empty_pred.recall, 0.0);
  EXPECT_EQ(span_f1(plain({{0, 3}}), SpanSet{}).f1, 0.0);
  const auto same = plain({{0, 3}, {5, 9}, {20, 21}});
  EXPECT_DOUBLE_EQ(span_f1(same, same).f1, 1.0);
}

TEST(SpanF1, LabelsMustMatchWhenPresent) {
  const SpanSet gold{{0, 10, "Fear", std::nullopt}};
  const SpanSet right{{0, 10, "Fear", std::nullopt}};
  const SpanSet wrong{{0, 10, "Doubt", std::nullopt}};
  EXPECT_DOUBLE_EQ(span_f1(right, gold).f1, 1.0);
  EXPECT_DOUBLE_EQ(span_f1(wrong, gold).f1, 0.0);
}

TEST(SpanF1, ManyToManyCredit) {
  // One prediction covering two golds earns recall from both.
  const auto s = span_f1(plain({{0, 10}}), plain({{0, 4}, {6, 10}}));
  EXPECT_DOUBLE_EQ(s.precision, 0.8);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
}

TEST(SpanF1, MatchesCharacterOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto pred = random_set(rng), gold = random_set(rng);
    if (pred.empty() && gold.empty()) continue;
    const auto [p, r] = pr_oracle(pred, gold);
    const auto s = span_f1(pred, gold);
    EXPECT_NEAR(s.precision, p, 1e-12);
    EXPECT_NEAR(s.recall, r, 1e-12);
    EXPECT_NEAR(s.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-12);
  }
}

TEST(SpanF1, SymmetryShrinkAndDuplicate) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_set(rng), b = random_set(rng);
    const auto ab = span_f1(a, b), ba = span_f1(b, a);
    EXPECT_NEAR(ab.precision, ba.recall, 1e-12);
    EXPECT_NEAR(ab.recall, ba.precision, 1e-12);
    EXPECT_NEAR(ab.f1, ba.f1, 1e-12);
    if (!a.empty()) {
      // Duplicating the whole prediction set, or its least precise span,
      // cannot raise precision.
      std::vector<Span> twice(a.begin(), a.end());
      twice.insert(twice.end(), a.begin(), a.end());
      EXPECT_NEAR(span_f1(SpanSet(twice), b).precision, ab.precision, 1e-12);
      std::size_t worst = 0;
      double worst_p = 2.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double pj = pr_oracle(plain({{a[j].start, a[j].end}}), b).first;
        if (pj < worst_p) worst_p = pj, worst = j;
      }
      std::vector<Span> dup(a.begin(), a.end());
      dup.push_back(a[worst]);
      EXPECT_LE(span_f1(SpanSet(dup), b).precision, ab.precision + 1e-12);
    }
  }
  for (std::size_t len = 10; len > 1; --len) {
    const auto shorter = span_f1(plain({{0, len - 1}}), plain({{0, 10}}));
    const auto longer = span_f1(plain({{0, len}}), plain({{0, 10}}));
    EXPECT_DOUBLE_EQ(shorter.precision, 1.0);
    EXPECT_LT(shorter.recall, longer.recall);
  }
  const auto too_long = span_f1(plain({{0, 20}}), plain({{0, 10}}));
  EXPECT_DOUBLE_EQ(too_long.recall, 1.0);
  EXPECT_DOUBLE_EQ(too_long.precision, 0.5);
}

TEST(SpanF1, CorpusLevelKeepsDocumentsApart) {
  const std::map<std::string, SpanSet> pred{{"a", plain({{0, 5}})}, {"b", plain({{0, 5}})}};
  const std::map<std::string, SpanSet> gold{{"a", plain({{0, 5}})}};
  const auto s = span_f1(pred, gold);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
}

TEST(MicroF1, Examples) {
  EXPECT_DOUBLE_EQ(micro_f1({"a", "b"}, {"a", "b"}), 1.0);
  EXPECT_DOUBLE_EQ(micro_f1({"a", "a"}, {"a", "b"}), 0.5);
  EXPECT_THROW(micro_f1({"a"}, {"a", "b"}), ValidationError);
}

TEST(MicroF1, EqualsAccuracyForSingleLabels) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> classes{"A", "B", "C", "D"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> pred, gold;
    std::size_t correct = 0;
    for (int i = 0; i < 50; ++i) {
      pred.push_back(classes[rng() % 4]);
      gold.push_back(classes[rng() % 4]);
      correct += pred.back() == gold.back();
    }
    EXPECT_NEAR(micro_f1(pred, gold), static_cast<double>(correct) / 50.0, 1e-12);
  }
}

TEST(MicroF1, GroupedMultisetMatching) {
  const std::vector<std::pair<std::string, std::string>> gold{{"s1", "A"}, {"s1", "B"}, {"s2", "C"}};
  const std::vector<std::pair<std::string, std::string>> pred{{"s1", "B"}, {"s1", "A"}, {"s2", "A"}};
  const auto s = micro_f1_grouped(pred, gold);
  EXPECT_NEAR(s.micro_f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.per_class.at("A").precision, 0.5);
  EXPECT_DOUBLE_EQ(s.per_class.at("C").recall, 0.0);
  EXPECT_EQ(s.per_class.at("C").support, 1u);
}

TEST(TokenF1, Examples) {
  const auto g = tags({"B-A", "I-A", "O", "B-B"});
  EXPECT_DOUBLE_EQ(token_f1(g, g).f1, 1.0);
  EXPECT_DOUBLE_EQ(token_f1(tags({"O", "O", "O", "O"}), g).recall, 0.0);
  // Hits: tokens 0 and 1 (class A). Predicted non-O: 0, 1, 2, 3. Gold non-O: 0, 1, 3.
  const auto s = token_f1(tags({"B-A", "B-A", "I-A", "B-A"}), g);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_NEAR(s.recall, 2.0 / 3.0, 1e-12);
  EXPECT_THROW(token_f1(tags({"O"}), g), ValidationError);
}

TEST(Report, Format) {
  SpanScore s;
  s.precision = 1.0;
  s.recall = 0.5;
  s.f1 = 2.0 / 3.0;
  s.predicted = 1;
  s.gold = 1;
  const std::string out = format_report(report_rows(s));
  EXPECT_EQ(out.substr(0, out.find('\n')), "precision\t1");
  EXPECT_NE(out.find("recall\t0.5\n"), std::string::npos);
}
