#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanlab/corpus.hpp"
#include "spanlab/crf.hpp"
#include "spanlab/emitters.hpp"
#include "spanlab/error.hpp"
#include "spanlab/eval.hpp"
#include "spanlab/gazetteer.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/postproc.hpp"
#include "spanlab/spanops.hpp"
#include "spanlab/synthetic.hpp"
#include "spanlab/tagcodec.hpp"

namespace spanlab {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline std::map<std::string, SpanSet> group_spans(const std::vector<Annotation>& anns,
                                                  bool with_labels = true) {
  std::map<std::string, std::vector<Span>> tmp;
  for (const auto& a : anns)
    tmp[a.doc_id].push_back({a.start, a.end, with_labels ? std::optional(a.label) : std::nullopt, {}});
  std::map<std::string, SpanSet> out;
  for (auto& [id, v] : tmp) out.emplace(id, SpanSet(std::move(v)));
  return out;
}

inline std::vector<Annotation> flatten_spans(const std::map<std::string, SpanSet>& sets,
                                             const std::string& default_label = "PROP") {
  std::vector<Annotation> out;
  for (const auto& [id, set] : sets)
    for (const auto& s : set) out.push_back({id, s.cls.value_or(default_label), s.start, s.end});
  return out;
}

// Labeled token ranges of the annotations that fall in `em`'s tokens.
inline std::vector<LabeledRange> token_ranges_for(const EmissionMatrix& em,
                                                  const std::vector<Annotation>& anns,
                                                  std::size_t doc_length) {
  std::vector<LabeledRange> out;
  for (const auto& a : anns) {
    if (a.doc_id != em.doc_id) continue;
    auto r = align_span(a.start, a.end, em.tokens, std::max(doc_length, a.end));
    if (r) out.push_back({r->begin, r->end, a.label});
  }
  // Overlapping gold spans cannot be tagged; keep the earliest-starting.
  std::sort(out.begin(), out.end());
  std::vector<LabeledRange> flat;
  for (auto& r : out)
    if (flat.empty() || r.begin >= flat.back().end) flat.push_back(std::move(r));
  return flat;
}

inline std::vector<Span> char_spans_from_tags(const TagSequence& seq,
                                              const std::vector<TokenSpan>& tokens) {
  std::vector<Span> out;
  for (const auto& r : decode(seq, DecodeMode::Lenient))
    out.push_back({tokens[r.begin].start, tokens[r.end - 1].end, r.cls, {}});
  return out;
}

// ---------------------------------------------------------------------------
// Span identification
// ---------------------------------------------------------------------------

struct IdentificationStages {
  bool crf = false;
  bool merge = false;
  bool punct_fix = false;
  bool fix_before_merge = false;
};

struct IdentificationInputs {
  Scheme scheme = Scheme::BIO;
  std::map<std::string, Document> docs;
  std::vector<Annotation> gold;  // optional; enables scoring
  // One list per ensemble member. Without `merge`, only the first is used.
  std::vector<std::vector<EmissionMatrix>> emissions;
  // CRF training data per member (a single list is shared by all members).
  std::vector<std::vector<LabeledEmission>> crf_train;
  // Pre-trained models per member (a single one is shared); takes precedence
  // over crf_train.
  std::vector<CrfModel> crf_models;
  TrainConfig train;
  PunctuationRuleConfig punct;
};

struct IdentificationResult {
  std::map<std::string, SpanSet> predictions;
  std::optional<SpanScore> score;
  double illegal_rate_argmax = 0.0;  // raw per-token argmax, first member
  double illegal_rate_output = 0.0;  // decoded paths before lenient repair
};

class IdentificationRunner {
 public:
  explicit IdentificationRunner(IdentificationInputs&&) = delete;
  explicit IdentificationRunner(const IdentificationInputs& in) : in_(in) {
    if (in_.emissions.empty() || (in_.emissions.front().empty() && !in_.docs.empty()))
      throw ConfigError("identification needs at least one emission set");
  }

  IdentificationResult run(const IdentificationStages& st) {
    IdentificationResult res;
    const std::size_t members = st.merge ? in_.emissions.size() : 1;
    std::vector<std::map<std::string, SpanSet>> per_member(members);
    std::size_t tags_total = 0, bad_argmax = 0, bad_output = 0;
    for (std::size_t m = 0; m < members; ++m) {
      const CrfModel* model = st.crf ? &crf_for(m) : nullptr;
      std::optional<TransitionMask> mask;
      for (const auto& em : in_.emissions[m]) {
        auto argmax = argmax_path(em);
        std::vector<std::size_t> path = argmax;
        if (model) {
          if (!mask) mask = TransitionMask::for_scheme(model->tag_order, in_.scheme);
          if (model->tag_order != em.tag_order)
            throw ValidationError("tag_order of '" + em.doc_id + "' differs from the CRF model");
          path = viterbi(*model, em, &*mask).path;
        }
        auto seq = path_to_tags(path, em.tag_order, in_.scheme);
        if (m == 0) {
          tags_total += seq.size();
          bad_output += count_bad(seq);
          bad_argmax += count_bad(path_to_tags(argmax, em.tag_order, in_.scheme));
        }
        auto spans = char_spans_from_tags(seq, em.tokens);
        if (st.punct_fix && st.fix_before_merge) spans = fix_all(em.doc_id, spans);
        per_member[m][em.doc_id] = SpanSet(std::move(spans));
      }
    }
    std::set<std::string> ids;
    for (const auto& pm : per_member)
      for (const auto& [id, s] : pm) ids.insert(id);
    for (const auto& id : ids) {
      std::vector<SpanSet> sets;
      for (const auto& pm : per_member)
        if (auto it = pm.find(id); it != pm.end()) sets.push_back(it->second);
      SpanSet merged = st.merge ? merge_ensemble(sets) : sets.front();
      if (st.punct_fix && !st.fix_before_merge)
        merged = SpanSet(fix_all(id, merged.spans()));
      res.predictions[id] = std::move(merged);
    }
    if (tags_total) {
      res.illegal_rate_argmax = static_cast<double>(bad_argmax) / static_cast<double>(tags_total);
      res.illegal_rate_output = static_cast<double>(bad_output) / static_cast<double>(tags_total);
    }
    if (!in_.gold.empty() || !in_.docs.empty()) {
      auto gold = group_spans(in_.gold);
      res.score = span_f1(res.predictions, gold);
    }
    return res;
  }

 private:
  static std::size_t count_bad(const TagSequence& seq) {
    std::size_t n = 0;
    for (const auto& v : validate(seq))
      if (v.next) ++n;
    return n;
  }

  std::vector<Span> fix_all(const std::string& doc_id, const std::vector<Span>& spans) const {
    auto it = in_.docs.find(doc_id);
    if (it == in_.docs.end())
      throw ConfigError("boundary fixing needs the text of document '" + doc_id + "'");
    std::vector<Span> out;
    for (const auto& s : spans) out.push_back(fix_boundaries(s, it->second.chars(), in_.punct));
    return out;
  }

  const CrfModel& crf_for(std::size_t member) {
    if (!in_.crf_models.empty())
      return in_.crf_models[std::min(member, in_.crf_models.size() - 1)];
    if (in_.crf_train.empty()) throw ConfigError("CRF decoding needs a model or training data");
    const std::size_t src = std::min(member, in_.crf_train.size() - 1);
    auto it = trained_.find(src);
    if (it == trained_.end())
      it = trained_.emplace(src, train(in_.crf_train[src], in_.scheme, in_.train)).first;
    return it->second;
  }

  const IdentificationInputs& in_;
  std::map<std::size_t, CrfModel> trained_;
};

inline IdentificationResult run_identification(const IdentificationInputs& in,
                                               const IdentificationStages& st) {
  return IdentificationRunner(in).run(st);
}

// ---------------------------------------------------------------------------
// Span classification
// ---------------------------------------------------------------------------

struct ClassificationStages {
  bool length = false;
  bool gazetteer_boost = false;
  bool repetition = false;
  bool nesting = false;
  bool multilabel = false;
};

struct ClassificationInputs {
  std::map<std::string, Document> docs;
  // Instances to label, in file order. Their labels are the gold answers
  // when scoring; a span repeated k times asks for k labels.
  std::vector<Annotation> instances;
  bool score = true;
  // Either externally produced probabilities...
  std::optional<std::vector<SpanProbRecord>> span_probs;
  // ...or a training corpus for the built-in baseline. The training corpus
  // also feeds the gazetteer and the nesting model.
  std::optional<Corpus> train;
  std::optional<Gazetteer> gazetteer;
  std::optional<NestingModel> nesting_model;
  LengthBinning binning;
  SoftmaxTrainConfig softmax;
  RepetitionRuleConfig repetition;
  GazetteerBoostConfig boost;
  int nesting_strategy = 1;
  double nesting_temperature = 0.26;
};

struct ClassificationResult {
  std::vector<Annotation> predictions;  // same order as the instances
  std::vector<SpanProbs> scores;        // final score maps per instance
  std::optional<ClassificationScore> score;
  std::vector<std::pair<std::string, double>> stage_scores;  // after each enabled stage
};

namespace detail {

inline std::string span_key(const std::string& doc, std::size_t start, std::size_t end) {
  return doc + ":" + std::to_string(start) + ":" + std::to_string(end);
}

}  // namespace detail

class ClassificationRunner {
 public:
  explicit ClassificationRunner(ClassificationInputs&&) = delete;
  explicit ClassificationRunner(const ClassificationInputs& in) : in_(in) {
    if (!in_.span_probs && !in_.train)
      throw ConfigError("classification needs span probabilities or a training corpus");
    for (const auto& a : in_.instances) {
      auto it = in_.docs.find(a.doc_id);
      if (it == in_.docs.end()) throw ConfigError("unknown document '" + a.doc_id + "'");
      if (a.end > it->second.size()) throw ValidationError("instance span outside its document");
    }
  }

  ClassificationResult run(const ClassificationStages& st) {
    ClassificationResult res;
    auto cached = initial_.find(st.length);
    if (cached == initial_.end()) cached = initial_.emplace(st.length, initial_scores(st.length)).first;
    auto scores = cached->second;
    auto labels = argmax_all(scores);
    auto record = [&](const std::string& name) {
      if (!in_.score) return;
      res.stage_scores.emplace_back(name, evaluate(labels).micro_f1);
    };
    record(st.length ? "baseline+length" : "baseline");

    if (st.gazetteer_boost) {
      const Gazetteer& g = gazetteer();
      for (std::size_t i = 0; i < scores.size(); ++i)
        scores[i] = apply_gazetteer_boost(scores[i], g.lookup(text_of(in_.instances[i])), in_.boost);
      labels = argmax_all(scores);
      record("gazetteer_boost");
    }
    if (st.repetition) {
      in_.repetition.check();
      std::map<std::string, std::vector<std::string>> texts;  // distinct spans per document
      std::set<std::string> seen;
      for (const auto& a : in_.instances)
        if (seen.insert(detail::span_key(a.doc_id, a.start, a.end)).second)
          texts[a.doc_id].push_back(text_of(a));
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& a = in_.instances[i];
        scores[i] = apply_repetition(scores[i], count_occurrences(text_of(a), texts[a.doc_id]),
                                     in_.repetition);
      }
      labels = argmax_all(scores);
      record("repetition");
    }
    std::map<std::string, std::string> pinned;  // span key -> label fixed by nesting
    if (st.nesting) {
      pinned = resolve_nesting(scores);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& a = in_.instances[i];
        if (auto it = pinned.find(detail::span_key(a.doc_id, a.start, a.end)); it != pinned.end())
          labels[i] = it->second;
      }
      record("nesting");
    }
    if (st.multilabel) {
      std::map<std::string, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < in_.instances.size(); ++i) {
        const auto& a = in_.instances[i];
        groups[detail::span_key(a.doc_id, a.start, a.end)].push_back(i);
      }
      for (const auto& [key, idx] : groups) {
        if (idx.size() < 2) continue;
        std::vector<std::string> assigned;
        auto pin = pinned.find(key);
        if (pin == pinned.end()) {
          assigned = assign_multilabel(idx.size(), scores[idx.front()]);
        } else {
          SpanProbs rest = scores[idx.front()];
          rest.erase(pin->second);
          assigned.push_back(pin->second);
          for (auto& l : assign_multilabel(idx.size() - 1, rest)) assigned.push_back(l);
        }
        for (std::size_t j = 0; j < idx.size(); ++j) labels[idx[j]] = assigned[j];
      }
      record("multilabel");
    }

    for (std::size_t i = 0; i < in_.instances.size(); ++i) {
      Annotation p = in_.instances[i];
      p.label = labels[i];
      res.predictions.push_back(std::move(p));
    }
    res.scores = std::move(scores);
    if (in_.score) res.score = evaluate(labels);
    return res;
  }

 private:
  std::string text_of(const Annotation& a) const {
    return in_.docs.at(a.doc_id).slice(a.start, a.end);
  }

  static std::vector<std::string> argmax_all(const std::vector<SpanProbs>& scores) {
    std::vector<std::string> out;
    for (const auto& s : scores) out.push_back(argmax_label(s));
    return out;
  }

  ClassificationScore evaluate(const std::vector<std::string>& labels) const {
    std::vector<std::pair<std::string, std::string>> p, g;
    for (std::size_t i = 0; i < in_.instances.size(); ++i) {
      const auto& a = in_.instances[i];
      const auto key = detail::span_key(a.doc_id, a.start, a.end);
      p.emplace_back(key, labels[i]);
      g.emplace_back(key, a.label);
    }
    return micro_f1_grouped(p, g);
  }

  std::vector<SpanProbs> initial_scores(bool use_length) {
    std::vector<SpanProbs> out;
    if (in_.span_probs) {
      std::map<std::string, const SpanProbs*> by_key;
      for (const auto& r : *in_.span_probs) by_key[detail::span_key(r.doc_id, r.start, r.end)] = &r.probs;
      for (const auto& a : in_.instances) {
        auto it = by_key.find(detail::span_key(a.doc_id, a.start, a.end));
        if (it == by_key.end())
          throw ValidationError("no span probabilities for " + a.doc_id + " [" +
                                std::to_string(a.start) + "," + std::to_string(a.end) + ")");
        out.push_back(*it->second);
      }
      return out;
    }
    FeatureOptions opt;
    opt.length = use_length;
    std::vector<LabeledFeatures> data;
    for (const auto& a : in_.train->annotations()) {
      const auto& doc = in_.train->document(a.doc_id);
      data.push_back({featurize_span(doc.slice(a.start, a.end),
                                     containing_sentence(doc, a.start, a.end), in_.binning, opt),
                      a.label});
    }
    const SoftmaxModel model = train_softmax(data, in_.softmax);
    for (const auto& a : in_.instances) {
      const auto& doc = in_.docs.at(a.doc_id);
      out.push_back(predict_proba(
          model, featurize_span(doc.slice(a.start, a.end), containing_sentence(doc, a.start, a.end),
                                in_.binning, opt)));
    }
    return out;
  }

  const Gazetteer& gazetteer() {
    if (!gazetteer_) {
      if (in_.gazetteer) gazetteer_ = *in_.gazetteer;
      else if (in_.train) gazetteer_ = build_gazetteer(*in_.train);
      else throw ConfigError("gazetteer boost needs a gazetteer file or a training corpus");
    }
    return *gazetteer_;
  }

  const NestingModel& nesting_model() {
    if (!nesting_) {
      if (in_.nesting_model) {
        nesting_ = *in_.nesting_model;
      } else if (in_.train) {
        std::vector<std::string> classes;
        for (const auto& a : in_.train->annotations()) classes.push_back(a.label);
        nesting_ = build_nesting_model(*in_.train, classes, in_.nesting_temperature);
      } else {
        throw ConfigError("nesting resolution needs a nesting model or a training corpus");
      }
    }
    return *nesting_;
  }

  // Innermost pairs first; labels fixed by an earlier pair stay fixed.
  std::map<std::string, std::string> resolve_nesting(const std::vector<SpanProbs>& scores) {
    const NestingModel& nm = nesting_model();
    const auto allowed = nm.allowed_pairs();
    std::map<std::string, std::map<std::string, std::size_t>> first_instance;  // doc -> key -> idx
    std::map<std::string, std::vector<Span>> spans;
    for (std::size_t i = 0; i < in_.instances.size(); ++i) {
      const auto& a = in_.instances[i];
      const auto key = detail::span_key(a.doc_id, a.start, a.end);
      if (first_instance[a.doc_id].emplace(key, i).second)
        spans[a.doc_id].push_back({a.start, a.end, {}, {}});
    }
    std::map<std::string, std::string> fixed;
    for (auto& [doc, list] : spans) {
      auto pairs = find_nested_pairs(SpanSet(list));
      std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        return std::make_tuple(a.first.length(), a.second.length()) <
               std::make_tuple(b.first.length(), b.second.length());
      });
      for (const auto& [inner, outer] : pairs) {
        const auto ki = detail::span_key(doc, inner.start, inner.end);
        const auto ko = detail::span_key(doc, outer.start, outer.end);
        const auto& pi = scores[first_instance[doc][ki]];
        const auto& po = scores[first_instance[doc][ko]];
        std::optional<std::string> fi, fo;
        if (auto it = fixed.find(ki); it != fixed.end()) fi = it->second;
        if (auto it = fixed.find(ko); it != fixed.end()) fo = it->second;
        SpanProbs po_eff = po;
        if (fo) po_eff = SpanProbs{{*fo, 1.0}};
        NestingResolution r = in_.nesting_strategy == 2
                                  ? resolve_nesting_strategy2(pi, po_eff, nm, fi)
                                  : resolve_nesting_strategy1(pi, po_eff, allowed, fi);
        if (fo && r.outer != *fo) continue;  // no consistent choice; leave as is
        fixed[ki] = r.inner;
        fixed[ko] = r.outer;
      }
    }
    return fixed;
  }

  const ClassificationInputs& in_;
  std::optional<Gazetteer> gazetteer_;
  std::optional<NestingModel> nesting_;
  std::map<bool, std::vector<SpanProbs>> initial_;  // keyed by the length toggle
};

inline ClassificationResult run_classification(const ClassificationInputs& in,
                                               const ClassificationStages& st) {
  return ClassificationRunner(in).run(st);
}

// ---------------------------------------------------------------------------
// Ablation lattice
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  double score = 0.0;
  double delta = 0.0;  // against the previous row
};

inline const std::vector<std::string>& identification_toggles() {
  static const std::vector<std::string> t{"crf", "merge", "punct_fix"};
  return t;
}

inline const std::vector<std::string>& classification_toggles() {
  static const std::vector<std::string> t{"length", "gazetteer_boost", "repetition", "nesting",
                                          "multilabel"};
  return t;
}

inline void set_toggle(IdentificationStages& st, const std::string& name, bool on) {
  if (name == "crf") st.crf = on;
  else if (name == "merge") st.merge = on;
  else if (name == "punct_fix") st.punct_fix = on;
  else throw ConfigError("unknown identification stage '" + name + "'");
}

inline void set_toggle(ClassificationStages& st, const std::string& name, bool on) {
  if (name == "length") st.length = on;
  else if (name == "gazetteer_boost") st.gazetteer_boost = on;
  else if (name == "repetition") st.repetition = on;
  else if (name == "nesting") st.nesting = on;
  else if (name == "multilabel") st.multilabel = on;
  else throw ConfigError("unknown classification stage '" + name + "'");
}

// Row 0 has every lattice stage off; row i enables the first i stages in the
// given order. Stages outside the lattice keep their value from `base`.
template <typename Stages, typename RunFn>
std::vector<AblationRow> ablate(const std::vector<std::string>& lattice, Stages base, RunFn&& run) {
  if (lattice.empty()) throw ConfigError("ablation lattice is empty");
  for (const auto& name : lattice) set_toggle(base, name, false);
  std::vector<AblationRow> rows;
  rows.push_back({"baseline", run(base), 0.0});
  for (const auto& name : lattice) {
    set_toggle(base, name, true);
    const double s = run(base);
    rows.push_back({"+" + name, s, s - rows.back().score});
  }
  return rows;
}

inline std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::string out = "row\tscore\tdelta\n";
  for (const auto& r : rows)
    out += r.name + '\t' + format_double(r.score) + '\t' + format_double(r.delta) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Configuration file
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::string task = "identification";
  std::uint64_t seed = 13;
  Scheme scheme = Scheme::BIO;
  std::filesystem::path base_dir;

  // paths
  std::optional<std::filesystem::path> docs, gold, train_docs, train_annotations, gazetteer,
      span_probs, output;
  std::vector<std::filesystem::path> emissions, train_emissions, crf_models;

  IdentificationStages id_stages;
  ClassificationStages cls_stages;
  std::vector<std::string> lattice;

  PunctuationRuleConfig punct;
  RepetitionRuleConfig repetition;
  GazetteerBoostConfig boost;
  int nesting_strategy = 1;
  double nesting_temperature = 0.26;
  TrainConfig crf_train;
  SoftmaxTrainConfig softmax;
  std::vector<std::size_t> binning_edges{1, 2, 3, 5, 8, 13, 21, 34, 55, 89};

  // Generate the input data in-process instead of reading it.
  std::optional<std::uint64_t> synthetic_seed;
};

namespace detail {

inline const nlohmann::json* find_path(const nlohmann::json& j, std::string_view dotted) {
  const nlohmann::json* cur = &j;
  std::size_t pos = 0;
  while (true) {
    if (!cur->is_object()) return nullptr;
    const std::string rest(dotted.substr(pos));
    if (cur->contains(rest)) return &(*cur)[rest];
    auto dot = dotted.find('.', pos);
    if (dot == std::string_view::npos) return nullptr;
    const std::string key(dotted.substr(pos, dot - pos));
    if (!cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    pos = dot + 1;
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, std::string_view key, T& out) {
  if (const auto* v = find_path(j, key)) {
    try {
      out = v->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + std::string(key) + "': " + e.what());
    }
  }
}

inline std::u32string decode_config_string(const std::string& s, std::string_view key) {
  try {
    return utf8::decode(s);
  } catch (const EncodingError&) {
    throw ConfigError("config key '" + std::string(key) + "' is not valid UTF-8");
  }
}

}  // namespace detail

// JSON configuration. Nested objects and flat dotted keys ("punct.set") are
// both accepted. Relative paths resolve against `base_dir`.
inline PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::read_opt;
  PipelineConfig c;
  c.base_dir = base_dir;
  read_opt(j, "task", c.task);
  if (c.task != "identification" && c.task != "classification")
    throw ConfigError("task must be 'identification' or 'classification'");
  read_opt(j, "seed", c.seed);
  std::string scheme = "BIO";
  read_opt(j, "scheme", scheme);
  try {
    c.scheme = parse_scheme(scheme);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }

  auto path = [&](std::string_view key, std::optional<std::filesystem::path>& out) {
    std::string s;
    read_opt(j, key, s);
    if (!s.empty()) out = base_dir / s;
  };
  auto paths = [&](std::string_view key, std::vector<std::filesystem::path>& out) {
    const auto* v = detail::find_path(j, key);
    if (!v) return;
    if (v->is_string()) out.push_back(base_dir / v->get<std::string>());
    else if (v->is_array())
      for (const auto& x : *v) out.push_back(base_dir / x.get<std::string>());
    else throw ConfigError("config key '" + std::string(key) + "' must be a path or list of paths");
  };
  path("paths.docs", c.docs);
  path("paths.gold", c.gold);
  path("paths.train_docs", c.train_docs);
  path("paths.train_annotations", c.train_annotations);
  path("paths.gazetteer", c.gazetteer);
  path("paths.span_probs", c.span_probs);
  path("paths.output", c.output);
  paths("paths.emissions", c.emissions);
  paths("paths.train_emissions", c.train_emissions);
  paths("paths.crf_model", c.crf_models);

  read_opt(j, "stages.crf", c.id_stages.crf);
  read_opt(j, "stages.merge", c.id_stages.merge);
  read_opt(j, "stages.punct_fix", c.id_stages.punct_fix);
  std::string order = "merge-then-fix";
  read_opt(j, "stages.order", order);
  if (order != "merge-then-fix" && order != "fix-then-merge")
    throw ConfigError("stages.order must be 'merge-then-fix' or 'fix-then-merge'");
  c.id_stages.fix_before_merge = order == "fix-then-merge";
  read_opt(j, "stages.length", c.cls_stages.length);
  read_opt(j, "stages.gazetteer_boost", c.cls_stages.gazetteer_boost);
  read_opt(j, "stages.repetition", c.cls_stages.repetition);
  read_opt(j, "stages.nesting", c.cls_stages.nesting);
  read_opt(j, "stages.multilabel", c.cls_stages.multilabel);
  read_opt(j, "ablate.lattice", c.lattice);

  if (const auto* v = detail::find_path(j, "punct.set"))
    c.punct.punctuation_set = detail::decode_config_string(v->get<std::string>(), "punct.set");
  if (const auto* v = detail::find_path(j, "punct.quotes")) {
    c.punct.quote_pairs.clear();
    for (const auto& q : *v) {
      auto cps = detail::decode_config_string(q.get<std::string>(), "punct.quotes");
      if (cps.size() != 2) throw ConfigError("punct.quotes entries must be two characters");
      c.punct.quote_pairs.emplace_back(cps[0], cps[1]);
    }
  }
  c.punct.check();
  read_opt(j, "repetition.t1", c.repetition.t1);
  read_opt(j, "repetition.t2", c.repetition.t2);
  read_opt(j, "repetition.class", c.repetition.class_name);
  c.repetition.check();
  read_opt(j, "gazetteer.delta", c.boost.delta);
  c.boost.check();
  read_opt(j, "nesting.strategy", c.nesting_strategy);
  if (c.nesting_strategy != 1 && c.nesting_strategy != 2)
    throw ConfigError("nesting.strategy must be 1 or 2");
  read_opt(j, "nesting.temperature", c.nesting_temperature);
  if (!(c.nesting_temperature > 0.0)) throw ConfigError("nesting.temperature must be positive");
  read_opt(j, "crf.learning_rate", c.crf_train.learning_rate);
  read_opt(j, "crf.epochs", c.crf_train.epochs);
  read_opt(j, "crf.l2", c.crf_train.l2);
  read_opt(j, "crf.batch_size", c.crf_train.batch_size);
  c.crf_train.seed = c.seed;
  read_opt(j, "softmax.learning_rate", c.softmax.learning_rate);
  read_opt(j, "softmax.epochs", c.softmax.epochs);
  read_opt(j, "softmax.l2", c.softmax.l2);
  read_opt(j, "binning.edges", c.binning_edges);
  if (const auto* v = detail::find_path(j, "synthetic.seed")) c.synthetic_seed = v->get<std::uint64_t>();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

namespace detail {

inline const std::filesystem::path& require(const std::optional<std::filesystem::path>& p,
                                            std::string_view key) {
  if (!p) throw ConfigError("missing config key '" + std::string(key) + "'");
  if (!std::filesystem::exists(*p)) throw ConfigError("path does not exist: " + p->string());
  return *p;
}

inline void require_all(const std::vector<std::filesystem::path>& ps, std::string_view key) {
  if (ps.empty()) throw ConfigError("missing config key '" + std::string(key) + "'");
  for (const auto& p : ps)
    if (!std::filesystem::exists(p)) throw ConfigError("path does not exist: " + p.string());
}

inline std::vector<LabeledEmission> labeled(const std::vector<EmissionMatrix>& ems,
                                            const std::vector<Annotation>& gold,
                                            const std::map<std::string, Document>& docs,
                                            Scheme scheme) {
  std::vector<LabeledEmission> out;
  for (const auto& em : ems) {
    auto it = docs.find(em.doc_id);
    const std::size_t len = it == docs.end() ? 0 : it->second.size();
    out.push_back({em, gold_path_for(em, token_ranges_for(em, gold, len), scheme)});
  }
  return out;
}

}  // namespace detail

// Builds identification inputs from config paths, or from the synthetic
// fixture when `synthetic.seed` is set.
inline IdentificationInputs identification_inputs(const PipelineConfig& c) {
  IdentificationInputs in;
  in.scheme = c.scheme;
  in.train = c.crf_train;
  in.punct = c.punct;
  if (c.synthetic_seed) {
    auto fx = synthetic::make_identification_fixture(*c.synthetic_seed);
    if (c.scheme != Scheme::BIO) throw ConfigError("the synthetic fixture is BIO-tagged");
    in.docs = fx.test_docs;
    in.gold = fx.test_gold;
    in.emissions = fx.test_emissions;
    for (const auto& member : fx.train_emissions)
      in.crf_train.push_back(detail::labeled(member, fx.train_gold, fx.train_docs, c.scheme));
    return in;
  }
  in.docs = load_documents(detail::require(c.docs, "paths.docs"));
  if (c.gold) in.gold = load_annotations(detail::require(c.gold, "paths.gold"));
  detail::require_all(c.emissions, "paths.emissions");
  for (const auto& p : c.emissions) in.emissions.push_back(load_emissions(p));
  for (const auto& p : c.crf_models) {
    if (!std::filesystem::exists(p)) throw ConfigError("path does not exist: " + p.string());
    in.crf_models.push_back(load_model(p));
  }
  if (in.crf_models.empty() && !c.train_emissions.empty()) {
    detail::require_all(c.train_emissions, "paths.train_emissions");
    const auto gold = load_annotations(detail::require(c.train_annotations, "paths.train_annotations"));
    std::map<std::string, Document> train_docs;
    if (c.train_docs) train_docs = load_documents(detail::require(c.train_docs, "paths.train_docs"));
    for (const auto& p : c.train_emissions)
      in.crf_train.push_back(detail::labeled(load_emissions(p), gold, train_docs, c.scheme));
  }
  return in;
}

inline ClassificationInputs classification_inputs(const PipelineConfig& c) {
  ClassificationInputs in;
  in.repetition = c.repetition;
  in.boost = c.boost;
  in.nesting_strategy = c.nesting_strategy;
  in.nesting_temperature = c.nesting_temperature;
  in.softmax = c.softmax;
  in.binning = LengthBinning(c.binning_edges);
  if (c.synthetic_seed) {
    auto fx = synthetic::make_classification_fixture(*c.synthetic_seed);
    in.docs = fx.test.documents();
    in.instances = fx.test.annotations();
    in.train = fx.train;
    return in;
  }
  in.docs = load_documents(detail::require(c.docs, "paths.docs"));
  in.instances = load_annotations(detail::require(c.gold, "paths.gold"));
  Corpus(in.docs, in.instances);  // validates offsets
  if (c.span_probs) in.span_probs = load_span_probs(detail::require(c.span_probs, "paths.span_probs"));
  if (c.train_docs && c.train_annotations)
    in.train = Corpus(load_documents(detail::require(c.train_docs, "paths.train_docs")),
                      load_annotations(detail::require(c.train_annotations, "paths.train_annotations")));
  if (c.gazetteer) in.gazetteer = load_gazetteer(detail::require(c.gazetteer, "paths.gazetteer"));
  return in;
}

}  // namespace spanlab
