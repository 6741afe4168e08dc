#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spanlab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace spanlab;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// Writes `content` to <out>/<name>, or to stdout without --out.
void emit(const Globals& g, const std::string& name, const std::string& content) {
  if (g.out.empty()) {
    std::cout << content;
    return;
  }
  fs::create_directories(g.out);
  detail::write_file(fs::path(g.out) / name, content);
}

PipelineConfig config_from(const Globals& g) {
  PipelineConfig c = g.config.empty() ? parse_config(nlohmann::json::object()) : load_config(g.config);
  if (g.seed) {
    c.seed = *g.seed;
    c.crf_train.seed = *g.seed;
  }
  if (!g.out.empty()) c.output = g.out;
  return c;
}

std::map<std::string, SpanSet> read_span_file(const std::string& path, bool with_labels) {
  return group_spans(load_annotations(path), with_labels);
}

std::string identification_report(const IdentificationResult& r) {
  std::vector<std::pair<std::string, double>> rows;
  if (r.score) rows = report_rows(*r.score);
  rows.emplace_back("illegal_rate_argmax", r.illegal_rate_argmax);
  rows.emplace_back("illegal_rate_output", r.illegal_rate_output);
  return format_report(rows);
}

std::string classification_report(const ClassificationResult& r) {
  std::vector<std::pair<std::string, double>> rows;
  if (r.score) rows = report_rows(*r.score);
  for (const auto& [stage, v] : r.stage_scores) rows.emplace_back("stage[" + stage + "]", v);
  return format_report(rows);
}

std::vector<std::string> lattice_for(const PipelineConfig& c) {
  if (!c.lattice.empty()) return c.lattice;
  return c.task == "identification" ? identification_toggles() : classification_toggles();
}

Scheme scheme_arg(const std::string& name) {
  try {
    return parse_scheme(name);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spanlab: span tagging, decoding and post-processing toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline configuration (JSON)");
  app.add_option("--seed", g.seed, "Random seed (overrides the configuration)");
  app.add_option("--out", g.out, "Output directory (default: stdout)");

  // tokenize
  std::string tok_doc;
  auto* tokenize_cmd = app.add_subcommand("tokenize", "Print the tokens of a document");
  tokenize_cmd->add_option("document", tok_doc, "UTF-8 text file")->required();

  // encode
  std::string enc_docs, enc_ann, enc_scheme = "BIO";
  auto* encode_cmd = app.add_subcommand("encode", "Encode annotations as CoNLL-style tags");
  encode_cmd->add_option("--docs", enc_docs, "Document directory")->required();
  encode_cmd->add_option("--annotations", enc_ann, "Annotation TSV")->required();
  encode_cmd->add_option("--scheme", enc_scheme, "IO, BIO or BIOES");

  // train-crf
  std::string tc_em, tc_docs, tc_ann, tc_scheme = "BIO";
  TrainConfig tc_cfg;
  auto* train_cmd = app.add_subcommand("train-crf", "Train a CRF on emission scores");
  train_cmd->add_option("--emissions", tc_em, "Emission JSONL")->required();
  train_cmd->add_option("--annotations", tc_ann, "Gold annotation TSV")->required();
  train_cmd->add_option("--docs", tc_docs, "Document directory (bounds checking)");
  train_cmd->add_option("--scheme", tc_scheme, "IO, BIO or BIOES");
  train_cmd->add_option("--epochs", tc_cfg.epochs);
  train_cmd->add_option("--lr", tc_cfg.learning_rate);
  train_cmd->add_option("--l2", tc_cfg.l2);
  train_cmd->add_option("--batch-size", tc_cfg.batch_size);

  // decode
  std::string dec_em, dec_model, dec_scheme;
  auto* decode_cmd = app.add_subcommand("decode", "Decode emission scores into spans");
  decode_cmd->add_option("--emissions", dec_em, "Emission JSONL")->required();
  decode_cmd->add_option("--model", dec_model, "CRF model (default: per-token argmax)");
  decode_cmd->add_option("--scheme", dec_scheme, "Override the scheme inferred from tag_order");

  // merge
  std::vector<std::string> merge_inputs;
  auto* merge_cmd = app.add_subcommand("merge", "Union-merge overlapping spans of several prediction files");
  merge_cmd->add_option("inputs", merge_inputs, "Span TSV files")->required();

  // fix-boundaries
  std::string fix_docs, fix_spans;
  auto* fix_cmd = app.add_subcommand("fix-boundaries", "Apply the quote/punctuation boundary rule");
  fix_cmd->add_option("--docs", fix_docs, "Document directory")->required();
  fix_cmd->add_option("--spans", fix_spans, "Span TSV")->required();

  // gazetteer build|apply
  auto* gaz_cmd = app.add_subcommand("gazetteer", "Build or apply a stemmed-span gazetteer");
  gaz_cmd->require_subcommand(1);
  std::string gb_docs, gb_ann;
  auto* gaz_build = gaz_cmd->add_subcommand("build", "Build a gazetteer from training annotations");
  gaz_build->add_option("--docs", gb_docs, "Training document directory")->required();
  gaz_build->add_option("--annotations", gb_ann, "Training annotation TSV")->required();
  std::string ga_gaz, ga_docs, ga_probs;
  double ga_delta = GazetteerBoostConfig{}.delta;
  auto* gaz_apply = gaz_cmd->add_subcommand("apply", "Boost span probabilities with a gazetteer");
  gaz_apply->add_option("--gazetteer", ga_gaz, "Gazetteer TSV")->required();
  gaz_apply->add_option("--docs", ga_docs, "Document directory")->required();
  gaz_apply->add_option("--span-probs", ga_probs, "Span-probability JSONL")->required();
  gaz_apply->add_option("--delta", ga_delta, "Boost added per matching class");

  // classify / pipeline / ablate
  auto* classify_cmd = app.add_subcommand("classify", "Label spans (classification pipeline from --config)");
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the configured pipeline end to end");
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the configured toggle lattice");

  // evaluate
  std::string ev_pred, ev_gold, ev_task = "identification";
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against gold annotations");
  eval_cmd->add_option("--pred", ev_pred, "Predicted span TSV")->required();
  eval_cmd->add_option("--gold", ev_gold, "Gold span TSV")->required();
  eval_cmd->add_option("--task", ev_task, "identification or classification")
      ->check(CLI::IsMember({"identification", "classification"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*tokenize_cmd) {
      const Document doc("doc", detail::read_file(tok_doc));
      std::string out;
      for (const auto& t : tokenize(doc))
        out += std::to_string(t.index) + '\t' + std::to_string(t.start) + '\t' +
               std::to_string(t.end) + '\t' + t.text + '\n';
      emit(g, "tokens.tsv", out);
    } else if (*encode_cmd) {
      const Scheme scheme = scheme_arg(enc_scheme);
      const Corpus corpus(load_documents(enc_docs), load_annotations(enc_ann));
      std::vector<ConllDocument> out;
      for (const auto& [id, doc] : corpus.documents()) {
        const auto tokens = tokenize(doc);
        std::vector<LabeledRange> ranges;
        for (const auto& a : corpus.annotations_for(id))
          if (auto r = align_span(a, tokens, doc)) ranges.push_back({r->begin, r->end, a.label});
        const auto seq = encode(ranges, tokens.size(), scheme);
        ConllDocument cd;
        for (std::size_t i = 0; i < tokens.size(); ++i) cd.push_back({tokens[i].text, seq.tags[i]});
        out.push_back(std::move(cd));
      }
      std::ostringstream os;
      write_conll(os, out);
      emit(g, "tags.conll", os.str());
    } else if (*train_cmd) {
      const Scheme scheme = scheme_arg(tc_scheme);
      if (g.seed) tc_cfg.seed = *g.seed;
      std::map<std::string, Document> docs;
      if (!tc_docs.empty()) docs = load_documents(tc_docs);
      const auto data = detail::labeled(load_emissions(tc_em), load_annotations(tc_ann), docs, scheme);
      emit(g, "crf.model", format_model(train(data, scheme, tc_cfg)));
    } else if (*decode_cmd) {
      const auto ems = load_emissions(dec_em);
      std::optional<CrfModel> model;
      if (!dec_model.empty()) model = load_model(dec_model);
      std::vector<Annotation> out;
      for (const auto& em : ems) {
        const Scheme scheme = !dec_scheme.empty() ? scheme_arg(dec_scheme)
                              : model             ? model->scheme
                                                  : infer_scheme(em.tag_order);
        std::vector<std::size_t> path;
        if (model) {
          const auto mask = TransitionMask::for_scheme(model->tag_order, scheme);
          path = viterbi(*model, em, &mask).path;
        } else {
          path = argmax_path(em);
        }
        for (const auto& s : char_spans_from_tags(path_to_tags(path, em.tag_order, scheme), em.tokens))
          out.push_back({em.doc_id, *s.cls, s.start, s.end});
      }
      emit(g, "predictions.tsv", format_annotations(out));
    } else if (*merge_cmd) {
      std::map<std::string, std::vector<SpanSet>> by_doc;
      for (const auto& f : merge_inputs)
        for (auto& [id, set] : read_span_file(f, false)) by_doc[id].push_back(std::move(set));
      std::map<std::string, SpanSet> merged;
      for (const auto& [id, sets] : by_doc) merged.emplace(id, merge_ensemble(sets));
      emit(g, "merged.tsv", format_annotations(flatten_spans(merged), false));
    } else if (*fix_cmd) {
      const auto docs = load_documents(fix_docs);
      const PunctuationRuleConfig punct = config_from(g).punct;
      std::vector<Annotation> out;
      for (auto a : load_annotations(fix_spans)) {
        auto it = docs.find(a.doc_id);
        if (it == docs.end()) throw ValidationError("unknown document '" + a.doc_id + "'");
        if (a.end > it->second.size()) throw ValidationError("span outside document '" + a.doc_id + "'");
        const Span s = fix_boundaries({a.start, a.end, {}, {}}, it->second.chars(), punct);
        a.start = s.start;
        a.end = s.end;
        out.push_back(std::move(a));
      }
      emit(g, "fixed.tsv", format_annotations(out));
    } else if (*gaz_build) {
      const Corpus corpus(load_documents(gb_docs), load_annotations(gb_ann));
      emit(g, "gazetteer.tsv", format_gazetteer(build_gazetteer(corpus)));
    } else if (*gaz_apply) {
      const auto gaz = load_gazetteer(ga_gaz);
      const auto docs = load_documents(ga_docs);
      GazetteerBoostConfig boost{ga_delta};
      boost.check();
      auto recs = load_span_probs(ga_probs);
      std::string out;
      for (auto& r : recs) {
        auto it = docs.find(r.doc_id);
        if (it == docs.end()) throw ValidationError("unknown document '" + r.doc_id + "'");
        r.probs = apply_gazetteer_boost(r.probs, gaz.lookup(it->second.slice(r.start, r.end)), boost);
        out += to_json(r).dump() + '\n';
      }
      emit(g, "boosted_span_probs.jsonl", out);
    } else if (*eval_cmd) {
      const auto gold = load_annotations(ev_gold);
      const auto pred = load_annotations(ev_pred);
      if (ev_task == "identification") {
        emit(g, "report.tsv", format_report(report_rows(span_f1(group_spans(pred, false), group_spans(gold, false)))));
      } else {
        std::vector<std::pair<std::string, std::string>> p, q;
        for (const auto& a : pred) p.emplace_back(detail::span_key(a.doc_id, a.start, a.end), a.label);
        for (const auto& a : gold) q.emplace_back(detail::span_key(a.doc_id, a.start, a.end), a.label);
        emit(g, "report.tsv", format_report(report_rows(micro_f1_grouped(p, q))));
      }
    } else if (*classify_cmd || *pipeline_cmd) {
      if (g.config.empty()) throw ConfigError("--config is required");
      PipelineConfig c = config_from(g);
      if (*classify_cmd) c.task = "classification";
      if (c.task == "identification") {
        const auto in = identification_inputs(c);
        const auto res = run_identification(in, c.id_stages);
        emit(g, "predictions.tsv", format_annotations(flatten_spans(res.predictions)));
        emit(g, "report.tsv", identification_report(res));
      } else {
        const auto in = classification_inputs(c);
        const auto res = run_classification(in, c.cls_stages);
        emit(g, "predictions.tsv", format_annotations(res.predictions));
        emit(g, "report.tsv", classification_report(res));
      }
    } else if (*ablate_cmd) {
      if (g.config.empty()) throw ConfigError("--config is required");
      const PipelineConfig c = config_from(g);
      std::vector<AblationRow> rows;
      if (c.task == "identification") {
        const auto in = identification_inputs(c);
        IdentificationRunner runner(in);
        rows = ablate(lattice_for(c), c.id_stages, [&](const IdentificationStages& st) {
          auto r = runner.run(st);
          if (!r.score) throw ConfigError("ablation needs gold annotations");
          return r.score->f1;
        });
      } else {
        const auto in = classification_inputs(c);
        ClassificationRunner runner(in);
        rows = ablate(lattice_for(c), c.cls_stages, [&](const ClassificationStages& st) {
          return runner.run(st).score->micro_f1;
        });
      }
      emit(g, "ablation.tsv", format_ablation(rows));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
