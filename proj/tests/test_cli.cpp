#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "spanlab/corpus.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/synthetic.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace spanlab;

namespace {

std::string quote(const std::string& s) { return "'" + s + "'"; }

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

class Cli : public ::testing::Test {
 protected:
  testutil::TempDir dir;

  CliResult run(const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = quote(SPANLAB_CLI) + " " + args + " >" + quote(out.string()) + " 2>" +
                            quote(err.string());
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string p(const std::string& name) { return quote((dir / name).string()); }

  void write_docs(const std::string& sub, const std::map<std::string, Document>& docs) {
    for (const auto& [id, doc] : docs) write(dir / sub / ("article" + id + ".txt"), doc.text());
  }

  // Writes the synthetic identification fixture as documents, gold TSVs and
  // one emission file per ensemble member.
  void write_identification_fixture() {
    const auto fx = synthetic::make_identification_fixture(7);
    write_docs("train_docs", fx.train_docs);
    write_docs("test_docs", fx.test_docs);
    save_annotations(fx.train_gold, dir / "train_gold.tsv");
    save_annotations(fx.test_gold, dir / "test_gold.tsv");
    for (std::size_t m = 0; m < fx.train_emissions.size(); ++m) {
      save_emissions(fx.train_emissions[m], dir / ("train_em" + std::to_string(m) + ".jsonl"));
      save_emissions(fx.test_emissions[m], dir / ("test_em" + std::to_string(m) + ".jsonl"));
    }
  }
};

}  // namespace

TEST_F(Cli, TokenizeToStdout) {
  write(dir / "doc.txt", "Hi, you.");
  const auto r = run("tokenize " + p("doc.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0\t0\t2\tHi\n1\t2\t3\t,\n2\t4\t7\tyou\n3\t7\t8\t.\n");
}

TEST_F(Cli, EncodeWritesTags) {
  write(dir / "docs/article1.txt", "Alpha beta gamma");
  write(dir / "ann.tsv", "1\tPROP\t6\t10\n");
  const auto r = run("--out " + p("o") + " encode --docs " + p("docs") + " --annotations " + p("ann.tsv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string conll = slurp(dir / "o/tags.conll");
  EXPECT_NE(conll.find("Alpha\tO"), std::string::npos);
  EXPECT_NE(conll.find("beta\tB-PROP"), std::string::npos);
  EXPECT_NE(conll.find("gamma\tO"), std::string::npos);
  const auto bioes = run("encode --docs " + p("docs") + " --annotations " + p("ann.tsv") + " --scheme BIOES");
  ASSERT_EQ(bioes.code, 0) << bioes.err;
  EXPECT_NE(bioes.out.find("beta\tS-PROP"), std::string::npos);
}

TEST_F(Cli, TrainDecodeEvaluate) {
  write_identification_fixture();
  const auto train = run("--seed 3 --out " + p("o") + " train-crf --emissions " + p("train_em0.jsonl") +
                         " --annotations " + p("train_gold.tsv") + " --docs " + p("train_docs") +
                         " --epochs 5");
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_TRUE(slurp(dir / "o/crf.model").starts_with("spanlab-crf"));

  const auto dec = run("--out " + p("o") + " decode --emissions " + p("test_em0.jsonl") + " --model " +
                       p("o/crf.model"));
  ASSERT_EQ(dec.code, 0) << dec.err;
  const auto preds = load_annotations(dir / "o/predictions.tsv");
  EXPECT_FALSE(preds.empty());
  Corpus(load_documents(dir / "test_docs"), preds);

  const auto arg = run("decode --emissions " + p("test_em0.jsonl"));
  ASSERT_EQ(arg.code, 0) << arg.err;

  const auto ev = run("evaluate --pred " + p("o/predictions.tsv") + " --gold " + p("test_gold.tsv"));
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_TRUE(ev.out.starts_with("precision\t"));
  EXPECT_NE(ev.out.find("\nf1\t"), std::string::npos);
}

TEST_F(Cli, MergeAndFixBoundaries) {
  write(dir / "a.tsv", "1\tPROP\t0\t5\n");
  write(dir / "b.tsv", "1\tPROP\t3\t8\n1\tPROP\t10\t12\n");
  const auto m = run("merge " + p("a.tsv") + " " + p("b.tsv"));
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(m.out, "1\t0\t8\n1\t10\t12\n");

  write(dir / "docs/article1.txt", "He said \"Stop now\" today.");
  write(dir / "spans.tsv", "1\tPROP\t9\t18\n1\tPROP\t9\t17\n");
  const auto f = run("fix-boundaries --docs " + p("docs") + " --spans " + p("spans.tsv"));
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(f.out, "1\tPROP\t8\t18\n1\tPROP\t9\t17\n");
}

TEST_F(Cli, GazetteerBuildAndApply) {
  write(dir / "docs/article1.txt", "running dogs bark");
  write(dir / "ann.tsv", "1\tFear\t0\t12\n");
  const auto b = run("--out " + p("o") + " gazetteer build --docs " + p("docs") + " --annotations " +
                     p("ann.tsv"));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(dir / "o/gazetteer.tsv"), "run dog\tFear:1\n");

  write(dir / "probs.jsonl", R"({"doc_id":"1","start":0,"end":12,"probs":{"Doubt":0.6,"Fear":0.4}})" "\n");
  const auto a = run("gazetteer apply --gazetteer " + p("o/gazetteer.tsv") + " --docs " + p("docs") +
                     " --span-probs " + p("probs.jsonl") + " --delta 0.5");
  ASSERT_EQ(a.code, 0) << a.err;
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_DOUBLE_EQ(j["probs"]["Doubt"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(j["probs"]["Fear"].get<double>(), 0.9);
}

TEST_F(Cli, FileBasedIdentificationPipeline) {
  write_identification_fixture();
  const nlohmann::json cfg = {
      {"task", "identification"},
      {"seed", 7},
      {"paths",
       {{"docs", "test_docs"},
        {"gold", "test_gold.tsv"},
        {"emissions", {"test_em0.jsonl", "test_em1.jsonl"}},
        {"train_emissions", {"train_em0.jsonl", "train_em1.jsonl"}},
        {"train_annotations", "train_gold.tsv"},
        {"train_docs", "train_docs"}}},
      {"stages", {{"crf", true}, {"merge", true}}},
      {"crf.epochs", 5}};
  write(dir / "cfg.json", cfg.dump());
  const auto r = run("--config " + p("cfg.json") + " --out " + p("o") + " pipeline");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string report = slurp(dir / "o/report.tsv");
  EXPECT_NE(report.find("f1\t"), std::string::npos);
  EXPECT_NE(report.find("illegal_rate_output\t0\n"), std::string::npos);
  Corpus(load_documents(dir / "test_docs"), load_annotations(dir / "o/predictions.tsv"));
}

TEST_F(Cli, SyntheticRunsAreByteIdentical) {
  const std::string cfg = quote(std::string(SPANLAB_CONFIGS) + "/synthetic_classification.json");
  ASSERT_EQ(run("--config " + cfg + " --out " + p("a") + " classify").code, 0);
  ASSERT_EQ(run("--config " + cfg + " --out " + p("b") + " classify").code, 0);
  for (const char* f : {"predictions.tsv", "report.tsv"}) {
    EXPECT_FALSE(slurp(dir / "a" / f).empty()) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  ASSERT_EQ(run("--config " + cfg + " --out " + p("a") + " ablate").code, 0);
  ASSERT_EQ(run("--config " + cfg + " --out " + p("b") + " ablate").code, 0);
  const std::string table = slurp(dir / "a/ablation.tsv");
  EXPECT_EQ(table, slurp(dir / "b/ablation.tsv"));
  EXPECT_NE(table.find("repetition"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("tokenize --no-such-flag x").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("pipeline").code, 2);
  EXPECT_EQ(run("--config " + p("missing.json") + " pipeline").code, 2);
  write(dir / "bad.json", "{not json");
  EXPECT_EQ(run("--config " + p("bad.json") + " pipeline").code, 2);
  write(dir / "badtask.json", R"({"task": "tagging"})");
  EXPECT_EQ(run("--config " + p("badtask.json") + " pipeline").code, 2);

  write(dir / "ann.tsv", "1\tPROP\t0\t3\n");
  EXPECT_EQ(run("encode --docs " + p("nodocs") + " --annotations " + p("ann.tsv")).code, 3);
  write(dir / "docs/article1.txt", "abc def");
  EXPECT_EQ(run("encode --docs " + p("docs") + " --annotations " + p("ann.tsv") + " --scheme XYZ").code, 2);
  write(dir / "broken.tsv", "1\tPROP\t0\n");
  const auto r = run("encode --docs " + p("docs") + " --annotations " + p("broken.tsv"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("broken.tsv:1"), std::string::npos);
  write(dir / "outside.tsv", "1\tPROP\t0\t99\n");
  EXPECT_EQ(run("fix-boundaries --docs " + p("docs") + " --spans " + p("outside.tsv")).code, 3);
  write(dir / "em.jsonl", "{\"doc_id\": \"1\"}\n");
  EXPECT_EQ(run("decode --emissions " + p("em.jsonl")).code, 3);
  EXPECT_EQ(run("tokenize " + p("nope.txt")).code, 3);
}
