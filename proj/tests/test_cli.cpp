#include <gtest/gtest.h>

#include "json.hpp"
#include "lercause/corpus.hpp"
#include "support/process.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

namespace {

using namespace lercause;
using lercause::testing::run;
using lercause::testing::slurp;
using lercause::testing::spit;
using lercause::testing::TempDir;
using nlohmann::json;

const std::string kCli = LERCAUSE_CLI_PATH;

corpus::CorpusRecord causal_record(const std::string& id, const std::string& text) {
  corpus::CorpusRecord r;
  r.id = id;
  r.text = text;
  r.label = corpus::Label::causal;
  r.doc_id = "d";
  return r;
}

TEST(Cli, ExtractSingleRecord) {
  TempDir dir;
  const auto in = dir.file("c.jsonl");
  corpus::write_corpus_file(
      in, {causal_record("r1", "The DB-50 supply breaker to Auxiliary Feedwater Pump 21 did not close due to inertial latch binding")});
  const auto r = run({kCli, "extract", "--input", in});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto nl = r.out.find('\n');
  ASSERT_EQ(nl + 1, r.out.size());
  const auto pair = json::parse(r.out.substr(0, nl));
  EXPECT_EQ(pair["cause"], "inertial latch binding");
  EXPECT_EQ(pair["effect"], "The DB-50 supply breaker to Auxiliary Feedwater Pump 21 did not close");
  EXPECT_EQ(pair["source_id"], "r1");
}

TEST(Cli, ExtractSkipsNonCausalUnlessAll) {
  TempDir dir;
  const auto in = dir.file("c.jsonl");
  auto record = causal_record("r1", "X failed due to Y.");
  record.label = corpus::Label::non_causal;
  corpus::write_corpus_file(in, {record});
  EXPECT_TRUE(run({kCli, "extract", "--input", in}).out.empty());
  EXPECT_FALSE(run({kCli, "extract", "--input", in, "--all"}).out.empty());
}

TEST(Cli, HistogramOfEmptyCorpus) {
  TempDir dir;
  const auto in = dir.file("empty.jsonl");
  spit(in, "");
  const auto r = run({kCli, "histogram", "--input", in});
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, HistogramCountsDescending) {
  TempDir dir;
  const auto in = dir.file("c.jsonl");
  corpus::write_corpus_file(in, {causal_record("a", "A failed due to B and C due to D."),
                                 causal_record("b", "E was caused by F.")});
  const auto r = run({kCli, "histogram", "--input", in});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "2\tdue to");
  EXPECT_NE(r.out.find("1\tcaused by\n"), std::string::npos);
}

TEST(Cli, UsageAndDataErrors) {
  EXPECT_EQ(run({kCli, "extract", "--no-such-flag"}).exit_code, 2);
  EXPECT_EQ(run({kCli, "frobnicate"}).exit_code, 2);
  EXPECT_EQ(run({kCli, "classify", "--input", "x"}).exit_code, 2);  // --checkpoint is required
  const auto missing = run({kCli, "extract", "--input", "/nonexistent/corpus.jsonl"});
  EXPECT_EQ(missing.exit_code, 1);
  EXPECT_NE(missing.err.find("/nonexistent/corpus.jsonl"), std::string::npos);
  TempDir dir;
  const auto bad = dir.file("bad.jsonl");
  spit(bad, "{\"id\": 1}\n");
  EXPECT_EQ(run({kCli, "extract", "--input", bad}).exit_code, 1);
}

TEST(Cli, IngestSplitAreDeterministicAndLeaveInputsAlone) {
  TempDir dir;
  const auto docs = dir.file("docs.jsonl");
  json doc = json::object();
  for (const char* key : {"facility_name", "title", "event_date", "report_date", "cause", "system", "component",
                          "manufacturer", "iris_reportability", "abstract", "event_description", "cause_description"}) {
    doc[key] = "";
  }
  std::string lines;
  for (int i = 0; i < 4; ++i) {
    doc["doc_id"] = "L" + std::to_string(i);
    doc["abstract"] = "Pump " + std::to_string(i) + " tripped. Operators restored it. The cause was a fuse.";
    lines += doc.dump() + "\n";
  }
  spit(docs, lines);
  const auto corpus_a = dir.file("a.jsonl");
  const auto corpus_b = dir.file("b.jsonl");
  ASSERT_EQ(run({kCli, "ingest", "--input", docs, "--output", corpus_a}).exit_code, 0);
  ASSERT_EQ(run({kCli, "ingest", "--input", docs, "--output", corpus_b}).exit_code, 0);
  EXPECT_EQ(slurp(corpus_a), slurp(corpus_b));
  EXPECT_EQ(slurp(docs), lines);
  EXPECT_EQ(corpus::read_corpus_file(corpus_a).size(), 4u * 6u);

  const auto before = slurp(corpus_a);
  ASSERT_EQ(run({kCli, "split", "--input", corpus_a, "--output", dir.file("s1"), "--seed", "3"}).exit_code, 0);
  ASSERT_EQ(run({kCli, "split", "--input", corpus_a, "--output", dir.file("s2"), "--seed", "3"}).exit_code, 0);
  EXPECT_EQ(slurp(dir.file("s1/train.jsonl")), slurp(dir.file("s2/train.jsonl")));
  EXPECT_EQ(slurp(dir.file("s1/test.jsonl")), slurp(dir.file("s2/test.jsonl")));
  EXPECT_EQ(corpus::read_corpus_file(dir.file("s1/train.jsonl")).size(), 19u);
  EXPECT_EQ(slurp(corpus_a), before);
}

TEST(Cli, TrainClassifyEvaluatePipeline) {
  TempDir dir;
  const auto all = dir.file("all.jsonl");
  corpus::write_corpus_file(all, lercause::testing::synthetic_corpus({.records = 400, .seed = 21}));
  ASSERT_EQ(run({kCli, "split", "--input", all, "--output", dir.file("split")}).exit_code, 0);
  spit(dir.file("config.json"),
       R"({"embed_dim":16,"conv_filters":16,"conv_kernel":3,"lstm1_units":12,"lstm2_units":8,)"
       R"("dense_units":8,"batch_size":16,"max_epochs":15,"learning_rate":0.005,"dropout_rate":0.2})");
  const auto model = dir.file("model.ckpt");
  const auto trained = run({kCli, "train", "--input", dir.file("split/train.jsonl"), "--output", model, "--config",
                            dir.file("config.json")});
  ASSERT_EQ(trained.exit_code, 0) << trained.err;
  EXPECT_NE(trained.err.find("epoch 1 "), std::string::npos);
  const auto report = json::parse(slurp(model + ".report.json"));
  EXPECT_GE(report["best_epoch"].get<int>(), 1);

  const auto predicted = dir.file("pred.jsonl");
  ASSERT_EQ(run({kCli, "classify", "--input", dir.file("split/test.jsonl"), "--checkpoint", model, "--output", predicted})
                .exit_code,
            0);
  const auto again = dir.file("pred2.jsonl");
  ASSERT_EQ(run({kCli, "classify", "--input", dir.file("split/test.jsonl"), "--checkpoint", model, "--output", again})
                .exit_code,
            0);
  EXPECT_EQ(slurp(predicted), slurp(again));

  const auto evaluated = run({kCli, "evaluate", "--input", predicted, "--output", dir.file("eval.json")});
  ASSERT_EQ(evaluated.exit_code, 0) << evaluated.err;
  EXPECT_NE(evaluated.out.find("accuracy"), std::string::npos);
  const auto metrics = json::parse(slurp(dir.file("eval.json")));
  EXPECT_GE(metrics["accuracy"].get<double>(), 0.95);

  // Everything predicted non-causal is skipped by extract.
  const auto pairs = run({kCli, "extract", "--input", predicted});
  ASSERT_EQ(pairs.exit_code, 0);
  EXPECT_FALSE(pairs.out.empty());
}

TEST(Cli, EvaluateExtractionAgainstGold) {
  TempDir dir;
  spit(dir.file("pred.jsonl"), R"({"cause":"Y","effect":"X failed","pattern":"due to","source_id":"a"})"
                               "\n");
  spit(dir.file("gold.jsonl"), R"({"cause":"y","effect":"x  failed","pattern":"","source_id":""})"
                               "\n"
                               R"({"cause":"Q","effect":"P","pattern":"","source_id":""})"
                               "\n");
  const auto r = run({kCli, "evaluate", "--input", dir.file("pred.jsonl"), "--gold", dir.file("gold.jsonl"), "--output",
                      dir.file("score.json")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto score = json::parse(slurp(dir.file("score.json")));
  EXPECT_EQ(score["correct"], 1);
  EXPECT_EQ(score["total_gold"], 2);
}

TEST(Cli, GradcheckReportsMaximum) {
  const auto r = run({kCli, "gradcheck"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto at = r.out.find("max_relative_error ");
  ASSERT_NE(at, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(at + 19)), 1e-4);
}

}  // namespace
