#include <filesystem>

#include <unistd.h>

#include <gtest/gtest.h>

#include "hublab/commands.hpp"
#include "hublab/io.hpp"
#include "test_util.hpp"

using namespace hublab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("hublab-cmd-" + std::string(info->name()) + "-" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunConfig simulated(std::size_t n, const std::string& sub = "data") {
    RunConfig c = parse_config(json{{"n_pairs", n}, {"dim", 16}, {"seed", 4}});
    c.out_dir = (dir_ / sub).string();
    cmd_simulate(c);
    c.query_path = (dir_ / sub / "queries.emb").string();
    c.gallery_path = (dir_ / sub / "galleries.emb").string();
    return c;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Commands, SimulateWritesFilesAndSidecars) {
  const RunConfig c = simulated(50);
  const EmbeddingSet q = read_embeddings(c.query_path);
  EXPECT_EQ(q.size(), 50u);
  EXPECT_EQ(q.ids[0], "q0");
  EXPECT_EQ(q.labels[7], 7);
  const json doc = json::parse(read_text(dir_ / "data" / "simulate.json"));
  EXPECT_EQ(doc["command"], "simulate");
  EXPECT_EQ(doc["format_version"], kReportFormatVersion);
  EXPECT_EQ(doc["planted"].size(), 5u);
}

TEST_F(Commands, AnalyzeEqualsLibraryCall) {
  RunConfig c = simulated(1000);
  c.out_dir = (dir_ / "analyze").string();
  const json doc = cmd_analyze(c);
  const auto q = read_embeddings(c.query_path);
  const auto g = read_embeddings(c.gallery_path);
  const auto lib = hubness_report(cosine_similarity_matrix(q, g), c.metrics);
  EXPECT_EQ(doc["report"], to_json(lib));
  EXPECT_EQ(json::parse(read_text(dir_ / "analyze" / "report.json")), doc);
  EXPECT_EQ(read_text(dir_ / "analyze" / "histogram.csv"), histogram_csv(lib));
  EXPECT_EQ(doc["config"], resolved_config(c));
}

TEST_F(Commands, AnalyzeIsByteStable) {
  RunConfig c = simulated(120);
  c.out_dir = (dir_ / "a").string();
  cmd_analyze(c);
  c.out_dir = (dir_ / "b").string();
  cmd_analyze(c);
  for (const char* f : {"report.json", "histogram.csv"}) EXPECT_EQ(read_text(dir_ / "a" / f), read_text(dir_ / "b" / f));
}

TEST_F(Commands, RetrieveIdentityPair) {
  EmbeddingSet e;
  e.data = Matrix::Identity(6, 6);
  write_embeddings(dir_ / "q.emb", e);
  write_embeddings(dir_ / "g.emb", e);
  RunConfig c;
  c.query_path = (dir_ / "q.emb").string();
  c.gallery_path = (dir_ / "g.emb").string();
  c.out_dir = (dir_ / "out").string();
  const json doc = cmd_retrieve(c);
  EXPECT_EQ(doc["retrieval"]["recall"]["R@1"].get<double>(), 100.0);
  const std::string csv = read_text(dir_ / "out" / "ranked.csv");
  EXPECT_EQ(csv.rfind("query_id,rank,gallery_id,score\n0,1,0,1.0\n", 0), 0u);
}

TEST_F(Commands, RetrieveMultiPositiveMatchesLibrary) {
  RunConfig c = simulated(60);
  const auto labels = RelevanceLabels::from_pairs(60, 60, [] {
    std::vector<std::pair<std::size_t, std::size_t>> p;
    for (std::size_t i = 0; i < 60; ++i) {
      p.emplace_back(i, i);
      p.emplace_back(i, (i * 7 + 3) % 60);
    }
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    return p;
  }());
  write_text(dir_ / "labels.json", dump_json(to_json(labels)));
  c.labels_path = (dir_ / "labels.json").string();
  c.out_dir = (dir_ / "out").string();
  const auto q = read_embeddings(c.query_path);
  const auto g = read_embeddings(c.gallery_path);
  for (RetrievalMode mode : {RetrievalMode::Simi, RetrievalMode::SimiCent}) {
    c.mode = mode;
    const json doc = cmd_retrieve(c);
    SimilarityMatrix s = cosine_similarity_matrix(q, g);
    if (mode == RetrievalMode::SimiCent) {
      MemoryBank bank(60, 16);
      EmbeddingSet rows = q;
      bank.push_batch(rows);
      s = infer_simi_cent(s, bank, g);
    }
    EXPECT_EQ(doc["retrieval"], to_json(retrieval_eval(s, labels)));
  }
}

TEST_F(Commands, SimiCentEmptyBankFails) {
  RunConfig c = simulated(20);
  EmbeddingSet empty;
  empty.data = Matrix(0, 16);
  write_embeddings(dir_ / "empty.emb", empty);
  c.mode = RetrievalMode::SimiCent;
  c.bank_path = (dir_ / "empty.emb").string();
  c.out_dir = (dir_ / "out").string();
  EXPECT_CODE(cmd_retrieve(c), ErrorCode::EmptyBank);
}

TEST_F(Commands, ProbeWritesSymmetricLabels) {
  RunConfig c = simulated(30);
  c.text_path = c.query_path;
  c.probe_threshold = 0.5;
  c.out_dir = (dir_ / "probe").string();
  const json doc = cmd_probe(c);
  const auto labels = relevance_from_json(doc["labels"]);
  EXPECT_EQ(labels.source(), LabelSource::PseudoPositive);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_TRUE(labels.relevant(i, i));
    for (std::size_t j = 0; j < 30; ++j) EXPECT_EQ(labels.relevant(i, j), labels.relevant(j, i));
  }
  // the probe output feeds straight back in as a labels file
  c.labels_path = (dir_ / "probe" / "labels.json").string();
  c.out_dir = (dir_ / "analyze").string();
  EXPECT_TRUE(cmd_analyze(c)["report"].contains("good_histogram"));
}

TEST_F(Commands, TrainRunDirectory) {
  RunConfig c = parse_config(json{{"n_pairs", 40}, {"dim", 8}, {"epochs", 2}, {"batch_size", 8}, {"k", 5}});
  c.out_dir = (dir_ / "one").string();
  const json doc = cmd_train(c);
  const fs::path run = doc["run_dir"].get<std::string>();
  EXPECT_EQ(run, run_directory(c));
  EXPECT_EQ(run.filename().string(), "run-" + config_digest(c));
  for (const char* f : {"resolved_config.json", "loss.csv", "report_before.json", "report_after.json", "queries.emb",
                        "galleries.emb"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  EXPECT_FALSE(fs::exists(run.string() + ".partial"));
  const json manifest = json::parse(read_text(run / "resolved_config.json"));
  EXPECT_EQ(manifest["steps"], 10);
  EXPECT_EQ(manifest["config"], resolved_config(c));
  EXPECT_CODE(cmd_train(c), ErrorCode::IoError);

  // Same resolved config elsewhere: same run name, same bytes.
  c.out_dir = (dir_ / "two").string();
  const fs::path run2 = cmd_train(c)["run_dir"].get<std::string>();
  EXPECT_EQ(run2.filename(), run.filename());
  for (const auto& entry : fs::directory_iterator(run)) {
    EXPECT_EQ(read_text(entry.path()), read_text(run2 / entry.path().filename())) << entry.path().filename();
  }
}

TEST_F(Commands, MissingInputs) {
  RunConfig c;
  c.out_dir = (dir_ / "x").string();
  EXPECT_CODE(cmd_analyze(c), ErrorCode::ConfigError);
  EXPECT_CODE(cmd_probe(c), ErrorCode::ConfigError);
  c.query_path = (dir_ / "nope.emb").string();
  c.gallery_path = c.query_path;
  EXPECT_CODE(cmd_retrieve(c), ErrorCode::IoError);
}
