#include "hublab/commands.hpp"

#include <algorithm>
#include <sstream>

#include "hublab/error.hpp"
#include "hublab/io.hpp"
#include "hublab/retrieval.hpp"
#include "hublab/synth.hpp"
#include "hublab/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hublab {

namespace {

json envelope(const char* command, const RunConfig& config) {
  return {{"format_version", kReportFormatVersion}, {"command", command}, {"config", resolved_config(config)}};
}

EmbeddingSet load_role(const std::string& path, Modality role, const char* what) {
  if (path.empty()) throw Error(ErrorCode::ConfigError, std::string(what) + " is required");
  EmbeddingSet e = read_embeddings(path);
  // The file's modality byte is informational; the role decides.
  e.modality = role;
  e.validate();
  return e;
}

void check_dims(const EmbeddingSet& q, const EmbeddingSet& g) {
  if (q.dim() != g.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "query dim " + std::to_string(q.dim()) + " != gallery dim " + std::to_string(g.dim()));
  }
}

RelevanceLabels load_relevance(const RunConfig& config, const EmbeddingSet& q, const EmbeddingSet& g) {
  RelevanceLabels labels;
  if (!config.labels_path.empty()) {
    try {
      const json doc = json::parse(read_text(config.labels_path));
      // Accept a bare relevance document or the output of the probe command.
      labels = relevance_from_json(doc.contains("labels") ? doc.at("labels") : doc);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::FormatError, std::string("bad labels file: ") + ex.what());
    }
    if (labels.n_queries() != q.size() || labels.n_gallery() != g.size()) {
      throw Error(ErrorCode::MissingLabels, "labels file does not match the embedding counts");
    }
  } else if (!q.labels.empty() && !g.labels.empty()) {
    labels = RelevanceLabels::from_classes(q.labels, g.labels);
  } else {
    if (q.size() != g.size()) throw Error(ErrorCode::MissingLabels, "no labels and the sets differ in size");
    labels = RelevanceLabels::diagonal(q.size());
  }
  return labels;
}

std::string id_of(const EmbeddingSet& e, std::size_t i) { return e.ids.empty() ? std::to_string(i) : e.ids[i]; }

}  // namespace

json cmd_analyze(const RunConfig& config) {
  const EmbeddingSet q = load_role(config.query_path, Modality::Query, "query_path");
  const EmbeddingSet g = load_role(config.gallery_path, Modality::Gallery, "gallery_path");
  check_dims(q, g);
  const SimilarityMatrix s = cosine_similarity_matrix(q, g);
  HubnessReport report;
  if (config.labels_path.empty()) {
    report = hubness_report(s, config.metrics);
  } else {
    report = hubness_report(s, config.metrics, load_relevance(config, q, g));
  }
  json doc = envelope("analyze", config);
  doc["report"] = to_json(report);
  const fs::path out = config.out_dir;
  write_text(out / "report.json", dump_json(doc));
  write_text(out / "histogram.csv", histogram_csv(report));
  return doc;
}

fs::path run_directory(const RunConfig& config) {
  return fs::path(config.out_dir) / ("run-" + config_digest(config));
}

json cmd_train(const RunConfig& config) {
  const fs::path dir = run_directory(config);
  if (fs::exists(dir)) throw Error(ErrorCode::IoError, "run directory " + dir.string() + " already exists");

  PairedDataset data;
  if (config.query_path.empty() && config.gallery_path.empty()) {
    data = synth_generate(config.synth).data;
  } else {
    data.queries = load_role(config.query_path, Modality::Query, "query_path");
    data.galleries = load_role(config.gallery_path, Modality::Gallery, "gallery_path");
    check_dims(data.queries, data.galleries);
    data.relevance = load_relevance(config, data.queries, data.galleries);
  }

  const TrainResult result = train(config.train, data, config.metrics);

  auto report_doc = [&](const HubnessReport& r, const RetrievalScores& scores) {
    json doc = envelope("train", config);
    doc["report"] = to_json(r);
    doc["retrieval"] = to_json(scores);
    return doc;
  };
  const json before = report_doc(result.before, result.retrieval_before);
  const json after = report_doc(result.after, result.retrieval_after);

  // Write into a scratch name and rename, so a failed run never leaves a
  // half-written directory under the final name.
  const fs::path scratch = dir.string() + ".partial";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  json manifest = envelope("train", config);
  manifest["steps"] = result.loss_curve.size();
  manifest["unconverged_plans"] = result.unconverged_plans;
  write_text(scratch / "resolved_config.json", dump_json(manifest));
  write_text(scratch / "loss.csv", loss_csv(result.loss_curve));
  write_text(scratch / "report_before.json", dump_json(before));
  write_text(scratch / "report_after.json", dump_json(after));
  write_embeddings(scratch / "queries.emb", result.queries);
  write_embeddings(scratch / "galleries.emb", result.galleries);
  fs::rename(scratch, dir);

  json out = after;
  out["run_dir"] = dir.string();
  return out;
}

json cmd_retrieve(const RunConfig& config) {
  const EmbeddingSet q = load_role(config.query_path, Modality::Query, "query_path");
  const EmbeddingSet g = load_role(config.gallery_path, Modality::Gallery, "gallery_path");
  check_dims(q, g);
  const RelevanceLabels labels = load_relevance(config, q, g);
  SimilarityMatrix s = cosine_similarity_matrix(q, g);
  if (config.mode == RetrievalMode::SimiCent) {
    EmbeddingSet bank_rows = read_embeddings(config.bank_path.empty() ? config.query_path : config.bank_path);
    bank_rows.modality = Modality::Query;
    bank_rows.ids.clear();
    bank_rows.labels.clear();
    if (bank_rows.size() > 0 && bank_rows.dim() != g.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "bank dim differs from gallery dim");
    }
    MemoryBank bank(std::max<std::size_t>(bank_rows.size(), 1), g.dim());
    if (bank_rows.size() > 0) bank.push_batch(bank_rows);
    s = infer_simi_cent(s, bank, g);
  }
  const RetrievalScores scores = retrieval_eval(s, labels);

  std::ostringstream csv;
  csv << "query_id,rank,gallery_id,score\n";
  const std::size_t top = std::min<std::size_t>(10, g.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto order = rank_row(s, i);
    for (std::size_t r = 0; r < top; ++r) {
      csv << id_of(q, i) << ',' << (r + 1) << ',' << id_of(g, order[r]) << ','
          << json(s.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(order[r]))).dump() << '\n';
    }
  }

  json doc = envelope("retrieve", config);
  doc["retrieval"] = to_json(scores);
  const fs::path out = config.out_dir;
  write_text(out / "retrieval.json", dump_json(doc));
  write_text(out / "ranked.csv", csv.str());
  return doc;
}

json cmd_probe(const RunConfig& config) {
  EmbeddingSet texts = load_role(config.text_path, Modality::Query, "text_path");
  const RelevanceLabels labels = pseudo_positive_probe(texts, config.probe_threshold);
  json doc = envelope("probe", config);
  doc["labels"] = to_json(labels);
  write_text(fs::path(config.out_dir) / "labels.json", dump_json(doc));
  return doc;
}

json cmd_simulate(const RunConfig& config) {
  const SynthData synth = synth_generate(config.synth);
  const fs::path out = config.out_dir;
  write_embeddings(out / "queries.emb", synth.data.queries);
  write_embeddings(out / "galleries.emb", synth.data.galleries);
  json doc = envelope("simulate", config);
  doc["planted"] = synth.planted;
  doc["files"] = {"queries.emb", "galleries.emb"};
  write_text(out / "simulate.json", dump_json(doc));
  return doc;
}

}  // namespace hublab
