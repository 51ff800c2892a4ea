#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "hublab/config.hpp"

namespace hublab {

// Each command reads its inputs from the config, writes its artifacts under
// config.out_dir and returns the main JSON document it wrote. Every JSON
// document carries "format_version", "command" and the resolved "config".

/// report.json + histogram.csv for query_path x gallery_path at metrics.k.
/// labels_path (optional) adds good/bad splits.
nlohmann::json cmd_analyze(const RunConfig& config);

/// Trains on query_path/gallery_path, or on synth_generate(config.synth) when
/// both are empty. Writes out_dir/run-<digest>/ with resolved_config.json,
/// loss.csv, report_before.json, report_after.json, queries.emb and
/// galleries.emb. Refuses to touch an existing run directory (IoError).
/// Returns {"run_dir": ...} plus the after-report.
nlohmann::json cmd_train(const RunConfig& config);

/// retrieval.json + ranked.csv (top 10 per query). Relevance comes from
/// labels_path, else from sidecar class labels, else the diagonal.
nlohmann::json cmd_retrieve(const RunConfig& config);

/// labels.json: the symmetric pseudo-positive pairs of text_path.
nlohmann::json cmd_probe(const RunConfig& config);

/// queries.emb, galleries.emb (with sidecars) and simulate.json.
nlohmann::json cmd_simulate(const RunConfig& config);

/// Directory cmd_train writes for this config.
std::filesystem::path run_directory(const RunConfig& config);

}  // namespace hublab
