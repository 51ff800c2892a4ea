#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hublab/hubness.hpp"
#include "hublab/synth.hpp"
#include "hublab/trainer.hpp"

namespace hublab {

enum class RetrievalMode { Simi, SimiCent };

/// Everything a command needs, flattened into one JSON object. `seed` drives
/// both the generator and the trainer.
struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  HubnessParams metrics;
  double probe_threshold = 0.8;
  RetrievalMode mode = RetrievalMode::Simi;
  std::string query_path;
  std::string gallery_path;
  std::string labels_path;
  /// Query-side vectors for Simi-Cent; empty means "use query_path".
  std::string bank_path;
  std::string text_path;
  /// Where artifacts go. Not part of the resolved config: moving the output
  /// does not change the run.
  std::string out_dir = "hublab-out";
};

/// Starts from defaults and applies every key in `doc`. Throws ConfigError on
/// unknown keys, wrong types or invalid enum strings.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Every field except out_dir, with defaults filled in. Keys are sorted.
nlohmann::json resolved_config(const RunConfig& c);

/// 16 hex digits of FNV-1a over the compact resolved config.
std::string config_digest(const RunConfig& c);

const char* to_string(RetrievalMode m);
RetrievalMode parse_mode(const std::string& s);

}  // namespace hublab
