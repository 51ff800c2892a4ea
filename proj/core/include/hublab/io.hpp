#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hublab/embedding.hpp"
#include "hublab/hubness.hpp"
#include "hublab/memory_bank.hpp"
#include "hublab/retrieval.hpp"
#include "hublab/trainer.hpp"

namespace hublab {

inline constexpr std::uint32_t kEmbeddingFileVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 20;
inline constexpr int kReportFormatVersion = 1;

/// EMB1 layout: "EMB1", u32 version, u32 n, u32 d, u8 modality, 3 zero bytes,
/// then n*d little-endian float32 values row-major. Values are narrowed to
/// float32 on write. ids/labels go to "<stem>.meta.json" when present.
std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& e);
/// Throws FormatError on a bad magic, version, reserved bytes, modality or length.
EmbeddingSet decode_embeddings(const std::vector<std::uint8_t>& bytes);

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& e);
/// Reads the sidecar too if it exists. n may be 0 (empty bank rings).
EmbeddingSet read_embeddings(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// `<prefix>.query.emb`, `<prefix>.gallery.emb` (oldest first) and `<prefix>.bank.json`.
void save_bank(const MemoryBank& bank, const std::filesystem::path& prefix);
MemoryBank load_bank(const std::filesystem::path& prefix);

nlohmann::json to_json(const HubnessReport& r);
nlohmann::json to_json(const RetrievalScores& r);
nlohmann::json to_json(const RelevanceLabels& labels);
/// Accepts {"n_queries", "n_gallery", "pairs": [[i, j], ...], "source"?}.
RelevanceLabels relevance_from_json(const nlohmann::json& j);

/// occurrence,items[,good,bad] rows for c = 0..max N_k.
std::string histogram_csv(const HubnessReport& r);
std::string loss_csv(const std::vector<TrainStep>& curve);

std::string read_text(const std::filesystem::path& path);
/// Writes bytes exactly; creates parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
/// Pretty-printed with a trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace hublab
