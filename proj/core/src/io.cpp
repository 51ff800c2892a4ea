#include "hublab/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hublab/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hublab {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(b)]) << (8 * b);
  return v;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

const char* source_name(LabelSource s) { return s == LabelSource::GroundTruth ? "ground-truth" : "pseudo-positive"; }

}  // namespace

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& e) {
  const auto n = static_cast<std::uint64_t>(e.data.rows());
  const auto d = static_cast<std::uint64_t>(e.data.cols());
  if (n > 0xFFFFFFFFull || d > 0xFFFFFFFFull) throw Error(ErrorCode::FormatError, "shape exceeds u32");
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + 4 * n * d);
  out.insert(out.end(), {'E', 'M', 'B', '1'});
  put_u32(out, kEmbeddingFileVersion);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(d));
  out.push_back(static_cast<std::uint8_t>(e.modality));
  out.insert(out.end(), {0, 0, 0});
  for (Eigen::Index r = 0; r < e.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.data.cols(); ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(e.data(r, c))));
    }
  }
  return out;
}

EmbeddingSet decode_embeddings(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kEmbeddingHeaderBytes) throw Error(ErrorCode::FormatError, "file shorter than the EMB1 header");
  if (std::memcmp(bytes.data(), "EMB1", 4) != 0) throw Error(ErrorCode::FormatError, "bad magic");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kEmbeddingFileVersion) throw Error(ErrorCode::FormatError, "unsupported version " + std::to_string(version));
  const std::uint64_t n = get_u32(bytes, 8);
  const std::uint64_t d = get_u32(bytes, 12);
  const std::uint8_t modality = bytes[16];
  if (modality > 1) throw Error(ErrorCode::FormatError, "modality byte must be 0 or 1");
  if (bytes[17] != 0 || bytes[18] != 0 || bytes[19] != 0) throw Error(ErrorCode::FormatError, "reserved bytes must be zero");
  if (bytes.size() != kEmbeddingHeaderBytes + 4 * n * d) {
    throw Error(ErrorCode::FormatError, "length " + std::to_string(bytes.size()) + " != 20 + 4 n d");
  }
  EmbeddingSet e;
  e.modality = static_cast<Modality>(modality);
  e.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::size_t at = kEmbeddingHeaderBytes;
  for (Eigen::Index r = 0; r < e.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.data.cols(); ++c) {
      e.data(r, c) = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
      at += 4;
    }
  }
  return e;
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p.replace_extension(".meta.json");
  return p;
}

void write_embeddings(const fs::path& path, const EmbeddingSet& e) {
  write_bytes(path, encode_embeddings(e));
  if (!e.ids.empty() || !e.labels.empty()) {
    json meta = json::object();
    meta["ids"] = e.ids;
    meta["labels"] = e.labels;
    write_text(sidecar_path(path), dump_json(meta));
  }
}

EmbeddingSet read_embeddings(const fs::path& path) {
  EmbeddingSet e = decode_embeddings(read_bytes(path));
  const fs::path meta_path = sidecar_path(path);
  if (fs::exists(meta_path)) {
    json meta;
    try {
      meta = json::parse(read_text(meta_path));
      if (meta.contains("ids")) e.ids = meta.at("ids").get<std::vector<std::string>>();
      if (meta.contains("labels")) e.labels = meta.at("labels").get<std::vector<std::int64_t>>();
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::FormatError, "bad sidecar " + meta_path.string() + ": " + ex.what());
    }
    const auto n = e.size();
    if ((!e.ids.empty() && e.ids.size() != n) || (!e.labels.empty() && e.labels.size() != n)) {
      throw Error(ErrorCode::FormatError, "sidecar length does not match the embedding count");
    }
  }
  return e;
}

void save_bank(const MemoryBank& bank, const fs::path& prefix) {
  for (Modality m : {Modality::Query, Modality::Gallery}) {
    EmbeddingSet e;
    e.data = bank.contents(m);
    e.modality = m;
    write_embeddings(prefix.string() + (m == Modality::Query ? ".query.emb" : ".gallery.emb"), e);
  }
  json meta = {{"format_version", kReportFormatVersion}, {"capacity", bank.capacity()}, {"dim", bank.dim()}};
  write_text(prefix.string() + ".bank.json", dump_json(meta));
}

MemoryBank load_bank(const fs::path& prefix) {
  std::size_t capacity = 0;
  std::size_t dim = 0;
  try {
    const json meta = json::parse(read_text(prefix.string() + ".bank.json"));
    capacity = meta.at("capacity").get<std::size_t>();
    dim = meta.at("dim").get<std::size_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::FormatError, std::string("bad bank manifest: ") + ex.what());
  }
  MemoryBank bank(capacity, dim);
  for (Modality m : {Modality::Query, Modality::Gallery}) {
    EmbeddingSet e = read_embeddings(prefix.string() + (m == Modality::Query ? ".query.emb" : ".gallery.emb"));
    e.modality = m;
    if (e.size() > 0) bank.push_batch(e);
  }
  return bank;
}

json to_json(const HubnessReport& r) {
  json j = json::object();
  j["k"] = r.params.k;
  j["hub_size_factor"] = r.params.hub_size_factor;
  j["atkinson_epsilon"] = r.params.atkinson_epsilon;
  j["n_queries"] = r.n_queries;
  j["n_gallery"] = r.n_gallery;
  j["skew"] = r.skew;
  j["skew_degenerate"] = r.skew_degenerate;
  j["trunc"] = r.trunc;
  j["trunc_degenerate"] = r.trunc_degenerate;
  j["atkinson"] = r.atkinson;
  j["robin"] = r.robin;
  j["anti"] = r.anti;
  j["hub"] = r.hub;
  j["histogram"] = r.histogram;
  if (r.good_bad) {
    j["good_histogram"] = count_histogram(r.good_bad->good);
    j["bad_histogram"] = count_histogram(r.good_bad->bad);
  }
  return j;
}

json to_json(const RetrievalScores& r) {
  json j = json::object();
  json recalls = json::object();
  for (const auto& [k, v] : r.r_at) recalls["R@" + std::to_string(k)] = v;
  j["recall"] = recalls;
  j["median_rank"] = r.median_rank;
  j["mean_rank"] = r.mean_rank;
  j["rsum"] = r.rsum;
  j["map_at_r"] = r.map_at_r;
  j["r_precision"] = r.r_precision;
  return j;
}

json to_json(const RelevanceLabels& labels) {
  json pairs = json::array();
  for (const auto& [i, j] : labels.pairs()) pairs.push_back({i, j});
  return {{"source", source_name(labels.source())},
          {"n_queries", labels.n_queries()},
          {"n_gallery", labels.n_gallery()},
          {"pairs", pairs}};
}

RelevanceLabels relevance_from_json(const json& j) {
  try {
    const auto n = j.at("n_queries").get<std::size_t>();
    const auto m = j.at("n_gallery").get<std::size_t>();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& p : j.at("pairs")) {
      const auto a = p.at(0).get<std::size_t>();
      const auto b = p.at(1).get<std::size_t>();
      if (a >= n || b >= m) throw Error(ErrorCode::FormatError, "relevance pair out of range");
      pairs.emplace_back(a, b);
    }
    LabelSource source = LabelSource::GroundTruth;
    if (j.contains("source") && j.at("source").get<std::string>() == "pseudo-positive") source = LabelSource::PseudoPositive;
    return RelevanceLabels::from_pairs(n, m, pairs, source);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::FormatError, std::string("bad relevance document: ") + ex.what());
  }
}

std::string histogram_csv(const HubnessReport& r) {
  std::ostringstream os;
  std::vector<std::int64_t> good;
  std::vector<std::int64_t> bad;
  if (r.good_bad) {
    good = count_histogram(r.good_bad->good);
    bad = count_histogram(r.good_bad->bad);
    os << "occurrence,items,good,bad\n";
  } else {
    os << "occurrence,items\n";
  }
  const std::size_t rows = std::max({r.histogram.size(), good.size(), bad.size()});
  auto at = [](const std::vector<std::int64_t>& v, std::size_t c) { return c < v.size() ? v[c] : 0; };
  for (std::size_t c = 0; c < rows; ++c) {
    os << c << ',' << at(r.histogram, c);
    if (r.good_bad) os << ',' << at(good, c) << ',' << at(bad, c);
    os << '\n';
  }
  return os.str();
}

std::string loss_csv(const std::vector<TrainStep>& curve) {
  std::string out = "step,epoch,loss\n";
  for (const auto& s : curve) out += std::to_string(s.step) + ',' + std::to_string(s.epoch) + ',' + json(s.loss).dump() + '\n';
  return out;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace hublab
