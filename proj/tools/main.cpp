#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hublab/commands.hpp"
#include "hublab/config.hpp"
#include "hublab/error.hpp"
#include "hublab/io.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::size_t> k;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> query;
  std::optional<std::string> gallery;
  std::optional<std::string> labels;
  std::optional<std::string> bank;
  std::optional<std::string> text;
  std::optional<double> threshold;
};

// Command-line flags win over the config file. Going through the JSON keeps
// the same validation path for both sources.
hublab::RunConfig resolve(const Overrides& o) {
  nlohmann::json doc = nlohmann::json::object();
  if (!o.config_path.empty()) {
    try {
      doc = nlohmann::json::parse(hublab::read_text(o.config_path));
    } catch (const nlohmann::json::exception& ex) {
      throw hublab::Error(hublab::ErrorCode::ConfigError, "cannot parse " + o.config_path + ": " + ex.what());
    }
  }
  if (o.k) doc["k"] = *o.k;
  if (o.mode) doc["mode"] = *o.mode;
  if (o.seed) doc["seed"] = *o.seed;
  if (o.out) doc["out_dir"] = *o.out;
  if (o.query) doc["query_path"] = *o.query;
  if (o.gallery) doc["gallery_path"] = *o.gallery;
  if (o.labels) doc["labels_path"] = *o.labels;
  if (o.bank) doc["bank_path"] = *o.bank;
  if (o.text) doc["text_path"] = *o.text;
  if (o.threshold) doc["probe_threshold"] = *o.threshold;
  return hublab::parse_config(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hubness analysis and hub-aware training for cross-modal embeddings"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--k", o.k, "neighborhood size for hubness metrics");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--query", o.query, "query-side EMB1 file");
    sub->add_option("--gallery", o.gallery, "gallery-side EMB1 file");
    sub->add_option("--labels", o.labels, "relevance JSON");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "k-occurrence hubness report");
  common(analyze);
  inputs(analyze);
  CLI::App* train = app.add_subcommand("train", "train with the hub-aware objective");
  common(train);
  inputs(train);
  CLI::App* retrieve = app.add_subcommand("retrieve", "rank and score retrieval");
  common(retrieve);
  inputs(retrieve);
  retrieve->add_option("--mode", o.mode, "simi or simi-cent")->check(CLI::IsMember({"simi", "simi-cent"}));
  retrieve->add_option("--bank", o.bank, "query-side EMB1 file used as the Simi-Cent bank");
  CLI::App* probe = app.add_subcommand("probe", "intra-text pseudo-positive labels");
  common(probe);
  probe->add_option("--text", o.text, "text-side EMB1 file");
  probe->add_option("--threshold", o.threshold, "cosine threshold");
  CLI::App* simulate = app.add_subcommand("simulate", "write a planted-hub synthetic dataset");
  common(simulate);

  CLI11_PARSE(app, argc, argv);

  try {
    const hublab::RunConfig config = resolve(o);
    nlohmann::json result;
    if (analyze->parsed()) result = hublab::cmd_analyze(config);
    else if (train->parsed()) result = hublab::cmd_train(config);
    else if (retrieve->parsed()) result = hublab::cmd_retrieve(config);
    else if (probe->parsed()) result = hublab::cmd_probe(config);
    else result = hublab::cmd_simulate(config);
    std::cout << result.dump(2) << '\n';
  } catch (const hublab::Error& e) {
    std::cerr << "hublab: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "hublab: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
