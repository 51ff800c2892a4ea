#include "hublab/config.hpp"

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <type_traits>

#include "hublab/error.hpp"
#include "hublab/io.hpp"

using nlohmann::json;

namespace hublab {

const char* to_string(RetrievalMode m) { return m == RetrievalMode::Simi ? "simi" : "simi-cent"; }

RetrievalMode parse_mode(const std::string& s) {
  if (s == "simi") return RetrievalMode::Simi;
  if (s == "simi-cent") return RetrievalMode::SimiCent;
  throw Error(ErrorCode::ConfigError, "mode must be simi or simi-cent, got '" + s + "'");
}

namespace {

const char* grad_mode_name(GradMode m) { return m == GradMode::Exact ? "exact" : "paper"; }
const char* model_name(ModelKind m) { return m == ModelKind::EmbeddingTable ? "embedding-table" : "linear-projection"; }

// One entry per key: how to write it into the config and how to read it back.
struct Field {
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

// json::get converts loosely (2.5 -> 2, -1 -> huge); insist on the exact kind.
template <typename T>
T checked(const json& v) {
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_integral_v<T>) ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
  else ok = v.is_string();
  if (!ok) throw Error(ErrorCode::ConfigError, "wrong value type: " + v.dump());
  return v.get<T>();
}

template <typename T>
Field plain(T RunConfig::*outer) {
  return {[outer](RunConfig& c, const json& v) { c.*outer = checked<T>(v); },
          [outer](const RunConfig& c) { return json(c.*outer); }};
}

template <typename S, typename T>
Field nested(S RunConfig::*outer, T S::*inner) {
  return {[outer, inner](RunConfig& c, const json& v) { (c.*outer).*inner = checked<T>(v); },
          [outer, inner](const RunConfig& c) { return json((c.*outer).*inner); }};
}

Field toggle(bool LossToggles::*flag) {
  return {[flag](RunConfig& c, const json& v) { c.train.losses.*flag = checked<bool>(v); },
          [flag](const RunConfig& c) { return json(c.train.losses.*flag); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["kappa"] = nested(&RunConfig::train, &TrainConfig::kappa);
    t["beta"] = nested(&RunConfig::train, &TrainConfig::beta);
    t["epsilon_sinkhorn"] = nested(&RunConfig::train, &TrainConfig::epsilon_sinkhorn);
    t["temperature"] = nested(&RunConfig::train, &TrainConfig::temperature);
    t["k_neighbors"] = nested(&RunConfig::train, &TrainConfig::k_neighbors);
    t["bank_capacity"] = nested(&RunConfig::train, &TrainConfig::bank_capacity);
    t["learning_rate"] = nested(&RunConfig::train, &TrainConfig::learning_rate);
    t["epochs"] = nested(&RunConfig::train, &TrainConfig::epochs);
    t["batch_size"] = nested(&RunConfig::train, &TrainConfig::batch_size);
    t["normalize_weights"] = nested(&RunConfig::train, &TrainConfig::normalize_weights);
    t["neighbors_from_bank"] = nested(&RunConfig::train, &TrainConfig::neighbors_from_bank);
    t["kl_symmetric"] = nested(&RunConfig::train, &TrainConfig::kl_symmetric);
    t["sinkhorn_tol"] = nested(&RunConfig::train, &TrainConfig::sinkhorn_tol);
    t["sinkhorn_max_iter"] = nested(&RunConfig::train, &TrainConfig::sinkhorn_max_iter);
    t["use_wti"] = toggle(&LossToggles::wti);
    t["use_nbi"] = toggle(&LossToggles::nbi);
    t["use_opt"] = toggle(&LossToggles::opt);
    t["use_kl"] = toggle(&LossToggles::kl);
    t["seed"] = {[](RunConfig& c, const json& v) {
                   c.train.seed = checked<std::uint64_t>(v);
                   c.synth.seed = c.train.seed;
                 },
                 [](const RunConfig& c) { return json(c.train.seed); }};
    t["grad_mode"] = {[](RunConfig& c, const json& v) {
                        const auto s = checked<std::string>(v);
                        if (s == "exact") c.train.grad_mode = GradMode::Exact;
                        else if (s == "paper") c.train.grad_mode = GradMode::Paper;
                        else throw Error(ErrorCode::ConfigError, "grad_mode must be exact or paper");
                      },
                      [](const RunConfig& c) { return json(grad_mode_name(c.train.grad_mode)); }};
    t["model"] = {[](RunConfig& c, const json& v) {
                    const auto s = checked<std::string>(v);
                    if (s == "embedding-table") c.train.model = ModelKind::EmbeddingTable;
                    else if (s == "linear-projection") c.train.model = ModelKind::LinearProjection;
                    else throw Error(ErrorCode::ConfigError, "model must be embedding-table or linear-projection");
                  },
                  [](const RunConfig& c) { return json(model_name(c.train.model)); }};
    t["n_pairs"] = nested(&RunConfig::synth, &SynthConfig::n_pairs);
    t["dim"] = nested(&RunConfig::synth, &SynthConfig::dim);
    t["hub_fraction"] = nested(&RunConfig::synth, &SynthConfig::hub_fraction);
    t["contraction"] = nested(&RunConfig::synth, &SynthConfig::contraction);
    t["noise"] = nested(&RunConfig::synth, &SynthConfig::noise);
    t["anisotropy"] = nested(&RunConfig::synth, &SynthConfig::anisotropy);
    t["k"] = nested(&RunConfig::metrics, &HubnessParams::k);
    t["hub_size_factor"] = nested(&RunConfig::metrics, &HubnessParams::hub_size_factor);
    t["atkinson_epsilon"] = nested(&RunConfig::metrics, &HubnessParams::atkinson_epsilon);
    t["probe_threshold"] = plain(&RunConfig::probe_threshold);
    t["mode"] = {[](RunConfig& c, const json& v) { c.mode = parse_mode(checked<std::string>(v)); },
                 [](const RunConfig& c) { return json(to_string(c.mode)); }};
    t["query_path"] = plain(&RunConfig::query_path);
    t["gallery_path"] = plain(&RunConfig::gallery_path);
    t["labels_path"] = plain(&RunConfig::labels_path);
    t["bank_path"] = plain(&RunConfig::bank_path);
    t["text_path"] = plain(&RunConfig::text_path);
    t["out_dir"] = {[](RunConfig& c, const json& v) { c.out_dir = checked<std::string>(v); }, nullptr};
    return t;
  }();
  return table;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : doc.items()) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    if (value.is_object() || value.is_array() || value.is_null()) {
      throw Error(ErrorCode::ConfigError, "config key '" + key + "' must be a scalar");
    }
    try {
      it->second.set(c, value);
    } catch (const Error& ex) {
      throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + ex.what());
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + ex.what());
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::ConfigError, "cannot parse " + path.string() + ": " + ex.what());
  }
  return parse_config(doc);
}

json resolved_config(const RunConfig& c) {
  json j = json::object();
  for (const auto& [key, field] : fields()) {
    if (field.get) j[key] = field.get(c);
  }
  return j;
}

std::string config_digest(const RunConfig& c) {
  const std::string text = resolved_config(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hublab
