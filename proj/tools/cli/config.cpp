#include "config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "imcsim/error.hpp"

namespace imcsim::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  require_object(j, path);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(join(path, key) + ": unknown key");
  }
}

double get_number(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key) + ": expected a number");
  return v.get<double>();
}

std::int64_t get_int(const json& j, const std::string& path, const char* key, std::int64_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v.get<std::int64_t>();
}

int get_count(const json& j, const std::string& path, const char* key, int fallback, int min) {
  const auto v = get_int(j, path, key, fallback);
  if (v < min || v > 1'000'000'000) {
    throw ConfigError(join(path, key) + ": must be an integer >= " + std::to_string(min));
  }
  return static_cast<int>(v);
}

std::uint64_t get_seed(const json& j, const std::string& path, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(join(path, key) + ": expected a non-negative integer");
}

std::string get_string(const json& j, const std::string& path, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key) + ": expected true or false");
  return v.get<bool>();
}

/// Rethrow library parse errors with the field path in front.
template <typename F>
auto with_path(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

std::array<Route, 3> parse_routing(const json& j, const std::string& path) {
  check_keys(j, path, {"forward", "backward", "weight_update"});
  std::array<Route, 3> r{Route::kFloat, Route::kFloat, Route::kFloat};
  for (auto kind : kAllMvmKinds) {
    const std::string key(to_string(kind));
    const auto name = get_string(j, path, key.c_str(), "float");
    r[static_cast<std::size_t>(kind)] = with_path(join(path, key), [&] { return parse_route(name); });
  }
  return r;
}

json routing_to_json(const std::array<Route, 3>& r) {
  json j;
  for (auto kind : kAllMvmKinds) j[std::string(to_string(kind))] = std::string(to_string(r[static_cast<std::size_t>(kind)]));
  return j;
}

struct VrefFields {
  std::string mode = "variable";
  double vp = 0.8;
  double vp_high = 0.8;
};

double parse_voltage(const json& j, const std::string& path, const char* key, double fallback,
                     const CimaConfig& cima) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "v_prec") return vref::v_prec(cima);
  if (!v.is_number()) throw ConfigError(join(path, key) + ": expected a voltage or \"v_prec\"");
  const double volts = v.get<double>();
  if (!(volts > 0.0)) throw ConfigError(join(path, key) + ": must be positive");
  return volts;
}

VrefFields read_vref_fields(const json& j, const std::string& path, VrefFields base, const CimaConfig& cima) {
  base.mode = get_string(j, path, "mode", base.mode);
  base.vp = parse_voltage(j, path, "vp", base.vp, cima);
  base.vp_high = parse_voltage(j, path, "vp_high", base.vp_high, cima);
  return base;
}

vref::VrefPolicy to_policy(const VrefFields& f, const std::string& path) {
  const auto mode = with_path(join(path, "mode"), [&] { return vref::parse_mode(f.mode); });
  switch (mode) {
    case vref::Mode::kFixed:
      return vref::VrefPolicy::fixed(f.vp);
    case vref::Mode::kVariable:
      return vref::VrefPolicy::variable(f.vp);
    case vref::Mode::kDual:
      return vref::VrefPolicy::dual(f.vp_high);
  }
  return {};
}

json policy_to_json(const vref::VrefPolicy& p) {
  json j;
  j["mode"] = std::string(vref::to_string(p.mode));
  j[p.mode == vref::Mode::kDual ? "vp_high" : "vp"] = p.vp;
  return j;
}

}  // namespace

ModelSpec parse_model(const json& node) {
  if (node.is_string()) {
    const auto name = node.get<std::string>();
    if (name == "desk") return desk_model();
    if (name == "vgg-lite") return vgg_lite();
    throw ConfigError("model: unknown preset \"" + name + "\" (expected desk or vgg-lite)");
  }
  check_keys(node, "model", {"name", "input", "layers"});
  ModelSpec m;
  m.name = get_string(node, "model", "name", "custom");
  if (node.contains("input")) {
    const auto& in = node.at("input");
    if (!in.is_array() || in.size() != 3 || !in[0].is_number_integer() || !in[1].is_number_integer() ||
        !in[2].is_number_integer()) {
      throw ConfigError("model.input: expected [height, width, channels]");
    }
    m.in_h = in[0].get<int>();
    m.in_w = in[1].get<int>();
    m.in_c = in[2].get<int>();
    if (m.in_h <= 0 || m.in_w <= 0 || m.in_c <= 0) throw ConfigError("model.input: dimensions must be positive");
  }
  if (!node.contains("layers") || !node.at("layers").is_array() || node.at("layers").empty()) {
    throw ConfigError("model.layers: expected a non-empty array");
  }
  std::size_t i = 0;
  for (const auto& l : node.at("layers")) {
    const std::string path = "model.layers[" + std::to_string(i++) + "]";
    check_keys(l, path, {"kind", "units", "routing"});
    if (!l.contains("kind")) throw ConfigError(path + ".kind: missing");
    LayerSpec spec;
    const auto kind = get_string(l, path, "kind", "");
    spec.kind = with_path(join(path, "kind"), [&] { return parse_layer_kind(kind); });
    if (spec.is_mvm()) {
      spec.units = get_count(l, path, "units", 0, 1);
    } else if (l.contains("units")) {
      throw ConfigError(path + ".units: only conv3x3 and dense layers take units");
    }
    if (l.contains("routing")) {
      if (!spec.is_mvm()) throw ConfigError(path + ".routing: only conv3x3 and dense layers are routed");
      spec.routing = parse_routing(l.at("routing"), join(path, "routing"));
    }
    m.layers.push_back(spec);
  }
  with_path("model", [&] { return mvm_layers(m); });
  return m;
}

json model_to_json(const ModelSpec& model) {
  json j;
  j["name"] = model.name;
  j["input"] = {model.in_h, model.in_w, model.in_c};
  j["layers"] = json::array();
  for (const auto& l : model.layers) {
    json lj;
    lj["kind"] = std::string(to_string(l.kind));
    if (l.is_mvm()) {
      lj["units"] = l.units;
      lj["routing"] = routing_to_json(l.routing);
    }
    j["layers"].push_back(lj);
  }
  return j;
}

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc, "", {"model", "dataset", "batch_size", "epochs", "seed", "learning_rate", "momentum",
                       "weight_decay", "lr_schedule", "alpha_init", "routing", "vref", "adc", "array", "energy",
                       "output_dir"});
  ExperimentConfig c;
  auto& t = c.train;

  if (doc.contains("array")) {
    const auto& a = doc.at("array");
    check_keys(a, "array", {"rows", "cols", "adc_bits", "v_dd"});
    t.cima.rows = get_count(a, "array", "rows", t.cima.rows, 1);
    t.cima.cols = get_count(a, "array", "cols", t.cima.cols, 1);
    t.cima.adc_bits = get_count(a, "array", "adc_bits", t.cima.adc_bits, 1);
    t.cima.v_dd = get_number(a, "array", "v_dd", t.cima.v_dd);
  }
  if (doc.contains("adc")) {
    const auto& a = doc.at("adc");
    check_keys(a, "adc", {"noise_sigma", "noise_seed"});
    t.cima.adc_noise_sigma = get_number(a, "adc", "noise_sigma", 0.0);
    if (t.cima.adc_noise_sigma < 0.0) throw ConfigError("adc.noise_sigma: must be non-negative");
    t.cima.noise_seed = get_seed(a, "adc", "noise_seed", 0);
  }
  with_path("array", [&] {
    t.cima.validate();
    return 0;
  });

  if (doc.contains("model")) t.model = parse_model(doc.at("model"));
  if (doc.contains("routing")) {
    const auto r = parse_routing(doc.at("routing"), "routing");
    set_inner_routing(t.model, r[0], r[1], r[2]);
    // Per-layer routing in the model wins over the global setting.
    if (doc.contains("model") && doc.at("model").is_object()) {
      const auto& layers = doc.at("model").at("layers");
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].contains("routing")) {
          t.model.layers[i].routing = parse_routing(layers[i].at("routing"), "model.layers[" + std::to_string(i) + "].routing");
        }
      }
    }
  }
  with_path("routing", [&] {
    validate_routing(t.model);
    return 0;
  });

  if (doc.contains("dataset")) {
    const auto& d = doc.at("dataset");
    check_keys(d, "dataset", {"kind", "path", "subset", "train_samples", "test_samples", "side", "channels", "seed"});
    auto& ds = t.dataset;
    const auto kind = get_string(d, "dataset", "kind", std::string(train::to_string(ds.kind)));
    ds.kind = train::parse_dataset_kind(kind);
    ds.path = get_string(d, "dataset", "path", "");
    if (d.contains("subset")) {
      const auto& s = d.at("subset");
      check_keys(s, "dataset.subset", {"train_per_class", "test_per_class"});
      ds.train_per_class = get_count(s, "dataset.subset", "train_per_class", ds.train_per_class, 0);
      ds.test_per_class = get_count(s, "dataset.subset", "test_per_class", ds.test_per_class, 0);
    }
    ds.train_samples = get_count(d, "dataset", "train_samples", ds.train_samples, 1);
    ds.test_samples = get_count(d, "dataset", "test_samples", ds.test_samples, 1);
    ds.side = get_count(d, "dataset", "side", ds.side, 1);
    ds.channels = get_count(d, "dataset", "channels", ds.channels, 1);
    ds.seed = get_seed(d, "dataset", "seed", ds.seed);
    if (ds.kind == train::DatasetSpec::Kind::kCifar10 && ds.path.empty()) {
      throw ConfigError("dataset.path: required for cifar10");
    }
    if (ds.kind == train::DatasetSpec::Kind::kSyntheticCifar && (ds.train_per_class < 1 || ds.test_per_class < 1)) {
      throw ConfigError("dataset.subset: synthetic-cifar needs at least one image per class");
    }
  }

  t.batch_size = get_count(doc, "", "batch_size", t.batch_size, 1);
  t.epochs = get_count(doc, "", "epochs", t.epochs, 0);
  t.seed = get_seed(doc, "", "seed", t.seed);
  t.learning_rate = get_number(doc, "", "learning_rate", t.learning_rate);
  t.momentum = get_number(doc, "", "momentum", t.momentum);
  t.weight_decay = get_number(doc, "", "weight_decay", t.weight_decay);
  t.alpha_init = get_number(doc, "", "alpha_init", t.alpha_init);
  const auto schedule = get_string(doc, "", "lr_schedule", t.cosine_schedule ? "cosine" : "constant");
  if (schedule != "cosine" && schedule != "constant") {
    throw ConfigError("lr_schedule: expected cosine or constant, got \"" + schedule + "\"");
  }
  t.cosine_schedule = schedule == "cosine";

  if (doc.contains("vref")) {
    const auto& v = doc.at("vref");
    check_keys(v, "vref", {"mode", "vp", "vp_high", "forward", "backward", "weight_update"});
    const VrefFields base = read_vref_fields(v, "vref", {}, t.cima);
    for (auto kind : kAllMvmKinds) {
      const std::string key(to_string(kind));
      VrefFields f = base;
      std::string path = "vref";
      if (v.contains(key)) {
        path = "vref." + key;
        check_keys(v.at(key), path, {"mode", "vp", "vp_high"});
        f = read_vref_fields(v.at(key), path, base, t.cima);
      }
      t.vref[static_cast<std::size_t>(kind)] = to_policy(f, path);
    }
  }

  if (doc.contains("energy")) {
    const auto& e = doc.at("energy");
    check_keys(e, "energy", {"factors", "nmc_per_conversion"});
    t.cima.nmc_per_conversion = get_bool(e, "energy", "nmc_per_conversion", t.cima.nmc_per_conversion);
    if (e.contains("factors")) {
      const auto& f = e.at("factors");
      const std::string p = "energy.factors";
      check_keys(f, p, {"bitcell_mult_fj", "adc_sample_fj", "nmc_per_output_fj", "reshape_per_word32_fj",
                        "cima_load_per_word32_fj", "gpu_tops_per_w"});
      auto& ef = t.factors;
      ef.bitcell_mult_fj = get_number(f, p, "bitcell_mult_fj", ef.bitcell_mult_fj);
      ef.adc_sample_fj = get_number(f, p, "adc_sample_fj", ef.adc_sample_fj);
      ef.nmc_per_output_fj = get_number(f, p, "nmc_per_output_fj", ef.nmc_per_output_fj);
      ef.reshape_per_word32_fj = get_number(f, p, "reshape_per_word32_fj", ef.reshape_per_word32_fj);
      ef.cima_load_per_word32_fj = get_number(f, p, "cima_load_per_word32_fj", ef.cima_load_per_word32_fj);
      ef.gpu_tops_per_w = get_number(f, p, "gpu_tops_per_w", ef.gpu_tops_per_w);
      with_path(p, [&] {
        ef.validate();
        return 0;
      });
    }
  }

  c.output_dir = get_string(doc, "", "output_dir", c.output_dir);
  t.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& config) {
  const auto& t = config.train;
  json j;
  j["model"] = model_to_json(t.model);
  json d;
  d["kind"] = std::string(train::to_string(t.dataset.kind));
  switch (t.dataset.kind) {
    case train::DatasetSpec::Kind::kCifar10:
      d["path"] = t.dataset.path;
      d["subset"] = {{"train_per_class", t.dataset.train_per_class}, {"test_per_class", t.dataset.test_per_class}};
      break;
    case train::DatasetSpec::Kind::kSyntheticCifar:
      d["subset"] = {{"train_per_class", t.dataset.train_per_class}, {"test_per_class", t.dataset.test_per_class}};
      d["seed"] = t.dataset.seed;
      break;
    case train::DatasetSpec::Kind::kTwoClass:
      d["train_samples"] = t.dataset.train_samples;
      d["test_samples"] = t.dataset.test_samples;
      d["side"] = t.dataset.side;
      d["channels"] = t.dataset.channels;
      d["seed"] = t.dataset.seed;
      break;
  }
  j["dataset"] = d;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["seed"] = t.seed;
  j["learning_rate"] = t.learning_rate;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["lr_schedule"] = t.cosine_schedule ? "cosine" : "constant";
  j["alpha_init"] = t.alpha_init;
  json v;
  for (auto kind : kAllMvmKinds) v[std::string(to_string(kind))] = policy_to_json(t.vref[static_cast<std::size_t>(kind)]);
  j["vref"] = v;
  j["array"] = {{"rows", t.cima.rows}, {"cols", t.cima.cols}, {"adc_bits", t.cima.adc_bits}, {"v_dd", t.cima.v_dd}};
  j["adc"] = {{"noise_sigma", t.cima.adc_noise_sigma}, {"noise_seed", t.cima.noise_seed}};
  const auto& f = t.factors;
  j["energy"] = {{"nmc_per_conversion", t.cima.nmc_per_conversion},
                 {"factors",
                  {{"bitcell_mult_fj", f.bitcell_mult_fj},
                   {"adc_sample_fj", f.adc_sample_fj},
                   {"nmc_per_output_fj", f.nmc_per_output_fj},
                   {"reshape_per_word32_fj", f.reshape_per_word32_fj},
                   {"cima_load_per_word32_fj", f.cima_load_per_word32_fj},
                   {"gpu_tops_per_w", f.gpu_tops_per_w}}}};
  j["output_dir"] = config.output_dir;
  return j;
}

}  // namespace imcsim::cli
