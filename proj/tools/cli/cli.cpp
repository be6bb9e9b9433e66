#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "imcsim/energy.hpp"
#include "imcsim/error.hpp"
#include "imcsim/imc_array.hpp"
#include "imcsim/rng.hpp"
#include "imcsim/train.hpp"

#include <unistd.h>

namespace imcsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMaxCheckDim = 16 * 2304;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

int thread_count(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("IMC_SIM_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw ConfigError("IMC_SIM_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return 1;
}

struct GlobalOptions {
  std::string config;
  std::string output;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

ExperimentConfig resolve(const GlobalOptions& g, bool required) {
  ExperimentConfig c;
  if (!g.config.empty()) {
    c = load_config(g.config);
  } else if (required) {
    throw ConfigError("--config is required for this command");
  }
  if (g.seed_set) c.train.seed = g.seed;
  if (!g.output.empty()) c.output_dir = g.output;
  c.train.threads = thread_count(g.threads);
  return c;
}

// ---------------------------------------------------------------------------

int cmd_train(const GlobalOptions& g, std::ostream& out) {
  const auto config = resolve(g, true);
  const fs::path dir = config.output_dir;
  ensure_dir(dir);
  auto result = train::train_run(config.train, [&](const train::EpochMetrics& m) {
    out << "epoch " << m.epoch << " train_loss=" << short_fmt(m.train_loss) << " train_acc=" << short_fmt(m.train_acc)
        << " test_acc=" << short_fmt(m.test_acc) << '\n'
        << std::flush;
  });
  write_file_atomic(dir / "metrics.csv", train::metrics_csv(result.metrics));
  write_file_atomic(dir / "vref_usage.csv", vref::usage_csv(result.usage));
  write_file_atomic(dir / "energy.csv", result.ledger.csv());
  write_file_atomic(dir / "run.json", to_json(config).dump(2) + "\n");
  const fs::path tmp = dir / ".model.bin.tmp";
  result.network->save(tmp.string());
  std::error_code ec;
  fs::rename(tmp, dir / "model.bin", ec);
  if (ec) throw IoError("cannot write " + (dir / "model.bin").string());
  out << "energy_joules=" << fmt(result.ledger.total_joules()) << '\n';
  out << "wrote " << dir.string() << '\n';
  return kExitOk;
}

struct EnergyOptions {
  std::string scenario = "imc-all-variable";
  std::string layers = "all";
  std::string model;
  int batch = 0;
};

int cmd_energy(const GlobalOptions& g, const EnergyOptions& e, std::ostream& out) {
  auto config = resolve(g, false);
  const auto scenario = energy::parse_scenario(e.scenario);
  const auto filter = energy::parse_layer_filter(e.layers);
  if (!e.model.empty()) {
    config.train.model = parse_model(json(e.model));
  } else if (g.config.empty()) {
    config.train.model = vgg_lite();
  }
  int batch = e.batch;
  if (batch == 0) batch = g.config.empty() ? 128 : config.train.batch_size;
  if (batch < 1) throw ConfigError("--batch must be positive");
  const auto report =
      energy::scenario_report(config.train.model, batch, scenario, filter, config.train.factors, config.train.cima);
  const std::string csv = report.ledger.csv();
  if (!g.output.empty()) {
    ensure_dir(g.output);
    write_file_atomic(fs::path(g.output) / "energy_report.csv", csv);
  } else {
    out << csv;
  }
  energy::Breakdown sum;
  for (const auto& entry : report.ledger.entries()) {
    sum.bitcell += entry.joules.bitcell;
    sum.adc += entry.joules.adc;
    sum.nmc += entry.joules.nmc;
    sum.reshape += entry.joules.reshape;
    sum.load += entry.joules.load;
    sum.gpu += entry.joules.gpu;
  }
  out << "scenario=" << energy::to_string(scenario) << " layers=" << e.layers << " batch=" << batch << '\n';
  out << "total_joules=" << fmt(report.total_joules) << '\n';
  out << "gpu_all_joules=" << fmt(report.gpu_baseline_joules) << '\n';
  out << "breakdown_joules bitcell=" << fmt(sum.bitcell) << " adc=" << fmt(sum.adc) << " nmc=" << fmt(sum.nmc)
      << " reshape=" << fmt(sum.reshape) << " load=" << fmt(sum.load) << " gpu=" << fmt(sum.gpu) << '\n';
  out << "first_last_mac_share=" << fmt(report.first_last_mac_share) << '\n';
  out << "first_last_gpu_joules=" << fmt(report.first_last_joules) << '\n';
  out << "ratio_vs_gpu=" << fmt(report.ratio) << '\n';
  return kExitOk;
}

int cmd_mvm_check(const GlobalOptions& g, MvmCheckOptions o, std::ostream& out) {
  if (!g.config.empty()) {
    const auto c = load_config(g.config);
    o.cima = c.train.cima;
  }
  if (g.seed_set) o.seed = g.seed;
  o.threads = thread_count(g.threads);
  const auto rows = mvm_check(o);
  for (const auto& r : rows) {
    out << "policy=" << r.policy << " path=" << r.path << " dim=" << o.dim << " trials=" << r.trials
        << " max_abs_error=" << fmt(r.max_abs_error) << " guaranteed_trials=" << r.guaranteed_trials
        << " guaranteed_max_error=" << fmt(r.guaranteed_max_error) << " bound_violations=" << r.bound_violations
        << '\n';
  }
  const bool ok = mvm_check_passed(rows);
  out << "result=" << (ok ? "pass" : "fail") << '\n';
  return ok ? kExitOk : kExitCheckFailed;
}

struct SparsityOptions {
  std::string run_dir;
  std::string checkpoint;
  std::string fixture;
  int batch = 0;
};

vref::SparsityHistogram fixture_histogram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fixture " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "layer" && key != "vector_length" && key != "gradscale" && key != "values") {
      throw ConfigError(path + ": unknown key " + key);
    }
  }
  if (!doc.contains("values") || !doc["values"].is_array()) throw ConfigError(path + ": values must be an array");
  if (!doc.contains("vector_length") || !doc["vector_length"].is_number_unsigned()) {
    throw ConfigError(path + ": vector_length must be a positive integer");
  }
  std::vector<double> values;
  for (const auto& v : doc["values"]) {
    if (!v.is_number()) throw ConfigError(path + ": values must be numbers");
    values.push_back(v.get<double>());
  }
  formats::GradScaleState state;
  if (doc.contains("gradscale")) {
    if (!doc["gradscale"].is_number() || !(doc["gradscale"].get<double>() > 0.0)) {
      throw ConfigError(path + ": gradscale must be positive");
    }
    state.scale = doc["gradscale"].get<double>();
  }
  const auto codes = formats::radix4_quantize(values, state);
  const auto length = doc["vector_length"].get<std::size_t>();
  try {
    return vref::sparsity_histogram(codes.values, length, doc.value("layer", std::string("fixture")));
  } catch (const InputError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int cmd_sparsity(const GlobalOptions& g, const SparsityOptions& s, std::ostream& out) {
  std::vector<vref::SparsityHistogram> hists;
  if (!s.fixture.empty()) {
    hists.push_back(fixture_histogram(s.fixture));
  } else {
    GlobalOptions gg = g;
    std::string checkpoint = s.checkpoint;
    if (!s.run_dir.empty()) {
      const fs::path run = s.run_dir;
      if (!fs::exists(run / "run.json")) throw IoError("missing run artifact " + (run / "run.json").string());
      if (!fs::exists(run / "model.bin")) throw IoError("missing run artifact " + (run / "model.bin").string());
      if (gg.config.empty()) gg.config = (run / "run.json").string();
      if (checkpoint.empty()) checkpoint = (run / "model.bin").string();
    }
    const auto config = resolve(gg, true);
    const auto data = train::load_datasets(config.train.dataset);
    train::Network net(config.train.model, config.train.seed, config.train.alpha_init);
    if (!checkpoint.empty()) {
      if (!fs::exists(checkpoint)) throw IoError("missing checkpoint " + checkpoint);
      net.load(checkpoint);
    }
    train::ExecContext ctx;
    ctx.cima = config.train.cima;
    ctx.vref = config.train.vref;
    ctx.threads = config.train.threads;
    const int batch = s.batch > 0 ? s.batch : config.train.batch_size;
    hists = train::gradient_sparsity(net, data.train, batch, ctx);
  }
  const std::string csv = vref::sparsity_csv(hists);
  if (!g.output.empty()) {
    ensure_dir(g.output);
    write_file_atomic(fs::path(g.output) / "sparsity.csv", csv);
  }
  out << csv;
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot replace " + path.string());
  }
}

std::vector<MvmCheckRow> mvm_check(const MvmCheckOptions& o) {
  if (o.dim < 1 || o.dim > kMaxCheckDim) {
    throw ConfigError("--dim must lie in [1, " + std::to_string(kMaxCheckDim) + "]");
  }
  if (o.trials < 1) throw ConfigError("--trials must be at least 1");
  if (o.outputs < 1) throw ConfigError("--outputs must be at least 1");
  if (!(o.vp > 0.0)) throw ConfigError("--vp must be positive");
  if (!(o.density >= 0.0 && o.density <= 1.0)) throw ConfigError("--density must lie in [0, 1]");
  std::vector<std::string> policies;
  if (o.policy == "all") {
    policies = {"variable", "fixed", "dual"};
  } else {
    try {
      (void)vref::parse_mode(o.policy);
    } catch (const ConfigError&) {
      throw ConfigError("--policy: expected variable, fixed, dual or all");
    }
    policies = {o.policy};
  }
  std::vector<std::string> paths;
  if (o.path == "both") {
    paths = {"forward", "radix4"};
  } else if (o.path == "forward" || o.path == "radix4") {
    paths = {o.path};
  } else {
    throw ConfigError("--path: expected forward, radix4 or both");
  }

  const auto& cfg = o.cima;
  const int R = cfg.rows;
  const int D = o.dim;
  const int N = o.outputs;
  const int tiles = (D + R - 1) / R;
  std::int64_t stored_weight_sum = 0;  // units of 1/2
  for (int j = 0; j < formats::kWeightBits; ++j) stored_weight_sum += formats::pm1_plane_weight_x2(j);

  std::vector<MvmCheckRow> rows;
  for (const auto& pname : policies) {
    const auto mode = vref::parse_mode(pname);
    const vref::VrefPolicy policy{mode, o.vp};
    for (const auto& path : paths) {
      const bool forward = path == "forward";
      Rng rng(o.seed * 0x9e3779b97f4a7c15ULL + (forward ? 1 : 2));
      MvmCheckRow row;
      row.policy = pname;
      row.path = path;
      row.trials = o.trials;
      for (int trial = 0; trial < o.trials; ++trial) {
        imc::IntMatrix m(D, N);
        for (auto& v : m.data) v = static_cast<std::int32_t>(rng.below(17)) - 8;
        std::vector<std::int32_t> x(static_cast<std::size_t>(D));
        if (forward) {
          for (auto& v : x) v = static_cast<std::int32_t>(rng.below(17));
        } else {
          for (auto& v : x) {
            if (rng.uniform() >= o.density) {
              v = 0;
              continue;
            }
            const int plane = static_cast<int>(rng.below(formats::kRadix4Planes));
            v = (rng.below(2) == 0 ? 1 : -1) * (1 << (2 * plane));
          }
        }
        const auto stored = imc::load_partitioned(m, formats::kWeightBits, cfg);
        imc::MvmOptions opts;
        opts.threads = o.threads;
        const auto fmt_in = forward ? imc::InputFormat::pm1(formats::kActivationBits) : imc::InputFormat::radix4();
        const auto result = imc::mvm_batch(fmt_in, x, 1, stored, policy, cfg, opts);
        const std::vector<std::int64_t> x64(x.begin(), x.end());
        const auto exact = imc::exact_mvm(x64, m);
        const double unit = forward ? 1.0 : 64.0;

        // Per-cycle exactness and the summed quantization bound.
        bool guaranteed = true;
        double bound = 0.0;
        const double denom = forward ? 4.0 : 128.0;
        for (int t = 0; t < tiles; ++t) {
          const int row0 = t * R;
          const int rows_t = std::min(R, D - row0);
          const int planes = fmt_in.serial_planes();
          for (int p = 0; p < planes; ++p) {
            int active = 0;
            std::int64_t in_weight = 0;
            if (forward) {
              active = rows_t;
              in_weight = formats::pm1_plane_weight_x2(p);
            } else {
              for (int r = 0; r < rows_t; ++r) {
                const auto v = x[static_cast<std::size_t>(row0 + r)];
                if (v != 0 && std::abs(v) == (1 << (2 * p))) ++active;
              }
              in_weight = std::int64_t{1} << (2 * p);
            }
            if (active == 0) continue;
            const auto refs = vref::select_vref(policy, active, cfg);
            if (!imc::exact_cycle(refs, active, cfg)) guaranteed = false;
            const double vp_counts = refs.vp * R / cfg.v_dd;
            if (active > vp_counts * (1.0 + 1e-9)) {
              bound = std::numeric_limits<double>::infinity();  // clipping: no bound
            } else {
              bound += static_cast<double>(in_weight * stored_weight_sum) * 2.0 * imc::code_step(refs, cfg) / denom;
            }
          }
        }
        double err = 0.0;
        for (int n = 0; n < N; ++n) {
          err = std::max(err, std::abs(result.values[static_cast<std::size_t>(n)] -
                                       static_cast<double>(exact[static_cast<std::size_t>(n)]) / unit));
        }
        row.max_abs_error = std::max(row.max_abs_error, err);
        if (guaranteed) {
          ++row.guaranteed_trials;
          row.guaranteed_max_error = std::max(row.guaranteed_max_error, err);
        }
        if (err > bound * (1.0 + 1e-12) + 1e-9) ++row.bound_violations;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

bool mvm_check_passed(const std::vector<MvmCheckRow>& rows) {
  for (const auto& r : rows) {
    if (r.guaranteed_max_error != 0.0 || r.bound_violations != 0) return false;
  }
  return true;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bit-accurate simulator of DNN training on capacitor-based in-memory computing", "imcsim"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--output", g.output, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads (default: IMC_SIM_THREADS or 1)")->check(CLI::PositiveNumber);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics, usage and energy CSVs");

  EnergyOptions eo;
  auto* energy_cmd = app.add_subcommand("energy", "Static energy report for one scenario");
  energy_cmd->add_option("--scenario", eo.scenario, "gpu-all | imc-forward-only | imc-fwd+bwd-dual | imc-all-variable");
  energy_cmd->add_option("--layers", eo.layers, "all | 2-8 (drop the first and last MVM layers)");
  energy_cmd->add_option("--model", eo.model, "Preset model when no config is given (vgg-lite | desk)");
  energy_cmd->add_option("--batch", eo.batch, "Batch size (default: config batch_size, or 128)");

  MvmCheckOptions co;
  auto* check_cmd = app.add_subcommand("mvm-check", "Randomized array MVMs against the exact integer product");
  check_cmd->add_option("--dim", co.dim, "Inner dimension D");
  check_cmd->add_option("--trials", co.trials, "Random trials per policy and path");
  check_cmd->add_option("--policy", co.policy, "variable | fixed | dual | all");
  check_cmd->add_option("--path", co.path, "forward | radix4 | both");
  check_cmd->add_option("--vp", co.vp, "Fixed V_Ref,p, variable maximum, or dual high reference (volts)");
  check_cmd->add_option("--density", co.density, "Fraction of nonzero radix-4 inputs");
  check_cmd->add_option("--outputs", co.outputs, "Matrix columns N");

  SparsityOptions so;
  auto* sparsity_cmd = app.add_subcommand("sparsity", "Mean active rows per exponent plane of backward gradients");
  sparsity_cmd->add_option("--run", so.run_dir, "Directory written by `train` (run.json + model.bin)");
  sparsity_cmd->add_option("--checkpoint", so.checkpoint, "Model checkpoint to load");
  sparsity_cmd->add_option("--fixture", so.fixture, "JSON gradient fixture instead of a model");
  sparsity_cmd->add_option("--batch", so.batch, "Images in the probe batch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (train_cmd->parsed()) return cmd_train(g, out);
    if (energy_cmd->parsed()) return cmd_energy(g, eo, out);
    if (check_cmd->parsed()) return cmd_mvm_check(g, co, out);
    if (sparsity_cmd->parsed()) return cmd_sparsity(g, so, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace imcsim::cli
