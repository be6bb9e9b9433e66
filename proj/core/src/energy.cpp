#include "imcsim/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "imcsim/error.hpp"
#include "imcsim/formats.hpp"

namespace imcsim::energy {

namespace {

constexpr double kFemto = 1e-15;

}  // namespace

void EnergyFactors::validate() const {
  for (double f : {bitcell_mult_fj, adc_sample_fj, nmc_per_output_fj, reshape_per_word32_fj,
                   cima_load_per_word32_fj, gpu_tops_per_w}) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ParameterError("energy factors must be positive");
  }
}

std::string_view to_string(Device device) { return device == Device::kImc ? "imc" : "gpu"; }

MacCounts count_macs(const MvmLayerShape& layer, int batch) {
  const auto rows = static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(layer.positions());
  const std::uint64_t macs = rows * static_cast<std::uint64_t>(layer.patch()) * layer.out_units;
  return {macs, macs, macs};
}

double gpu_energy(std::uint64_t macs, const EnergyFactors& factors) {
  return 2.0 * static_cast<double>(macs) / (factors.gpu_tops_per_w * 1e12);
}

Breakdown imc_energy(const EnergyCounts& c, const EnergyFactors& f) {
  Breakdown b;
  b.bitcell = static_cast<double>(c.bitcell_ops) * f.bitcell_mult_fj * kFemto;
  b.adc = static_cast<double>(c.adc_samples) * f.adc_sample_fj * kFemto;
  b.nmc = static_cast<double>(c.nmc_outputs) * f.nmc_per_output_fj * kFemto;
  b.reshape = static_cast<double>(c.reshape_words) * f.reshape_per_word32_fj * kFemto;
  b.load = static_cast<double>(c.load_words) * f.cima_load_per_word32_fj * kFemto;
  return b;
}

void EnergyLedger::reprice(LedgerEntry& entry) const {
  if (entry.device == Device::kImc) {
    entry.joules = imc_energy(entry.counts, factors_);
  } else {
    entry.joules = Breakdown{};
    entry.joules.gpu = gpu_energy(entry.counts.macs, factors_);
  }
}

void EnergyLedger::add(const std::string& layer, MvmKind mvm, Device device, const EnergyCounts& counts) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const LedgerEntry& e) {
    return e.layer == layer && e.mvm == mvm && e.device == device;
  });
  if (it == entries_.end()) {
    entries_.push_back({layer, mvm, device, counts, {}});
    it = entries_.end() - 1;
  } else {
    it->counts += counts;
  }
  reprice(*it);
}

double EnergyLedger::total_joules() const {
  double total = 0.0;
  for (const auto& e : entries_) total += e.joules.total();
  return total;
}

double EnergyLedger::total_joules(Device device) const {
  double total = 0.0;
  for (const auto& e : entries_) {
    if (e.device == device) total += e.joules.total();
  }
  return total;
}

std::string EnergyLedger::csv() const {
  std::ostringstream out;
  out << "layer,mvm,device,macs,bitcell_ops,adc_samples,nmc_outputs,reshape_words,load_words,joules\n";
  char buf[64];
  for (const auto& e : entries_) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.joules.total());
    out << e.layer << ',' << to_string(e.mvm) << ',' << to_string(e.device) << ',' << e.counts.macs << ','
        << e.counts.bitcell_ops << ',' << e.counts.adc_samples << ',' << e.counts.nmc_outputs << ','
        << e.counts.reshape_words << ',' << e.counts.load_words << ',' << buf << '\n';
  }
  return out.str();
}

MvmMapping mvm_mapping(const MvmLayerShape& layer, MvmKind kind, int batch) {
  const std::int64_t rows = static_cast<std::int64_t>(batch) * layer.positions();
  const bool conv = layer.kind == LayerKind::kConv3x3;
  MvmMapping m;
  switch (kind) {
    case MvmKind::kForward:
      m.vectors = rows;
      m.inner_dim = layer.patch();
      m.outputs = layer.out_units;
      m.stored_bits = formats::kWeightBits;
      m.radix4_input = false;
      break;
    case MvmKind::kBackward:
      m.vectors = rows;
      m.inner_dim = conv ? 9 * layer.out_units : layer.out_units;
      m.outputs = layer.in_c;
      m.stored_bits = formats::kWeightBits;
      m.radix4_input = true;
      break;
    case MvmKind::kWeightUpdate:
      m.vectors = layer.out_units;
      m.inner_dim = static_cast<int>(rows);
      m.outputs = layer.patch();
      m.stored_bits = formats::kActivationBits;
      m.radix4_input = true;
      break;
  }
  return m;
}

EnergyCounts static_imc_counts(const MvmMapping& m, const CimaConfig& cfg, const StaticAssumptions& a) {
  cfg.validate();
  const int R = cfg.rows;
  const int per_group = cfg.cols / m.stored_bits;
  if (per_group == 0) throw CapacityError("stored operand does not fit the array columns");
  const std::uint64_t groups = static_cast<std::uint64_t>((m.outputs + per_group - 1) / per_group);
  const std::uint64_t columns = static_cast<std::uint64_t>(m.outputs) * m.stored_bits;
  const int in_bits = m.radix4_input ? formats::kRadix4Bits : formats::kActivationBits;
  const int serial = m.radix4_input ? formats::kRadix4Planes : formats::kActivationBits;
  const auto V = static_cast<std::uint64_t>(m.vectors);

  EnergyCounts c;
  c.macs = V * static_cast<std::uint64_t>(m.inner_dim) * static_cast<std::uint64_t>(m.outputs);
  std::uint64_t active_rows = 0;  // summed over the serial planes of one vector
  std::uint64_t cycles = 0;       // serial cycles per vector
  std::uint64_t reshape = 0;      // words streamed per vector per column pass
  for (int row0 = 0; row0 < m.inner_dim; row0 += R) {
    const int rows = std::min(R, m.inner_dim - row0);
    active_rows += m.radix4_input ? static_cast<std::uint64_t>(std::llround(a.gradient_density * rows))
                                  : static_cast<std::uint64_t>(rows) * serial;
    cycles += static_cast<std::uint64_t>(serial);
    reshape += words32(static_cast<std::uint64_t>(rows) * in_bits);
  }
  c.bitcell_ops = V * active_rows * columns;
  c.adc_samples = V * cycles * columns;
  c.nmc_outputs = cfg.nmc_per_conversion ? c.adc_samples : V * static_cast<std::uint64_t>(m.outputs);
  c.reshape_words = V * reshape * groups;
  for (std::uint64_t g = 0; g < groups; ++g) {
    const int width = std::min(per_group, m.outputs - static_cast<int>(g) * per_group);
    c.load_words += words32(static_cast<std::uint64_t>(m.inner_dim) * width * m.stored_bits);
  }
  return c;
}

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::kGpuAll:
      return "gpu-all";
    case Scenario::kImcForwardOnly:
      return "imc-forward-only";
    case Scenario::kImcFwdBwdDual:
      return "imc-fwd+bwd-dual";
    case Scenario::kImcAllVariable:
      return "imc-all-variable";
  }
  return "?";
}

Scenario parse_scenario(std::string_view name) {
  for (auto s : {Scenario::kGpuAll, Scenario::kImcForwardOnly, Scenario::kImcFwdBwdDual,
                 Scenario::kImcAllVariable}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown scenario \"" + std::string(name) +
                    "\" (expected gpu-all, imc-forward-only, imc-fwd+bwd-dual or imc-all-variable)");
}

LayerFilter parse_layer_filter(std::string_view name) {
  if (name == "all") return LayerFilter::kAll;
  if (name == "2-8" || name == "inner") return LayerFilter::kInner;
  throw ConfigError("unknown layer filter \"" + std::string(name) + "\" (expected all or 2-8)");
}

namespace {

bool on_imc(Scenario scenario, MvmKind kind) {
  switch (scenario) {
    case Scenario::kGpuAll:
      return false;
    case Scenario::kImcForwardOnly:
      return kind == MvmKind::kForward;
    case Scenario::kImcFwdBwdDual:
      return kind != MvmKind::kWeightUpdate;
    case Scenario::kImcAllVariable:
      return true;
  }
  return false;
}

}  // namespace

ScenarioReport scenario_report(const ModelSpec& model, int batch, Scenario scenario, LayerFilter filter,
                               const EnergyFactors& factors, const CimaConfig& cfg,
                               const StaticAssumptions& assumptions) {
  factors.validate();
  if (batch <= 0) throw ParameterError("batch size must be positive");
  const auto layers = mvm_layers(model);
  if (layers.empty()) throw ConfigError("model has no conv or dense layer");

  ScenarioReport report{EnergyLedger(factors)};
  std::uint64_t total_macs = 0;
  std::uint64_t edge_macs = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    const bool edge = i == 0 || i + 1 == layers.size();
    const auto macs = count_macs(layer, batch);
    const std::uint64_t step_macs = macs.forward + macs.backward + macs.weight_update;
    total_macs += step_macs;
    if (edge) {
      edge_macs += step_macs;
      report.first_last_joules += gpu_energy(step_macs, factors);
    }
    if (edge && filter == LayerFilter::kInner) continue;
    report.gpu_baseline_joules += gpu_energy(step_macs, factors);
    for (auto kind : kAllMvmKinds) {
      if (!edge && on_imc(scenario, kind)) {
        report.ledger.add(layer.label(), kind, Device::kImc,
                          static_imc_counts(mvm_mapping(layer, kind, batch), cfg, assumptions));
      } else {
        EnergyCounts c;
        c.macs = kind == MvmKind::kForward ? macs.forward
                 : kind == MvmKind::kBackward ? macs.backward
                                              : macs.weight_update;
        report.ledger.add(layer.label(), kind, Device::kGpu, c);
      }
    }
  }
  report.total_joules = report.ledger.total_joules();
  // gpu-all is its own baseline; avoid a last-bit difference from summation order.
  if (scenario == Scenario::kGpuAll) report.gpu_baseline_joules = report.total_joules;
  report.ratio = report.gpu_baseline_joules / report.total_joules;
  report.first_last_mac_share = static_cast<double>(edge_macs) / static_cast<double>(total_macs);
  return report;
}

}  // namespace imcsim::energy
