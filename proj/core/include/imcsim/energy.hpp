#pragma once

// Energy accounting for training MVMs on a GPU baseline and on the IMC array.
// IMC energy is the sum of five per-event costs measured on silicon; GPU
// energy is 2 * MACs divided by the device's ops-per-joule.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "imcsim/model.hpp"
#include "imcsim/types.hpp"

namespace imcsim::energy {

struct EnergyFactors {
  double bitcell_mult_fj = 0.734;
  double adc_sample_fj = 346.0;
  double nmc_per_output_fj = 243.0;
  double reshape_per_word32_fj = 14.9;
  double cima_load_per_word32_fj = 7360.0;
  double gpu_tops_per_w = 0.116;

  /// Throws ParameterError unless every factor is positive.
  void validate() const;
};

enum class Device { kImc, kGpu };
std::string_view to_string(Device device);

struct Breakdown {
  double bitcell = 0.0;
  double adc = 0.0;
  double nmc = 0.0;
  double reshape = 0.0;
  double load = 0.0;
  double gpu = 0.0;

  double total() const { return bitcell + adc + nmc + reshape + load + gpu; }
};

struct MacCounts {
  std::uint64_t forward = 0;
  std::uint64_t backward = 0;
  std::uint64_t weight_update = 0;
};

/// B * M * N per MVM kind; convs count every output position as a row of B.
MacCounts count_macs(const MvmLayerShape& layer, int batch);

/// Joules for `macs` multiply-accumulates on the GPU baseline.
double gpu_energy(std::uint64_t macs, const EnergyFactors& factors);

Breakdown imc_energy(const EnergyCounts& counts, const EnergyFactors& factors);

struct LedgerEntry {
  std::string layer;
  MvmKind mvm = MvmKind::kForward;
  Device device = Device::kGpu;
  EnergyCounts counts;
  Breakdown joules;
};

/// Accumulates counts per (layer, MVM kind, device) and prices them.
class EnergyLedger {
 public:
  explicit EnergyLedger(EnergyFactors factors = {}) : factors_(factors) {}

  void add(const std::string& layer, MvmKind mvm, Device device, const EnergyCounts& counts);
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  const EnergyFactors& factors() const { return factors_; }
  double total_joules() const;
  double total_joules(Device device) const;

  /// CSV with header layer,mvm,device,macs,bitcell_ops,adc_samples,
  /// nmc_outputs,reshape_words,load_words,joules.
  std::string csv() const;

 private:
  void reprice(LedgerEntry& entry) const;

  EnergyFactors factors_;
  std::vector<LedgerEntry> entries_;
};

/// Input statistics assumed when counting IMC events without running data.
struct StaticAssumptions {
  /// Fraction of gradient elements that are nonzero after radix-4 quantization.
  double gradient_density = 1.0;
};

/// How one MVM kind of one layer is laid out on the array.
struct MvmMapping {
  std::int64_t vectors = 0;    // streamed input vectors
  int inner_dim = 0;           // rows of the stored matrix
  int outputs = 0;             // stored matrix columns (logical)
  int stored_bits = 0;         // +/-1 width of the stored operand
  bool radix4_input = false;   // streamed operand is a radix-4 gradient
};

/// Forward: weights stored (inner = patch), activations streamed.
/// Backward: transposed weights stored (inner = 9*C_out or N), gradients
/// streamed. Weight update: activations stored (inner = batch positions),
/// one gradient channel streamed per output.
MvmMapping mvm_mapping(const MvmLayerShape& layer, MvmKind kind, int batch);

/// Analytical counts for one mapped MVM, mirroring the simulator's counting:
/// every exponent plane is assumed to issue a cycle for radix-4 inputs.
EnergyCounts static_imc_counts(const MvmMapping& mapping, const CimaConfig& cfg,
                               const StaticAssumptions& assumptions = {});

enum class Scenario { kGpuAll, kImcForwardOnly, kImcFwdBwdDual, kImcAllVariable };
std::string_view to_string(Scenario scenario);
/// "gpu-all", "imc-forward-only", "imc-fwd+bwd-dual", "imc-all-variable".
Scenario parse_scenario(std::string_view name);

/// kAll prices every layer; kInner drops the first and last MVM layers
/// (which always run on the GPU) from both the scenario and the baseline.
enum class LayerFilter { kAll, kInner };
LayerFilter parse_layer_filter(std::string_view name);  // "all" | "2-8" | "inner"

struct ScenarioReport {
  EnergyLedger ledger;
  double total_joules = 0.0;
  double gpu_baseline_joules = 0.0;
  double ratio = 0.0;  // baseline / scenario
  double first_last_mac_share = 0.0;
  double first_last_joules = 0.0;
};

ScenarioReport scenario_report(const ModelSpec& model, int batch, Scenario scenario, LayerFilter filter,
                               const EnergyFactors& factors, const CimaConfig& cfg = {},
                               const StaticAssumptions& assumptions = {});

}  // namespace imcsim::energy
