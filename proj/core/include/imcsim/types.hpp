#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace imcsim {

/// Physical parameters of one compute-in-memory array (CIMA).
struct CimaConfig {
  int rows = 2304;
  int cols = 256;
  int adc_bits = 8;
  double v_dd = 0.8;               // volts; full-scale column voltage
  double adc_noise_sigma = 0.0;    // volts, additive Gaussian at the ADC input
  std::uint64_t noise_seed = 0;
  // NMC energy is charged per ADC conversion by default; when false it is
  // charged once per final MVM output element instead.
  bool nmc_per_conversion = true;

  int max_code() const { return (1 << adc_bits) - 1; }
  double volts_per_count() const { return v_dd / rows; }
  /// Throws ParameterError on a non-physical configuration.
  void validate() const;
};

enum class MvmKind { kForward, kBackward, kWeightUpdate };

inline constexpr MvmKind kAllMvmKinds[] = {MvmKind::kForward, MvmKind::kBackward,
                                           MvmKind::kWeightUpdate};

std::string_view to_string(MvmKind kind);
/// Accepts "forward", "backward", "weight_update"; throws ConfigError otherwise.
MvmKind parse_mvm_kind(std::string_view name);

/// Raw operation counts feeding the energy model.
struct EnergyCounts {
  std::uint64_t macs = 0;
  std::uint64_t bitcell_ops = 0;
  std::uint64_t adc_samples = 0;
  std::uint64_t nmc_outputs = 0;
  std::uint64_t reshape_words = 0;
  std::uint64_t load_words = 0;

  EnergyCounts& operator+=(const EnergyCounts& other) {
    macs += other.macs;
    bitcell_ops += other.bitcell_ops;
    adc_samples += other.adc_samples;
    nmc_outputs += other.nmc_outputs;
    reshape_words += other.reshape_words;
    load_words += other.load_words;
    return *this;
  }
  friend EnergyCounts operator+(EnergyCounts a, const EnergyCounts& b) { return a += b; }
  friend bool operator==(const EnergyCounts&, const EnergyCounts&) = default;
};

/// Words of 32 bits needed to carry `bits` bits.
constexpr std::uint64_t words32(std::uint64_t bits) { return (bits + 31) / 32; }

}  // namespace imcsim
