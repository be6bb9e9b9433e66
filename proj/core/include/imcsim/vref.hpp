#pragma once

// ADC reference-voltage policies and their usage instrumentation.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imcsim/formats.hpp"
#include "imcsim/types.hpp"

namespace imcsim::vref {

enum class Mode { kFixed, kVariable, kDual };

std::string_view to_string(Mode mode);
/// "fixed", "variable" or "dual"; ConfigError naming the value otherwise.
Mode parse_mode(std::string_view name);

struct References {
  double vp = 0.0;
  double vn = 0.0;
};

/// Fixed(vp): one reference for every cycle.
/// Variable(vp_max): vp tracks the active-row voltage, floored at V_prec.
/// Dual(vp_high): V_prec when the active rows fit 255 codes, vp_high otherwise.
/// V_Ref,n is always 0.
struct VrefPolicy {
  Mode mode = Mode::kVariable;
  double vp = 0.8;

  static VrefPolicy fixed(double vp) { return {Mode::kFixed, vp}; }
  static VrefPolicy variable(double vp_max) { return {Mode::kVariable, vp_max}; }
  static VrefPolicy dual(double vp_high) { return {Mode::kDual, vp_high}; }
};

/// V_prec = V_Ref,pmax * 255 / R, the reference at which one ADC code spans
/// one row count. V_Ref,pmax is the full-scale column voltage v_dd.
double v_prec(const CimaConfig& cfg);

References select_vref(const VrefPolicy& policy, int n_active, const CimaConfig& cfg);

/// True when the selected reference is above V_prec (the "high" setting).
bool is_high(const References& refs, const CimaConfig& cfg);

/// Per-epoch, per-MVM-kind counts of input vectors that needed a high
/// reference on at least one cycle versus none.
class VrefUsageLog {
 public:
  struct Counts {
    std::uint64_t high = 0;
    std::uint64_t low = 0;
    std::uint64_t total() const { return high + low; }
  };

  void set_epoch(int epoch) { epoch_ = epoch; }
  int epoch() const { return epoch_; }
  void record(MvmKind kind, bool high, std::uint64_t vectors = 1);
  void merge(const VrefUsageLog& other);

  const std::map<std::pair<int, MvmKind>, Counts>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::uint64_t total_vectors() const;

 private:
  int epoch_ = 0;
  std::map<std::pair<int, MvmKind>, Counts> entries_;
};

struct UsageRow {
  int epoch = 0;
  MvmKind mvm = MvmKind::kForward;
  std::uint64_t high_count = 0;
  std::uint64_t low_count = 0;
  double high_fraction = 0.0;
};

/// Rows ordered by epoch, then MVM kind.
std::vector<UsageRow> usage_report(const VrefUsageLog& log);
/// CSV with header epoch,mvm,high_count,low_count,high_fraction.
std::string usage_csv(const VrefUsageLog& log);

/// Mean number of active rows per input vector for each exponent plane.
struct SparsityHistogram {
  std::string layer;
  std::array<double, formats::kRadix4Planes> mean_active_rows{};
  std::uint64_t vectors = 0;
};

/// `codes` holds radix-4 values times 64 (QuantizedTensor layout), grouped
/// into consecutive input vectors of `vector_length` elements. Throws
/// InputError on an empty tensor or a ragged final vector.
SparsityHistogram sparsity_histogram(std::span<const std::int32_t> codes, std::size_t vector_length,
                                     std::string layer);

/// CSV with header layer,exponent_bit,mean_active_rows.
std::string sparsity_csv(std::span<const SparsityHistogram> histograms);

}  // namespace imcsim::vref
