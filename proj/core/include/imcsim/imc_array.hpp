#pragma once

// Behavioral model of the compute-in-memory array.
//
// A stored integer matrix (inner dim D x N outputs) is decomposed into +/-1
// bit-planes; the bit-planes of one element sit in parallel columns, and rows
// beyond R are folded into further row tiles. Each column cycle drives one
// input bit-plane (sign bits plus a row mask) across all rows, counts XNOR
// matches per column, converts that count to a voltage, and digitizes it with
// an 8-bit ADC against (V_Ref,p, V_Ref,n). The near-memory datapath undoes the
// ADC scaling, subtracts the masked-row offset, and weights each plane pair.
//
// Everything is modeled in the count domain: a column holding c matches sits
// at c * v_dd / R volts.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "imcsim/formats.hpp"
#include "imcsim/types.hpp"
#include "imcsim/vref.hpp"

namespace imcsim::imc {

/// Row-major integer matrix.
struct IntMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> data;

  IntMatrix() = default;
  IntMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}

  std::int32_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::int32_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// An integer matrix laid out on the array as +/-1 bit-planes.
/// Column map: output n, bit-plane j -> physical column n * planes + j, the
/// same in every row tile. Padding rows in the last tile are never active.
class StoredMatrix {
 public:
  int inner_dim() const { return inner_dim_; }
  int outputs() const { return outputs_; }
  /// Bit width of the +/-1 format, which is also the number of bit-planes.
  int planes() const { return planes_; }
  int tiles() const { return static_cast<int>(tile_rows_.size()); }
  int tile_rows(int tile) const { return tile_rows_[static_cast<std::size_t>(tile)]; }
  int tile_words(int tile) const { return (tile_rows(tile) + 63) / 64; }
  int columns_used() const { return outputs_ * planes_; }
  static int column(int output, int plane, int planes) { return output * planes + plane; }

  /// Bits of one column in one tile; bit r set means the stored bit is +1.
  std::span<const std::uint64_t> column_bits(int tile, int output, int plane) const;
  /// Stored bit (+1/-1) at an absolute row.
  int stored_bit(int row, int output, int plane) const;
  /// Flip one stored bit; used to check that masked rows never matter.
  void flip_bit(int row, int output, int plane);

  const IntMatrix& source() const { return source_; }
  /// 32-bit words needed to load this matrix into the array.
  std::uint64_t load_words() const;

 private:
  friend StoredMatrix load_matrix(const IntMatrix&, int, const CimaConfig&);

  std::size_t offset(int tile, int output, int plane) const;

  int inner_dim_ = 0;
  int outputs_ = 0;
  int planes_ = 0;
  int rows_per_tile_ = 0;
  std::vector<int> tile_rows_;
  std::vector<std::size_t> tile_offset_;  // first word of each tile
  std::vector<std::uint64_t> bits_;
  IntMatrix source_;
};

/// Throws RangeError for elements outside the format, CapacityError when
/// outputs * planes exceeds the array columns.
StoredMatrix load_matrix(const IntMatrix& m, int fmt_bits, const CimaConfig& cfg);

/// A matrix wider than the array, split into sequential column passes.
struct PartitionedMatrix {
  std::vector<StoredMatrix> groups;
  std::vector<int> first_output;
  int inner_dim = 0;
  int outputs = 0;
  int planes = 0;

  std::uint64_t load_words() const;
};

PartitionedMatrix load_partitioned(const IntMatrix& m, int fmt_bits, const CimaConfig& cfg);

/// One serially applied input bit-plane for one row tile.
struct InputPlane {
  std::vector<std::uint64_t> sign;  // bit set = +1
  std::vector<std::uint64_t> mask;  // bit set = active row
  int n_active = 0;
  double weight = 1.0;
};

struct AdcReading {
  int code = 0;
  double vref_p = 0.0;
  double vref_n = 0.0;
  bool clipped = false;
};

/// XNOR matches between the input signs and a stored column over active rows.
int xnor_count(std::span<const std::uint64_t> sign, std::span<const std::uint64_t> mask,
               std::span<const std::uint64_t> stored);

/// Digitize a column holding `count` matches (fractional when noise is
/// added). code = clip(floor((v - vn) * 255 / (vp - vn)), 0, 255).
/// Throws ParameterError when vp <= vn.
AdcReading adc_convert(double count, const vref::References& refs, const CimaConfig& cfg);

/// Run one cycle over every used column of `tile`. Noise, when enabled, is
/// drawn from a substream keyed by (cfg.noise_seed, stream, tile, column).
std::vector<AdcReading> column_cycle(const StoredMatrix& sm, int tile, const InputPlane& plane,
                                     const vref::References& refs, const CimaConfig& cfg,
                                     std::uint64_t stream = 0);

/// Signed +/-1 sum over the active rows recovered from an ADC code: the
/// estimated match count is the midpoint of the integer counts that map to
/// this code (clamped to [0, n_active]), and the result is 2 * count -
/// n_active. Exact whenever one code spans at most one count.
std::int64_t reconstruct_signed(const AdcReading& reading, int n_active, const CimaConfig& cfg);

/// Row counts spanned by one ADC code.
double code_step(const vref::References& refs, const CimaConfig& cfg);

/// True when every count in 0..n_active reconstructs exactly: one code spans
/// at most one count and n_active stays below V_Ref,p.
bool exact_cycle(const vref::References& refs, int n_active, const CimaConfig& cfg);

/// How input vectors are encoded onto the rows.
struct InputFormat {
  enum class Kind { kPm1, kRadix4 };
  Kind kind = Kind::kPm1;
  int bits = formats::kActivationBits;

  static InputFormat pm1(int bits) { return {Kind::kPm1, bits}; }
  /// Inputs are radix-4 values times 64 (formats::QuantizedTensor layout).
  static InputFormat radix4() { return {Kind::kRadix4, formats::kRadix4Bits}; }
  /// Serial cycles per tile.
  int serial_planes() const { return kind == Kind::kPm1 ? bits : formats::kRadix4Planes; }
};

struct MvmResult {
  /// Reconstructed products in integer units of the operands (radix-4 inputs
  /// count in units of their decoded value, i.e. value_x64 / 64).
  std::vector<double> values;
  EnergyCounts counts;
  std::uint64_t high_vectors = 0;  // vectors with at least one high-reference cycle
  std::uint64_t low_vectors = 0;
};

struct MvmOptions {
  MvmKind kind = MvmKind::kForward;  // usage-log bucket
  vref::VrefUsageLog* usage = nullptr;
  int threads = 1;
  std::uint64_t noise_stream = 0;  // base substream for this call
  bool count_load = true;          // charge one matrix load to this call
};

/// Batched MVM over `num_vectors` inputs stored row-major (num_vectors x D).
/// Output is num_vectors x N row-major.
MvmResult mvm_batch(InputFormat fmt, std::span<const std::int32_t> inputs, int num_vectors,
                    const PartitionedMatrix& m, const vref::VrefPolicy& policy,
                    const CimaConfig& cfg, const MvmOptions& opts = {});

/// Forward MVM: activations in the 6-bit +/-1 format against stored weights.
MvmResult mvm_forward(const formats::QuantizedTensor& act, const StoredMatrix& w,
                      const vref::VrefPolicy& policy, const CimaConfig& cfg,
                      const MvmOptions& opts = {});

/// Radix-4 MVM: 1-hot exponent planes masked onto the rows. The result is
/// multiplied by `output_scale` (1 / gradscale times operand scales).
MvmResult mvm_radix4(std::span<const formats::Radix4Code> grads, const StoredMatrix& m,
                     const vref::VrefPolicy& policy, const CimaConfig& cfg,
                     double output_scale = 1.0, const MvmOptions& opts = {});

/// Exact integer product a^T m (m is D x N). Test oracle.
std::vector<std::int64_t> exact_mvm(std::span<const std::int64_t> a, const IntMatrix& m);

}  // namespace imcsim::imc
