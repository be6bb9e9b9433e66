#pragma once

// Number formats consumed by the array: the +/-1 binary integer code, the
// 1-hot radix-4 gradient code, and the three input quantizers that produce
// them from real tensors.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace imcsim::formats {

// ---------------------------------------------------------------------------
// +/-1 binary integers
// ---------------------------------------------------------------------------

inline constexpr int kMinPm1Bits = 2;
inline constexpr int kMaxPm1Bits = 12;

inline constexpr int kActivationBits = 6;  // spans [-16, 16], holds [0, 16]
inline constexpr int kWeightBits = 5;      // spans [-8, 8]

/// K-bit code where every bit is +1 or -1. Bit order is
/// b0+, b0-, b1, ..., b_{K-2}; b0+ and b0- each carry weight 1/2 and b_i
/// carries 2^(i-1).
struct Pm1Code {
  int k = 0;
  std::vector<std::int8_t> bits;

  friend bool operator==(const Pm1Code&, const Pm1Code&) = default;
};

/// Largest magnitude a k-bit code reaches: 2^(k-2).
constexpr std::int64_t pm1_limit(int k) { return std::int64_t{1} << (k - 2); }

/// Weight of bit-plane `plane` (0 = b0+, 1 = b0-, i+1 = b_i) times two, so all
/// plane weights are integers.
constexpr std::int64_t pm1_plane_weight_x2(int plane) {
  return plane < 2 ? 1 : (std::int64_t{1} << (plane - 1));
}

std::int64_t decode_pm1(const Pm1Code& code);

/// Deterministic encoding: among all bit patterns decoding to x, returns the
/// lexicographically smallest one in the bit order above with -1 < +1.
/// Throws RangeError when |x| > 2^(k-2) or k is unsupported.
Pm1Code encode_pm1(std::int64_t x, int k);

/// Bit pattern of encode_pm1(x, k) packed as a mask: bit p set means plane p
/// holds +1. Valid for |x| <= pm1_limit(k); used by the array hot paths.
std::uint32_t pm1_pattern(int x, int k);

// ---------------------------------------------------------------------------
// Radix-4 gradients
// ---------------------------------------------------------------------------

inline constexpr int kRadix4Bits = 8;                          // sign + 7 mask bits
inline constexpr int kRadix4Planes = kRadix4Bits - 1;          // exponent planes
inline constexpr int kRadix4ExponentOffset = (kRadix4Bits - 2) / 2;  // 3
inline constexpr double kRadix4MaxMagnitude = 64.0;
inline constexpr double kRadix4MinMagnitude = 1.0 / 64.0;
/// Geometric midpoint below the smallest magnitude: 4^-3.5.
inline constexpr double kRadix4Underflow = 1.0 / 128.0;

/// Sign plus a 1-hot (or empty) exponent mask. Mask bit i stands for
/// 4^(i - 3); an empty mask encodes zero.
struct Radix4Code {
  std::int8_t sign = 1;
  std::uint8_t mask = 0;

  bool is_zero() const { return mask == 0; }
  /// Index of the set mask bit; -1 for zero.
  int plane() const;
  /// Decoded value times 64, an exact integer in {0, +/-1, +/-4, ..., +/-4096}.
  std::int32_t value_x64() const;

  friend bool operator==(const Radix4Code&, const Radix4Code&) = default;
};

/// Per-layer gradient scale. The scale tracks an exponential moving average
/// of the per-batch max |g| so that scale * running_max sits at 64.
struct GradScaleState {
  double scale = 1.0;
  double running_max = 0.0;
  bool initialized = false;
  double decay = 0.9;
};

Radix4Code quantize_radix4(double g, const GradScaleState& state);
double dequantize_radix4(const Radix4Code& code, const GradScaleState& state);
/// Code whose decoded value is value_x64 / 64; throws RangeError otherwise.
Radix4Code radix4_from_x64(std::int32_t value_x64);

/// All-zero gradient tensors leave the state unchanged.
GradScaleState gradscale_update(const GradScaleState& state, std::span<const double> g);

// ---------------------------------------------------------------------------
// Quantized tensors
// ---------------------------------------------------------------------------

enum class QuantKind { kActivation, kWeight, kRadix4Gradient };

inline constexpr int kActivationLevels = 16;  // a_q in [0, 16]
inline constexpr int kWeightLevels = 8;       // w_q in [-8, 8]

/// Integer tensor plus the real multiplier mapping it back. Radix-4 gradient
/// tensors store the code value times 64 (see Radix4Code::value_x64).
struct QuantizedTensor {
  std::vector<std::int32_t> values;
  double scale = 1.0;
  QuantKind kind = QuantKind::kActivation;

  double dequantize(std::size_t i) const { return values[i] * scale; }
  std::vector<double> dequantize() const {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * scale;
    return out;
  }
};

/// PACT-style activation quantizer: round(clip(a, 0, alpha) / alpha * 16).
QuantizedTensor pact_quantize(std::span<const double> a, double alpha);

/// SAWB clip coefficients for 4-bit symmetric weights:
/// clip = c1 * sqrt(E[w^2]) - c2 * E[|w|].
inline constexpr double kSawbC1 = 12.68;
inline constexpr double kSawbC2 = 12.80;

/// Clip level SAWB picks for `w`. Falls back to max|w| when the fitted
/// formula is not positive, and to 1 for an all-zero tensor.
double sawb_clip(std::span<const double> w);
QuantizedTensor sawb_quantize(std::span<const double> w);
/// Symmetric quantization at an explicit clip level.
QuantizedTensor symmetric_quantize(std::span<const double> w, double clip);

/// Radix-4 quantization of a whole tensor under one gradscale state.
QuantizedTensor radix4_quantize(std::span<const double> g, const GradScaleState& state);

/// Round half away from zero.
double round_half_away(double x);

}  // namespace imcsim::formats
