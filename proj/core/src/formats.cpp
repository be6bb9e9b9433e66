#include "imcsim/formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "imcsim/error.hpp"

namespace imcsim::formats {

namespace {

// Sum of a bit pattern times two (keeps half-weights integral). Bit p of
// `pattern` set means plane p is +1.
std::int64_t pattern_value_x2(std::uint32_t pattern, int k) {
  std::int64_t sum = 0;
  for (int p = 0; p < k; ++p) {
    const std::int64_t w = pm1_plane_weight_x2(p);
    sum += (pattern >> p) & 1U ? w : -w;
  }
  return sum;
}

// For each k, encodings indexed by x + 2^(k-2). Patterns are enumerated in
// lexicographic order over (b0+, b0-, b1, ...) with -1 before +1, so the first
// hit for each value is the smallest.
struct Pm1Tables {
  std::array<std::vector<std::uint32_t>, kMaxPm1Bits + 1> by_k;

  Pm1Tables() {
    for (int k = kMinPm1Bits; k <= kMaxPm1Bits; ++k) {
      const std::int64_t limit = pm1_limit(k);
      auto& table = by_k[k];
      table.assign(static_cast<std::size_t>(2 * limit + 1), UINT32_MAX);
      const std::uint32_t count = 1U << k;
      for (std::uint32_t lex = 0; lex < count; ++lex) {
        // Lexicographic index: the first bit in order is the most significant.
        std::uint32_t pattern = 0;
        for (int p = 0; p < k; ++p) {
          if ((lex >> (k - 1 - p)) & 1U) pattern |= 1U << p;
        }
        const std::int64_t x2 = pattern_value_x2(pattern, k);
        const std::int64_t x = x2 / 2;  // always even, see decode_pm1
        auto& slot = table[static_cast<std::size_t>(x + limit)];
        if (slot == UINT32_MAX) slot = pattern;
      }
    }
  }
};

const Pm1Tables& pm1_tables() {
  static const Pm1Tables tables;
  return tables;
}

void check_k(int k) {
  if (k < kMinPm1Bits || k > kMaxPm1Bits) {
    throw RangeError("pm1 bit width " + std::to_string(k) + " outside [" +
                     std::to_string(kMinPm1Bits) + ", " + std::to_string(kMaxPm1Bits) + "]");
  }
}

}  // namespace

std::int64_t decode_pm1(const Pm1Code& code) {
  // (b0+ + b0-)/2 is in {-1, 0, 1}, so the doubled sum is always even.
  std::int64_t x2 = 0;
  for (int p = 0; p < code.k; ++p) x2 += code.bits[static_cast<std::size_t>(p)] * pm1_plane_weight_x2(p);
  return x2 / 2;
}

Pm1Code encode_pm1(std::int64_t x, int k) {
  check_k(k);
  if (x > pm1_limit(k) || x < -pm1_limit(k)) {
    throw RangeError("value " + std::to_string(x) + " not representable in " + std::to_string(k) +
                     "-bit +/-1 format (range +/-" + std::to_string(pm1_limit(k)) + ")");
  }
  const std::uint32_t pattern = pm1_pattern(static_cast<int>(x), k);
  Pm1Code code{k, std::vector<std::int8_t>(static_cast<std::size_t>(k))};
  for (int p = 0; p < k; ++p) code.bits[static_cast<std::size_t>(p)] = (pattern >> p) & 1U ? 1 : -1;
  return code;
}

std::uint32_t pm1_pattern(int x, int k) {
  return pm1_tables().by_k[k][static_cast<std::size_t>(x + pm1_limit(k))];
}

// ---------------------------------------------------------------------------

int Radix4Code::plane() const {
  if (mask == 0) return -1;
  return std::countr_zero(static_cast<unsigned>(mask));
}

std::int32_t Radix4Code::value_x64() const {
  if (mask == 0) return 0;
  return sign * (std::int32_t{1} << (2 * plane()));
}

Radix4Code radix4_from_x64(std::int32_t value_x64) {
  if (value_x64 == 0) return {};
  const std::uint32_t mag = static_cast<std::uint32_t>(std::abs(value_x64));
  const int bit = std::countr_zero(mag);
  if (std::popcount(mag) != 1 || bit % 2 != 0 || bit / 2 >= kRadix4Planes) {
    throw RangeError("value " + std::to_string(value_x64) + "/64 is not a radix-4 magnitude");
  }
  return {static_cast<std::int8_t>(value_x64 < 0 ? -1 : 1),
          static_cast<std::uint8_t>(1U << (bit / 2))};
}

double round_half_away(double x) { return std::round(x); }

Radix4Code quantize_radix4(double g, const GradScaleState& state) {
  if (!std::isfinite(g)) throw InputError("non-finite gradient value");
  if (!(state.scale > 0.0)) throw ParameterError("gradscale must be positive");
  const double scaled = g * state.scale;
  const double mag = std::abs(scaled);
  if (!(mag >= kRadix4Underflow)) return {};
  // log2 is exact on powers of two, so exact powers of 4 never mis-round.
  int e = static_cast<int>(round_half_away(std::log2(mag) / 2.0));
  e = std::clamp(e, -kRadix4ExponentOffset, kRadix4ExponentOffset);
  return {static_cast<std::int8_t>(scaled < 0 ? -1 : 1),
          static_cast<std::uint8_t>(1U << (e + kRadix4ExponentOffset))};
}

double dequantize_radix4(const Radix4Code& code, const GradScaleState& state) {
  return code.value_x64() / 64.0 / state.scale;
}

GradScaleState gradscale_update(const GradScaleState& state, std::span<const double> g) {
  double peak = 0.0;
  for (double v : g) {
    if (!std::isfinite(v)) throw InputError("non-finite gradient value");
    peak = std::max(peak, std::abs(v));
  }
  if (peak == 0.0) return state;
  GradScaleState next = state;
  next.running_max = state.initialized
                         ? state.decay * state.running_max + (1.0 - state.decay) * peak
                         : peak;
  next.initialized = true;
  next.scale = kRadix4MaxMagnitude / next.running_max;
  return next;
}

// ---------------------------------------------------------------------------

QuantizedTensor pact_quantize(std::span<const double> a, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("PACT alpha must be positive, got " + std::to_string(alpha));
  }
  QuantizedTensor q;
  q.kind = QuantKind::kActivation;
  q.scale = alpha / kActivationLevels;
  q.values.resize(a.size());
  const double inv = kActivationLevels / alpha;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) throw InputError("non-finite activation at index " + std::to_string(i));
    const double clipped = std::clamp(a[i], 0.0, alpha);
    q.values[i] = static_cast<std::int32_t>(round_half_away(clipped * inv));
  }
  return q;
}

double sawb_clip(std::span<const double> w) {
  double sum_abs = 0.0;
  double sum_sq = 0.0;
  double peak = 0.0;
  for (double v : w) {
    const double a = std::abs(v);
    sum_abs += a;
    sum_sq += a * a;
    peak = std::max(peak, a);
  }
  if (peak == 0.0) return 1.0;
  const double n = static_cast<double>(w.size());
  const double clip = kSawbC1 * std::sqrt(sum_sq / n) - kSawbC2 * (sum_abs / n);
  return clip > 0.0 ? clip : peak;
}

QuantizedTensor symmetric_quantize(std::span<const double> w, double clip) {
  if (!(clip > 0.0)) throw ParameterError("weight clip must be positive");
  QuantizedTensor q;
  q.kind = QuantKind::kWeight;
  q.scale = clip / kWeightLevels;
  q.values.resize(w.size());
  const double inv = kWeightLevels / clip;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double clipped = std::clamp(w[i], -clip, clip);
    q.values[i] = static_cast<std::int32_t>(round_half_away(clipped * inv));
  }
  return q;
}

QuantizedTensor sawb_quantize(std::span<const double> w) {
  if (w.empty()) throw InputError("SAWB needs a non-empty tensor");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) throw InputError("non-finite weight at index " + std::to_string(i));
  }
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) {
    QuantizedTensor q;
    q.kind = QuantKind::kWeight;
    q.values.assign(w.size(), 0);
    return q;  // scale 1
  }
  return symmetric_quantize(w, sawb_clip(w));
}

QuantizedTensor radix4_quantize(std::span<const double> g, const GradScaleState& state) {
  QuantizedTensor q;
  q.kind = QuantKind::kRadix4Gradient;
  q.scale = 1.0 / (64.0 * state.scale);
  q.values.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) q.values[i] = quantize_radix4(g[i], state).value_x64();
  return q;
}

}  // namespace imcsim::formats
