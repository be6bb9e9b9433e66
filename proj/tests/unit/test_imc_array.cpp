#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "imcsim/error.hpp"
#include "imcsim/imc_array.hpp"

using namespace imcsim;
using namespace imcsim::imc;

namespace {

const CimaConfig kCfg;
const double kDelta = 2304.0 / 255.0;  // counts per code at vp = 0.8 V

IntMatrix column(std::initializer_list<int> values) {
  IntMatrix m(static_cast<int>(values.size()), 1);
  int r = 0;
  for (int v : values) m.at(r++, 0) = v;
  return m;
}

formats::QuantizedTensor activations(std::vector<std::int32_t> v) {
  formats::QuantizedTensor q;
  q.values = std::move(v);
  return q;
}

IntMatrix random_matrix(std::mt19937_64& rng, int rows, int cols, int lim) {
  std::uniform_int_distribution<int> d(-lim, lim);
  IntMatrix m(rows, cols);
  for (auto& v : m.data) v = d(rng);
  return m;
}

std::vector<std::int64_t> widen(std::span<const std::int32_t> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(LoadMatrix, TilingAndColumns) {
  const auto one = load_matrix(IntMatrix(2304, 1), 5, kCfg);
  EXPECT_EQ(one.tiles(), 1);
  EXPECT_EQ(one.columns_used(), 5);
  EXPECT_EQ(load_matrix(IntMatrix(2305, 1), 5, kCfg).tiles(), 2);
  EXPECT_THROW(load_matrix(IntMatrix(16, 52), 5, kCfg), CapacityError);
  EXPECT_NO_THROW(load_matrix(IntMatrix(16, 51), 5, kCfg));
}

TEST(LoadMatrix, RejectsOutOfRange) {
  EXPECT_THROW(load_matrix(column({9}), 5, kCfg), RangeError);
  EXPECT_THROW(load_matrix(column({-9}), 5, kCfg), RangeError);
}

TEST(LoadMatrix, StoredBitsDecodeToSource) {
  std::mt19937_64 rng(4);
  const auto m = random_matrix(rng, 300, 7, 8);
  const auto sm = load_matrix(m, 5, kCfg);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      formats::Pm1Code code{5, {}};
      for (int p = 0; p < 5; ++p) code.bits.push_back(static_cast<std::int8_t>(sm.stored_bit(r, c, p)));
      ASSERT_EQ(formats::decode_pm1(code), m.at(r, c));
    }
  }
}

TEST(LoadMatrix, PartitionSplitsWideMatrices) {
  const auto pm = load_partitioned(IntMatrix(10, 120), 5, kCfg);
  ASSERT_EQ(pm.groups.size(), 3u);  // 51 outputs per group
  EXPECT_EQ(pm.first_output[1], 51);
  EXPECT_EQ(pm.groups[2].outputs(), 18);
}

TEST(Adc, Examples) {
  const vref::References high{0.8, 0.0};
  const vref::References prec{vref::v_prec(kCfg), 0.0};
  auto r = adc_convert(500, high, kCfg);
  EXPECT_EQ(r.code, 55);
  EXPECT_FALSE(r.clipped);
  r = adc_convert(500, prec, kCfg);
  EXPECT_EQ(r.code, 255);
  EXPECT_TRUE(r.clipped);
  EXPECT_EQ(adc_convert(200, prec, kCfg).code, 200);
  EXPECT_THROW(adc_convert(10, vref::References{0.1, 0.1}, kCfg), ParameterError);
}

TEST(Adc, CodeAlwaysInRange) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> count(-100.0, 3000.0);
  std::uniform_real_distribution<double> vp(0.01, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const auto r = adc_convert(count(rng), vref::References{vp(rng), 0.0}, kCfg);
    ASSERT_GE(r.code, 0);
    ASSERT_LE(r.code, 255);
  }
}

TEST(Reconstruct, Examples) {
  const vref::References prec{vref::v_prec(kCfg), 0.0};
  EXPECT_EQ(reconstruct_signed(adc_convert(200, prec, kCfg), 300, kCfg), 100);
  EXPECT_EQ(reconstruct_signed(AdcReading{17, 0.8, 0.0, false}, 0, kCfg), 0);
  // Every count landing on code 55 at 0.8 V reconstructs within one step.
  const AdcReading r55{55, 0.8, 0.0, false};
  const auto s = reconstruct_signed(r55, 2304, kCfg);
  for (int c = 0; c <= 2304; ++c) {
    if (adc_convert(c, vref::References{0.8, 0.0}, kCfg).code != 55) continue;
    EXPECT_LE(std::abs(s - (2 * c - 2304)), kDelta + 1e-9) << c;
  }
}

TEST(Reconstruct, ExactAtVprecForAllCountsUpTo255) {
  const vref::References prec{vref::v_prec(kCfg), 0.0};
  for (int n = 0; n <= 255; ++n) {
    for (int c = 0; c <= n; ++c) {
      const auto r = adc_convert(c, prec, kCfg);
      ASSERT_EQ(r.code, c);
      ASSERT_EQ(reconstruct_signed(r, n, kCfg), 2 * c - n);
    }
  }
}

TEST(Reconstruct, ErrorBoundedByStepAtHighReference) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> nd(1, 2304);
  const vref::References high{0.8, 0.0};
  for (int i = 0; i < 20000; ++i) {
    const int n = nd(rng);
    const int c = std::uniform_int_distribution<int>(0, n)(rng);
    const auto s = reconstruct_signed(adc_convert(c, high, kCfg), n, kCfg);
    ASSERT_LE(std::abs(s - (2 * c - n)), 2 * kDelta);
  }
}

TEST(MvmForward, HandExamples) {
  const auto w = load_matrix(column({2, -1}), 5, kCfg);
  const auto r = mvm_forward(activations({3, 5}), w, vref::VrefPolicy::variable(0.8), kCfg);
  EXPECT_EQ(r.values[0], 1.0);

  const auto zero = load_matrix(IntMatrix(40, 3), 5, kCfg);
  std::vector<std::int32_t> a(40);
  for (int i = 0; i < 40; ++i) a[static_cast<std::size_t>(i)] = i % 17;
  for (double v : mvm_forward(activations(a), zero, vref::VrefPolicy::variable(0.8), kCfg).values) EXPECT_EQ(v, 0.0);
}

TEST(MvmForward, FullArrayWithinBound) {
  IntMatrix m(2304, 1);
  for (auto& v : m.data) v = 1;
  const auto w = load_matrix(m, 5, kCfg);
  const auto act = activations(std::vector<std::int32_t>(2304, 16));
  const auto r = mvm_forward(act, w, vref::VrefPolicy::fixed(0.8), kCfg);
  // 30 cycles; each plane product weight is (w_in/2)(w_st/2).
  double bound = 0.0;
  for (int p = 0; p < 6; ++p) {
    for (int j = 0; j < 5; ++j) {
      bound += kDelta * formats::pm1_plane_weight_x2(p) * formats::pm1_plane_weight_x2(j) / 4.0;
    }
  }
  EXPECT_LE(std::abs(r.values[0] - 36864.0), bound);
  EXPECT_EQ(r.counts.adc_samples, 30u);
}

TEST(MvmForward, MatchesOracleUnderVariableReference) {
  std::mt19937_64 rng(21);
  const auto m = random_matrix(rng, 100, 10, 8);
  const auto w = load_matrix(m, 5, kCfg);
  std::uniform_int_distribution<int> ad(0, 16);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::int32_t> a(100);
    for (auto& v : a) v = ad(rng);
    const auto r = mvm_forward(activations(a), w, vref::VrefPolicy::variable(0.8), kCfg);
    const auto exact = exact_mvm(widen(a), m);
    for (int n = 0; n < 10; ++n) ASSERT_EQ(r.values[static_cast<std::size_t>(n)], exact[static_cast<std::size_t>(n)]);
  }
}

TEST(MvmRadix4, HandExamples) {
  const auto m = load_matrix(column({2, 3}), 5, kCfg);
  const formats::GradScaleState unit;
  const std::vector<formats::Radix4Code> g{formats::quantize_radix4(1.0, unit), formats::quantize_radix4(-4.0, unit)};
  EXPECT_EQ(mvm_radix4(g, m, vref::VrefPolicy::variable(0.8), kCfg).values[0], -10.0);

  const std::vector<formats::Radix4Code> zeros(2);
  const auto r = mvm_radix4(zeros, m, vref::VrefPolicy::variable(0.8), kCfg);
  EXPECT_EQ(r.values[0], 0.0);
  EXPECT_EQ(r.counts.adc_samples, 0u);
  EXPECT_EQ(r.counts.bitcell_ops, 0u);
}

TEST(MvmRadix4, SinglePlaneWithinBound) {
  std::mt19937_64 rng(5);
  const auto m = random_matrix(rng, 2304, 2, 8);
  const auto sm = load_matrix(m, 5, kCfg);
  const std::vector<formats::Radix4Code> g(2304, formats::radix4_from_x64(4 * 64));
  const auto r = mvm_radix4(g, sm, vref::VrefPolicy::fixed(0.8), kCfg);
  const auto exact = exact_mvm(std::vector<std::int64_t>(2304, 4), m);
  for (int n = 0; n < 2; ++n) {
    EXPECT_LE(std::abs(r.values[static_cast<std::size_t>(n)] - exact[static_cast<std::size_t>(n)]), kDelta * 4 * 8);
  }
}

TEST(MvmRadix4, MaskedRowsNeverMatter) {
  std::mt19937_64 rng(77);
  const auto m = random_matrix(rng, 500, 4, 8);
  std::vector<std::int32_t> x(500, 0);
  std::uniform_int_distribution<int> pd(0, 6);
  for (std::size_t i = 0; i < x.size(); i += 3) x[i] = (i % 2 ? -1 : 1) * (1 << (2 * pd(rng)));
  const auto fmt = InputFormat::radix4();
  const auto base = mvm_batch(fmt, x, 1, load_partitioned(m, 5, kCfg), vref::VrefPolicy::fixed(0.8), kCfg);
  auto sm = load_matrix(m, 5, kCfg);
  for (int r = 0; r < 500; ++r) {
    if (x[static_cast<std::size_t>(r)] != 0) continue;
    for (int c = 0; c < 4; ++c) {
      for (int p = 0; p < 5; ++p) sm.flip_bit(r, c, p);
    }
  }
  std::vector<formats::Radix4Code> codes;
  for (auto v : x) codes.push_back(formats::radix4_from_x64(v));
  const auto flipped = mvm_radix4(codes, sm, vref::VrefPolicy::fixed(0.8), kCfg);
  EXPECT_EQ(flipped.values, base.values);
}

TEST(MvmRadix4, TiledSparseGradientsAreExact) {
  // Weight-update shape: inner dim 4096 spans two tiles; sparse gradients keep
  // every plane below 256 active rows, so variable references are exact.
  std::mt19937_64 rng(12);
  const auto m = random_matrix(rng, 4096, 6, 8);
  const auto pm = load_partitioned(m, 5, kCfg);
  ASSERT_EQ(pm.groups[0].tiles(), 2);
  std::vector<std::int32_t> x(4096, 0);
  std::uniform_int_distribution<int> pd(0, 6);
  std::bernoulli_distribution nz(0.2);
  for (auto& v : x) {
    if (nz(rng)) v = (pd(rng) % 2 ? -1 : 1) * (1 << (2 * pd(rng)));
  }
  const auto r = mvm_batch(InputFormat::radix4(), x, 1, pm, vref::VrefPolicy::variable(0.8), kCfg);
  const auto exact = exact_mvm(widen(x), m);
  for (int n = 0; n < 6; ++n) {
    EXPECT_EQ(r.values[static_cast<std::size_t>(n)] * 64.0, static_cast<double>(exact[static_cast<std::size_t>(n)]));
  }
}

TEST(ExactMvm, IdentityAndShapes) {
  IntMatrix eye(4, 4);
  for (int i = 0; i < 4; ++i) eye.at(i, i) = 1;
  const std::vector<std::int64_t> a{3, -1, 7, 0};
  EXPECT_EQ(exact_mvm(a, eye), a);
  EXPECT_EQ(exact_mvm(std::vector<std::int64_t>{3, 5}, column({2, -1}))[0], 1);
  EXPECT_THROW(exact_mvm(std::vector<std::int64_t>{1, 2, 3}, column({1, 1})), DimensionError);
}

TEST(Counts, CycleAccounting) {
  // One full column cycle: 2304 active rows, one column.
  IntMatrix m(2304, 1);
  for (auto& v : m.data) v = 1;
  const auto sm = load_matrix(m, 1 + 1, kCfg);
  std::vector<std::int32_t> x(2304, 64);  // plane 3 only
  const auto r = mvm_batch(InputFormat::radix4(), x, 1, load_partitioned(m, 2, kCfg), vref::VrefPolicy::variable(0.8),
                           kCfg);
  EXPECT_EQ(r.counts.bitcell_ops, 2304u * 2);
  EXPECT_EQ(r.counts.adc_samples, 2u);
  EXPECT_EQ(sm.columns_used(), 2);
}

TEST(Counts, RadixBitcellOpsFollowNonzeros) {
  std::mt19937_64 rng(31);
  const auto m = random_matrix(rng, 700, 3, 8);
  const auto pm = load_partitioned(m, 5, kCfg);
  std::vector<std::int32_t> x(700, 0);
  std::bernoulli_distribution nz(0.3);
  std::uniform_int_distribution<int> pd(0, 6);
  std::uint64_t z = 0;
  for (auto& v : x) {
    if (nz(rng)) {
      v = 1 << (2 * pd(rng));
      ++z;
    }
  }
  const auto r = mvm_batch(InputFormat::radix4(), x, 1, pm, vref::VrefPolicy::variable(0.8), kCfg);
  EXPECT_EQ(r.counts.bitcell_ops, z * 15);
}

TEST(Batch, ThreadsAndNoiseAreDeterministic) {
  std::mt19937_64 rng(2);
  const auto m = random_matrix(rng, 600, 8, 8);
  const auto pm = load_partitioned(m, 5, kCfg);
  std::vector<std::int32_t> x(600 * 16);
  std::uniform_int_distribution<int> ad(0, 16);
  for (auto& v : x) v = ad(rng);
  CimaConfig noisy = kCfg;
  noisy.adc_noise_sigma = 0.002;
  noisy.noise_seed = 99;
  MvmOptions one;
  MvmOptions four;
  four.threads = 4;
  const auto fmt = InputFormat::pm1(6);
  const auto a = mvm_batch(fmt, x, 16, pm, vref::VrefPolicy::fixed(0.8), noisy, one);
  const auto b = mvm_batch(fmt, x, 16, pm, vref::VrefPolicy::fixed(0.8), noisy, four);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.counts, b.counts);
  const auto clean = mvm_batch(fmt, x, 16, pm, vref::VrefPolicy::fixed(0.8), kCfg, one);
  EXPECT_NE(a.values, clean.values);
}

TEST(Batch, MatchesSingleVectorCalls) {
  std::mt19937_64 rng(8);
  const auto m = random_matrix(rng, 90, 5, 8);
  const auto pm = load_partitioned(m, 5, kCfg);
  const auto sm = load_matrix(m, 5, kCfg);
  std::vector<std::int32_t> x(90 * 3);
  std::uniform_int_distribution<int> ad(0, 16);
  for (auto& v : x) v = ad(rng);
  const auto batch = mvm_batch(InputFormat::pm1(6), x, 3, pm, vref::VrefPolicy::fixed(0.8), kCfg);
  for (int v = 0; v < 3; ++v) {
    const auto single = mvm_forward(activations({x.begin() + v * 90, x.begin() + (v + 1) * 90}), sm,
                                    vref::VrefPolicy::fixed(0.8), kCfg);
    for (int n = 0; n < 5; ++n) {
      EXPECT_EQ(batch.values[static_cast<std::size_t>(v * 5 + n)], single.values[static_cast<std::size_t>(n)]);
    }
  }
}
