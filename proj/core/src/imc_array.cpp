#include "imcsim/imc_array.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>

#include "imcsim/error.hpp"

namespace imcsim {

void CimaConfig::validate() const {
  if (rows <= 0 || cols <= 0 || adc_bits <= 0 || adc_bits > 24 || !(v_dd > 0.0) ||
      adc_noise_sigma < 0.0) {
    throw ParameterError("invalid array configuration (rows, cols, adc_bits and v_dd must be positive)");
  }
}

}  // namespace imcsim

namespace imcsim::imc {

namespace {

// Slack applied when flooring/ceiling count-domain values that are exact
// rationals in principle but carry floating-point rounding.
constexpr double kCountEps = 1e-9;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t noise_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t tile,
                        std::uint64_t plane, std::uint64_t column) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ stream);
  h = splitmix(h ^ tile);
  h = splitmix(h ^ plane);
  return splitmix(h ^ column);
}

// Standard normal sample from a hashed key (Box-Muller).
double gaussian(std::uint64_t key) {
  const double u1 = (static_cast<double>(splitmix(key) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(splitmix(key ^ 0x5851f42d4c957f2dULL) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double noise_counts(const CimaConfig& cfg, std::uint64_t key) {
  return gaussian(key) * cfg.adc_noise_sigma / cfg.volts_per_count();
}

// count -> reconstructed signed sum, per active-row count. Noise-free cycles
// depend only on (policy, n_active), so each table is built once from the
// same adc_convert/reconstruct_signed primitives the cycle API uses.
class ReconstructionTable {
 public:
  ReconstructionTable(const vref::VrefPolicy& policy, const CimaConfig& cfg)
      : policy_(policy), cfg_(cfg), tables_(static_cast<std::size_t>(cfg.rows) + 1) {}

  const std::vector<std::int32_t>& get(int n_active) {
    auto& table = tables_[static_cast<std::size_t>(n_active)];
    if (table.empty()) {
      const auto refs = vref::select_vref(policy_, n_active, cfg_);
      table.resize(static_cast<std::size_t>(n_active) + 1);
      for (int c = 0; c <= n_active; ++c) {
        table[static_cast<std::size_t>(c)] =
            static_cast<std::int32_t>(reconstruct_signed(adc_convert(c, refs, cfg_), n_active, cfg_));
      }
    }
    return table;
  }

 private:
  vref::VrefPolicy policy_;
  CimaConfig cfg_;
  std::vector<std::vector<std::int32_t>> tables_;
};

struct GroupView {
  std::span<const StoredMatrix> groups;
  std::span<const int> first_output;
  int inner_dim = 0;
  int outputs = 0;
  int planes = 0;
};

void check_inputs(InputFormat fmt, std::span<const std::int32_t> inputs) {
  if (fmt.kind == InputFormat::Kind::kPm1) {
    const auto limit = formats::pm1_limit(fmt.bits);
    for (auto v : inputs) {
      if (v > limit || v < -limit) {
        throw RangeError("input value " + std::to_string(v) + " outside the " +
                         std::to_string(fmt.bits) + "-bit +/-1 range");
      }
    }
  } else {
    for (auto v : inputs) (void)formats::radix4_from_x64(v);
  }
}

MvmResult run_batch(InputFormat fmt, std::span<const std::int32_t> inputs, int num_vectors,
                    const GroupView& m, const vref::VrefPolicy& policy, const CimaConfig& cfg,
                    const MvmOptions& opts) {
  cfg.validate();
  if (num_vectors < 0 || inputs.size() != static_cast<std::size_t>(num_vectors) * m.inner_dim) {
    throw DimensionError("input batch of " + std::to_string(inputs.size()) + " elements does not match " +
                         std::to_string(num_vectors) + " vectors of inner dimension " +
                         std::to_string(m.inner_dim));
  }
  if (fmt.kind == InputFormat::Kind::kPm1 &&
      (fmt.bits < formats::kMinPm1Bits || fmt.bits > formats::kMaxPm1Bits)) {
    throw RangeError("unsupported input bit width " + std::to_string(fmt.bits));
  }
  check_inputs(fmt, inputs);

  const int R = cfg.rows;
  const int D = m.inner_dim;
  const int N = m.outputs;
  const int P = m.planes;
  const int tiles = (D + R - 1) / R;
  const int in_planes = fmt.serial_planes();
  const bool pm1 = fmt.kind == InputFormat::Kind::kPm1;
  const bool noisy = cfg.adc_noise_sigma > 0.0;
  // Input plane weights: pm1 in units of 1/2, radix-4 in units of 1/64.
  // Stored plane weights are in units of 1/2.
  const double denom = pm1 ? 4.0 : 128.0;
  const std::uint64_t columns_total = static_cast<std::uint64_t>(N) * P;

  std::vector<std::int64_t> in_weight(static_cast<std::size_t>(in_planes));
  for (int p = 0; p < in_planes; ++p) {
    in_weight[static_cast<std::size_t>(p)] = pm1 ? formats::pm1_plane_weight_x2(p) : (std::int64_t{1} << (2 * p));
  }
  std::vector<std::int64_t> stored_weight(static_cast<std::size_t>(P));
  for (int j = 0; j < P; ++j) stored_weight[static_cast<std::size_t>(j)] = formats::pm1_plane_weight_x2(j);

  std::uint64_t reshape_per_vector = 0;
  for (int t = 0; t < tiles; ++t) {
    const int rows = std::min(R, D - t * R);
    reshape_per_vector += words32(static_cast<std::uint64_t>(rows) * fmt.bits);
  }
  reshape_per_vector *= m.groups.size();

  MvmResult result;
  result.values.assign(static_cast<std::size_t>(num_vectors) * N, 0.0);

  struct Partial {
    EnergyCounts counts;
    std::uint64_t high = 0;
    std::uint64_t low = 0;
  };

  auto worker = [&](int v_begin, int v_end, Partial& partial) {
    ReconstructionTable table(policy, cfg);
    const int max_words = (std::min(R, D) + 63) / 64;
    std::vector<std::uint64_t> sign(static_cast<std::size_t>(in_planes) * max_words);
    std::vector<std::uint64_t> mask(static_cast<std::size_t>(in_planes) * max_words);
    std::vector<int> n_active(static_cast<std::size_t>(in_planes));
    std::vector<std::int64_t> acc(static_cast<std::size_t>(N));

    for (int v = v_begin; v < v_end; ++v) {
      const std::int32_t* x = inputs.data() + static_cast<std::size_t>(v) * D;
      std::fill(acc.begin(), acc.end(), 0);
      bool high = false;

      for (int t = 0; t < tiles; ++t) {
        const int row0 = t * R;
        const int rows = std::min(R, D - row0);
        const int words = (rows + 63) / 64;
        std::fill(sign.begin(), sign.end(), 0);
        std::fill(mask.begin(), mask.end(), 0);
        std::fill(n_active.begin(), n_active.end(), 0);

        for (int r = 0; r < rows; ++r) {
          const std::uint64_t bit = std::uint64_t{1} << (r & 63);
          const std::size_t w = static_cast<std::size_t>(r >> 6);
          const std::int32_t value = x[row0 + r];
          if (pm1) {
            const std::uint32_t pattern = formats::pm1_pattern(value, fmt.bits);
            for (int p = 0; p < in_planes; ++p) {
              const std::size_t base = static_cast<std::size_t>(p) * max_words;
              if ((pattern >> p) & 1U) sign[base + w] |= bit;
              mask[base + w] |= bit;
            }
          } else if (value != 0) {
            const int p = std::countr_zero(static_cast<std::uint32_t>(std::abs(value))) / 2;
            const std::size_t base = static_cast<std::size_t>(p) * max_words;
            if (value > 0) sign[base + w] |= bit;
            mask[base + w] |= bit;
          }
        }
        for (int p = 0; p < in_planes; ++p) {
          const std::size_t base = static_cast<std::size_t>(p) * max_words;
          int active = 0;
          for (int w = 0; w < words; ++w) active += std::popcount(mask[base + static_cast<std::size_t>(w)]);
          n_active[static_cast<std::size_t>(p)] = active;
        }

        for (int p = 0; p < in_planes; ++p) {
          const int active = n_active[static_cast<std::size_t>(p)];
          if (active == 0) continue;  // fully masked: no cycle is issued
          const auto refs = vref::select_vref(policy, active, cfg);
          high = high || vref::is_high(refs, cfg);
          const std::vector<std::int32_t>* lut = noisy ? nullptr : &table.get(active);
          const std::span<const std::uint64_t> s(sign.data() + static_cast<std::size_t>(p) * max_words,
                                                 static_cast<std::size_t>(words));
          const std::span<const std::uint64_t> mk(mask.data() + static_cast<std::size_t>(p) * max_words,
                                                  static_cast<std::size_t>(words));
          const std::int64_t wp = in_weight[static_cast<std::size_t>(p)];

          for (std::size_t g = 0; g < m.groups.size(); ++g) {
            const StoredMatrix& sm = m.groups[g];
            const int first = m.first_output[g];
            for (int n = 0; n < sm.outputs(); ++n) {
              std::int64_t sum = 0;
              for (int j = 0; j < P; ++j) {
                const int count = xnor_count(s, mk, sm.column_bits(t, n, j));
                std::int64_t signed_sum;
                if (lut != nullptr) {
                  signed_sum = (*lut)[static_cast<std::size_t>(count)];
                } else {
                  const auto column = static_cast<std::uint64_t>(first + n) * P + j;
                  const auto key = noise_key(cfg.noise_seed, opts.noise_stream + static_cast<std::uint64_t>(v),
                                             static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(p), column);
                  signed_sum = reconstruct_signed(adc_convert(count + noise_counts(cfg, key), refs, cfg), active, cfg);
                }
                sum += stored_weight[static_cast<std::size_t>(j)] * signed_sum;
              }
              acc[static_cast<std::size_t>(first + n)] += wp * sum;
            }
          }
          partial.counts.bitcell_ops += static_cast<std::uint64_t>(active) * columns_total;
          partial.counts.adc_samples += columns_total;
          if (cfg.nmc_per_conversion) partial.counts.nmc_outputs += columns_total;
        }
      }

      double* out = result.values.data() + static_cast<std::size_t>(v) * N;
      for (int n = 0; n < N; ++n) out[n] = static_cast<double>(acc[static_cast<std::size_t>(n)]) / denom;
      partial.counts.reshape_words += reshape_per_vector;
      if (!cfg.nmc_per_conversion) partial.counts.nmc_outputs += static_cast<std::uint64_t>(N);
      (high ? partial.high : partial.low) += 1;
    }
  };

  const int threads = std::max(1, std::min(opts.threads, num_vectors));
  std::vector<Partial> partials(static_cast<std::size_t>(threads));
  if (threads == 1) {
    worker(0, num_vectors, partials[0]);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (num_vectors + threads - 1) / threads;
    for (int i = 0; i < threads; ++i) {
      const int b = std::min(num_vectors, i * chunk);
      const int e = std::min(num_vectors, b + chunk);
      pool.emplace_back(worker, b, e, std::ref(partials[static_cast<std::size_t>(i)]));
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& p : partials) {
    result.counts += p.counts;
    result.high_vectors += p.high;
    result.low_vectors += p.low;
  }
  result.counts.macs += static_cast<std::uint64_t>(num_vectors) * D * N;
  if (opts.count_load) {
    for (const auto& g : m.groups) result.counts.load_words += g.load_words();
  }
  if (opts.usage != nullptr) {
    if (result.high_vectors) opts.usage->record(opts.kind, true, result.high_vectors);
    if (result.low_vectors) opts.usage->record(opts.kind, false, result.low_vectors);
  }
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------

std::span<const std::uint64_t> StoredMatrix::column_bits(int tile, int output, int plane) const {
  return {bits_.data() + offset(tile, output, plane), static_cast<std::size_t>(tile_words(tile))};
}

std::size_t StoredMatrix::offset(int tile, int output, int plane) const {
  return tile_offset_[static_cast<std::size_t>(tile)] +
         static_cast<std::size_t>(column(output, plane, planes_)) * static_cast<std::size_t>(tile_words(tile));
}

int StoredMatrix::stored_bit(int row, int output, int plane) const {
  const int tile = row / rows_per_tile_;
  const int r = row % rows_per_tile_;
  const auto word = bits_[offset(tile, output, plane) + static_cast<std::size_t>(r >> 6)];
  return (word >> (r & 63)) & 1U ? 1 : -1;
}

void StoredMatrix::flip_bit(int row, int output, int plane) {
  const int tile = row / rows_per_tile_;
  const int r = row % rows_per_tile_;
  bits_[offset(tile, output, plane) + static_cast<std::size_t>(r >> 6)] ^= std::uint64_t{1} << (r & 63);
}

std::uint64_t StoredMatrix::load_words() const {
  return words32(static_cast<std::uint64_t>(inner_dim_) * outputs_ * planes_);
}

StoredMatrix load_matrix(const IntMatrix& m, int fmt_bits, const CimaConfig& cfg) {
  cfg.validate();
  if (fmt_bits < formats::kMinPm1Bits || fmt_bits > formats::kMaxPm1Bits) {
    throw RangeError("unsupported matrix bit width " + std::to_string(fmt_bits));
  }
  if (m.rows <= 0 || m.cols <= 0 || m.data.size() != static_cast<std::size_t>(m.rows) * m.cols) {
    throw DimensionError("matrix must be non-empty and consistently sized");
  }
  const int needed = m.cols * fmt_bits;
  if (needed > cfg.cols) {
    throw CapacityError("matrix needs " + std::to_string(needed) + " columns (" + std::to_string(m.cols) +
                        " outputs x " + std::to_string(fmt_bits) + " bit-planes) but the array has " +
                        std::to_string(cfg.cols));
  }
  const auto limit = formats::pm1_limit(fmt_bits);
  for (auto v : m.data) {
    if (v > limit || v < -limit) {
      throw RangeError("matrix element " + std::to_string(v) + " outside the " + std::to_string(fmt_bits) +
                       "-bit +/-1 range");
    }
  }

  StoredMatrix sm;
  sm.inner_dim_ = m.rows;
  sm.outputs_ = m.cols;
  sm.planes_ = fmt_bits;
  sm.rows_per_tile_ = cfg.rows;
  sm.source_ = m;
  const int tiles = (m.rows + cfg.rows - 1) / cfg.rows;
  std::size_t total = 0;
  for (int t = 0; t < tiles; ++t) {
    const int rows = std::min(cfg.rows, m.rows - t * cfg.rows);
    sm.tile_rows_.push_back(rows);
    sm.tile_offset_.push_back(total);
    total += static_cast<std::size_t>((rows + 63) / 64) * static_cast<std::size_t>(needed);
  }
  sm.bits_.assign(total, 0);
  for (int r = 0; r < m.rows; ++r) {
    const int t = r / cfg.rows;
    const int lr = r % cfg.rows;
    for (int n = 0; n < m.cols; ++n) {
      const std::uint32_t pattern = formats::pm1_pattern(m.at(r, n), fmt_bits);
      for (int j = 0; j < fmt_bits; ++j) {
        if ((pattern >> j) & 1U) {
          sm.bits_[sm.offset(t, n, j) + static_cast<std::size_t>(lr >> 6)] |= std::uint64_t{1} << (lr & 63);
        }
      }
    }
  }
  return sm;
}

std::uint64_t PartitionedMatrix::load_words() const {
  std::uint64_t total = 0;
  for (const auto& g : groups) total += g.load_words();
  return total;
}

PartitionedMatrix load_partitioned(const IntMatrix& m, int fmt_bits, const CimaConfig& cfg) {
  cfg.validate();
  const int per_group = cfg.cols / std::max(fmt_bits, 1);
  if (per_group == 0) {
    throw CapacityError("a single " + std::to_string(fmt_bits) + "-bit output does not fit " +
                        std::to_string(cfg.cols) + " columns");
  }
  if (m.rows <= 0 || m.cols <= 0) throw DimensionError("matrix must be non-empty");
  PartitionedMatrix pm;
  pm.inner_dim = m.rows;
  pm.outputs = m.cols;
  pm.planes = fmt_bits;
  for (int first = 0; first < m.cols; first += per_group) {
    const int width = std::min(per_group, m.cols - first);
    IntMatrix part(m.rows, width);
    for (int r = 0; r < m.rows; ++r) {
      for (int c = 0; c < width; ++c) part.at(r, c) = m.at(r, first + c);
    }
    pm.groups.push_back(load_matrix(part, fmt_bits, cfg));
    pm.first_output.push_back(first);
  }
  return pm;
}

// ---------------------------------------------------------------------------

int xnor_count(std::span<const std::uint64_t> sign, std::span<const std::uint64_t> mask,
               std::span<const std::uint64_t> stored) {
  int count = 0;
  const std::size_t n = stored.size();
  for (std::size_t w = 0; w < n; ++w) count += std::popcount(~(sign[w] ^ stored[w]) & mask[w]);
  return count;
}

AdcReading adc_convert(double count, const vref::References& refs, const CimaConfig& cfg) {
  if (!(refs.vp > refs.vn)) {
    throw ParameterError("degenerate ADC references: V_Ref,p must exceed V_Ref,n");
  }
  const double counts_per_volt = cfg.rows / cfg.v_dd;
  const double vp_c = refs.vp * counts_per_volt;
  const double vn_c = refs.vn * counts_per_volt;
  const int top = cfg.max_code();
  const double y = (count - vn_c) * top / (vp_c - vn_c);
  const double tol = kCountEps * std::max(1.0, vp_c);
  AdcReading reading;
  reading.vref_p = refs.vp;
  reading.vref_n = refs.vn;
  reading.clipped = count < vn_c - tol || count > vp_c + tol;
  reading.code = static_cast<int>(std::clamp(std::floor(y + kCountEps), 0.0, static_cast<double>(top)));
  return reading;
}

std::vector<AdcReading> column_cycle(const StoredMatrix& sm, int tile, const InputPlane& plane,
                                     const vref::References& refs, const CimaConfig& cfg,
                                     std::uint64_t stream) {
  if (tile < 0 || tile >= sm.tiles()) throw DimensionError("tile index out of range");
  const auto words = static_cast<std::size_t>(sm.tile_words(tile));
  if (plane.sign.size() < words || plane.mask.size() < words) {
    throw DimensionError("input plane narrower than the tile");
  }
  if (!(refs.vp > refs.vn)) {
    throw ParameterError("degenerate ADC references: V_Ref,p must exceed V_Ref,n");
  }
  std::vector<AdcReading> readings;
  readings.reserve(static_cast<std::size_t>(sm.columns_used()));
  const std::span<const std::uint64_t> s(plane.sign.data(), words);
  const std::span<const std::uint64_t> mk(plane.mask.data(), words);
  for (int n = 0; n < sm.outputs(); ++n) {
    for (int j = 0; j < sm.planes(); ++j) {
      double count = xnor_count(s, mk, sm.column_bits(tile, n, j));
      if (cfg.adc_noise_sigma > 0.0) {
        const auto column = static_cast<std::uint64_t>(StoredMatrix::column(n, j, sm.planes()));
        count += noise_counts(cfg, noise_key(cfg.noise_seed, stream, static_cast<std::uint64_t>(tile), 0, column));
      }
      readings.push_back(adc_convert(count, refs, cfg));
    }
  }
  return readings;
}

std::int64_t reconstruct_signed(const AdcReading& reading, int n_active, const CimaConfig& cfg) {
  if (n_active <= 0) return 0;
  const double counts_per_volt = cfg.rows / cfg.v_dd;
  const double vp_c = reading.vref_p * counts_per_volt;
  const double vn_c = reading.vref_n * counts_per_volt;
  const int top = cfg.max_code();
  const double delta = (vp_c - vn_c) / top;
  const int k = reading.code;
  // Integer counts c with floor((c - vn) / delta) == k; the extreme codes also
  // absorb everything clipped below vn or above vp.
  double lo = k == 0 ? 0.0 : std::ceil(vn_c + k * delta - kCountEps);
  double hi = k == top ? static_cast<double>(n_active) : std::ceil(vn_c + (k + 1) * delta - kCountEps) - 1.0;
  lo = std::max(lo, 0.0);
  hi = std::min(hi, static_cast<double>(n_active));
  if (lo <= hi) return static_cast<std::int64_t>(lo + hi) - n_active;
  // No integer count lands on this code (only reachable with noise or a
  // sub-count step); use the nearest count to the bin centre.
  const double mid = std::clamp(vn_c + (k + 0.5) * delta, 0.0, static_cast<double>(n_active));
  return 2 * static_cast<std::int64_t>(std::llround(mid)) - n_active;
}

double code_step(const vref::References& refs, const CimaConfig& cfg) {
  return (refs.vp - refs.vn) * cfg.rows / cfg.v_dd / cfg.max_code();
}

bool exact_cycle(const vref::References& refs, int n_active, const CimaConfig& cfg) {
  const double counts_per_volt = cfg.rows / cfg.v_dd;
  const double vp_c = refs.vp * counts_per_volt;
  const double vn_c = refs.vn * counts_per_volt;
  return code_step(refs, cfg) <= 1.0 + kCountEps && vn_c <= kCountEps && n_active <= vp_c + kCountEps * std::max(1.0, vp_c);
}

// ---------------------------------------------------------------------------

MvmResult mvm_batch(InputFormat fmt, std::span<const std::int32_t> inputs, int num_vectors,
                    const PartitionedMatrix& m, const vref::VrefPolicy& policy, const CimaConfig& cfg,
                    const MvmOptions& opts) {
  GroupView view{m.groups, m.first_output, m.inner_dim, m.outputs, m.planes};
  return run_batch(fmt, inputs, num_vectors, view, policy, cfg, opts);
}

MvmResult mvm_forward(const formats::QuantizedTensor& act, const StoredMatrix& w,
                      const vref::VrefPolicy& policy, const CimaConfig& cfg, const MvmOptions& opts) {
  if (act.values.size() != static_cast<std::size_t>(w.inner_dim())) {
    throw DimensionError("activation length " + std::to_string(act.values.size()) +
                         " does not match matrix inner dimension " + std::to_string(w.inner_dim()));
  }
  static const int kZero = 0;
  GroupView view{{&w, 1}, {&kZero, 1}, w.inner_dim(), w.outputs(), w.planes()};
  return run_batch(InputFormat::pm1(formats::kActivationBits), act.values, 1, view, policy, cfg, opts);
}

MvmResult mvm_radix4(std::span<const formats::Radix4Code> grads, const StoredMatrix& m,
                     const vref::VrefPolicy& policy, const CimaConfig& cfg, double output_scale,
                     const MvmOptions& opts) {
  if (grads.size() != static_cast<std::size_t>(m.inner_dim())) {
    throw DimensionError("gradient length " + std::to_string(grads.size()) +
                         " does not match matrix inner dimension " + std::to_string(m.inner_dim()));
  }
  std::vector<std::int32_t> x64(grads.size());
  std::transform(grads.begin(), grads.end(), x64.begin(), [](const auto& c) { return c.value_x64(); });
  static const int kZero = 0;
  GroupView view{{&m, 1}, {&kZero, 1}, m.inner_dim(), m.outputs(), m.planes()};
  auto result = run_batch(InputFormat::radix4(), x64, 1, view, policy, cfg, opts);
  for (auto& v : result.values) v *= output_scale;
  return result;
}

std::vector<std::int64_t> exact_mvm(std::span<const std::int64_t> a, const IntMatrix& m) {
  if (a.size() != static_cast<std::size_t>(m.rows)) {
    throw DimensionError("vector length " + std::to_string(a.size()) + " does not match matrix rows " +
                         std::to_string(m.rows));
  }
  std::vector<std::int64_t> out(static_cast<std::size_t>(m.cols), 0);
  for (int r = 0; r < m.rows; ++r) {
    const std::int64_t x = a[static_cast<std::size_t>(r)];
    if (x == 0) continue;
    for (int c = 0; c < m.cols; ++c) {
      if (__builtin_add_overflow(out[static_cast<std::size_t>(c)], x * m.at(r, c), &out[static_cast<std::size_t>(c)])) {
        throw RangeError("exact_mvm accumulator overflow");
      }
    }
  }
  return out;
}

}  // namespace imcsim::imc
