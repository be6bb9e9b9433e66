#include "imcsim/vref.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "imcsim/error.hpp"

namespace imcsim::vref {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kFixed:
      return "fixed";
    case Mode::kVariable:
      return "variable";
    case Mode::kDual:
      return "dual";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  if (name == "fixed") return Mode::kFixed;
  if (name == "variable") return Mode::kVariable;
  if (name == "dual") return Mode::kDual;
  throw ConfigError("unknown mode \"" + std::string(name) +
                    "\" (expected fixed, variable or dual)");
}

double v_prec(const CimaConfig& cfg) { return cfg.v_dd * cfg.max_code() / cfg.rows; }

References select_vref(const VrefPolicy& policy, int n_active, const CimaConfig& cfg) {
  const double prec = v_prec(cfg);
  switch (policy.mode) {
    case Mode::kFixed:
      return {policy.vp, 0.0};
    case Mode::kVariable: {
      const double needed = n_active * cfg.volts_per_count();
      return {std::min(std::max(needed, prec), std::max(policy.vp, prec)), 0.0};
    }
    case Mode::kDual:
      return {n_active <= cfg.max_code() ? prec : policy.vp, 0.0};
  }
  return {policy.vp, 0.0};
}

bool is_high(const References& refs, const CimaConfig& cfg) {
  // Relative tolerance: V_prec itself is computed in floating point.
  return refs.vp - refs.vn > v_prec(cfg) * (1.0 + 1e-9);
}

void VrefUsageLog::record(MvmKind kind, bool high, std::uint64_t vectors) {
  auto& counts = entries_[{epoch_, kind}];
  (high ? counts.high : counts.low) += vectors;
}

void VrefUsageLog::merge(const VrefUsageLog& other) {
  for (const auto& [key, counts] : other.entries_) {
    auto& mine = entries_[key];
    mine.high += counts.high;
    mine.low += counts.low;
  }
}

std::uint64_t VrefUsageLog::total_vectors() const {
  std::uint64_t total = 0;
  for (const auto& [key, counts] : entries_) total += counts.total();
  return total;
}

std::vector<UsageRow> usage_report(const VrefUsageLog& log) {
  std::vector<UsageRow> rows;
  rows.reserve(log.entries().size());
  for (const auto& [key, counts] : log.entries()) {
    UsageRow row;
    row.epoch = key.first;
    row.mvm = key.second;
    row.high_count = counts.high;
    row.low_count = counts.low;
    row.high_fraction =
        counts.total() == 0 ? 0.0 : static_cast<double>(counts.high) / static_cast<double>(counts.total());
    rows.push_back(row);
  }
  return rows;
}

std::string usage_csv(const VrefUsageLog& log) {
  std::ostringstream out;
  out << "epoch,mvm,high_count,low_count,high_fraction\n";
  char buf[64];
  for (const auto& row : usage_report(log)) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.high_fraction);
    out << row.epoch << ',' << to_string(row.mvm) << ',' << row.high_count << ',' << row.low_count
        << ',' << buf << '\n';
  }
  return out.str();
}

SparsityHistogram sparsity_histogram(std::span<const std::int32_t> codes, std::size_t vector_length,
                                     std::string layer) {
  if (codes.empty() || vector_length == 0) throw InputError("sparsity histogram needs a non-empty tensor");
  if (codes.size() % vector_length != 0) {
    throw InputError("gradient tensor of " + std::to_string(codes.size()) +
                     " elements is not a whole number of vectors of length " +
                     std::to_string(vector_length));
  }
  SparsityHistogram hist;
  hist.layer = std::move(layer);
  hist.vectors = codes.size() / vector_length;
  std::array<std::uint64_t, formats::kRadix4Planes> tally{};
  for (std::int32_t v : codes) {
    const int plane = formats::radix4_from_x64(v).plane();
    if (plane >= 0) ++tally[static_cast<std::size_t>(plane)];
  }
  for (std::size_t e = 0; e < tally.size(); ++e) {
    hist.mean_active_rows[e] = static_cast<double>(tally[e]) / static_cast<double>(hist.vectors);
  }
  return hist;
}

std::string sparsity_csv(std::span<const SparsityHistogram> histograms) {
  std::ostringstream out;
  out << "layer,exponent_bit,mean_active_rows\n";
  char buf[64];
  for (const auto& h : histograms) {
    for (std::size_t e = 0; e < h.mean_active_rows.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%.17g", h.mean_active_rows[e]);
      out << h.layer << ',' << e << ',' << buf << '\n';
    }
  }
  return out.str();
}

}  // namespace imcsim::vref
