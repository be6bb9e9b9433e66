#pragma once

// The imcsim command line: train, energy, mvm-check and sparsity.
// Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 I/O error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "imcsim/types.hpp"
#include "imcsim/vref.hpp"

namespace imcsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Write through a temporary file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct MvmCheckOptions {
  int dim = 2304;
  int outputs = 4;
  int trials = 100;
  std::string policy = "all";  // variable | fixed | dual | all
  std::string path = "both";   // forward | radix4 | both
  double vp = 0.8;             // fixed vp, variable vp_max, dual vp_high
  double density = 1.0;        // nonzero fraction of radix-4 inputs
  std::uint64_t seed = 1;
  int threads = 1;
  CimaConfig cima;
};

struct MvmCheckRow {
  std::string policy;
  std::string path;
  int trials = 0;
  double max_abs_error = 0.0;
  int guaranteed_trials = 0;  // trials where every cycle is exact by construction
  double guaranteed_max_error = 0.0;
  int bound_violations = 0;  // trials whose error exceeds the per-cycle quantization bound
};

std::vector<MvmCheckRow> mvm_check(const MvmCheckOptions& options);
bool mvm_check_passed(const std::vector<MvmCheckRow>& rows);

}  // namespace imcsim::cli
