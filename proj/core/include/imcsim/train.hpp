#pragma once

// Training loop with per-MVM routing between the float route and the
// simulated array.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imcsim/dataset.hpp"
#include "imcsim/energy.hpp"
#include "imcsim/model.hpp"
#include "imcsim/network.hpp"
#include "imcsim/types.hpp"
#include "imcsim/vref.hpp"

namespace imcsim::train {

struct DatasetSpec {
  enum class Kind { kCifar10, kSyntheticCifar, kTwoClass };
  Kind kind = Kind::kSyntheticCifar;
  std::string path;           // CIFAR-10 binary directory
  int train_per_class = 200;  // CIFAR-10 and synthetic-cifar
  int test_per_class = 100;
  int train_samples = 200;  // two-class
  int test_samples = 100;
  int side = 8;  // two-class image side
  int channels = 3;
  std::uint64_t seed = 7;  // synthetic generators only; independent of the run seed
};

std::string_view to_string(DatasetSpec::Kind kind);
/// "cifar10", "synthetic-cifar", "two-class".
DatasetSpec::Kind parse_dataset_kind(std::string_view name);

struct TrainConfig {
  ModelSpec model = desk_model();
  DatasetSpec dataset;
  int batch_size = 50;
  int epochs = 20;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool cosine_schedule = true;
  std::uint64_t seed = 1;
  double alpha_init = 4.0;
  std::array<vref::VrefPolicy, 3> vref{vref::VrefPolicy::variable(0.8), vref::VrefPolicy::variable(0.8),
                                       vref::VrefPolicy::variable(0.8)};
  CimaConfig cima;
  energy::EnergyFactors factors;
  int threads = 1;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // running accuracy over the epoch's training batches
  double test_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  energy::EnergyLedger ledger;
  vref::VrefUsageLog usage;
  std::unique_ptr<Network> network;
};

struct DataPair {
  data::Dataset train;
  data::Dataset test;
};

/// Throws IoError naming the path when CIFAR-10 files are missing.
DataPair load_datasets(const DatasetSpec& spec);

using EpochCallback = std::function<void(const EpochMetrics&)>;

TrainResult train_run(const TrainConfig& cfg, const EpochCallback& on_epoch = {});
TrainResult train_run(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& test,
                      const EpochCallback& on_epoch = {});

/// Batch of images selected by index.
Tensor make_batch(const data::Dataset& d, std::span<const int> indices);
/// Accuracy in inference mode (running batchnorm statistics).
double evaluate(Network& net, const data::Dataset& d, int batch_size, ExecContext& ctx);

/// Header epoch,train_loss,train_acc,test_acc; full-precision decimals.
std::string metrics_csv(std::span<const EpochMetrics> metrics);

/// Per-layer exponent-plane occupancy of the radix-4 backward vectors from
/// one forward/backward pass over the first batch of d. No update is applied.
std::vector<vref::SparsityHistogram> gradient_sparsity(Network& net, const data::Dataset& d, int batch_size,
                                                       ExecContext& ctx);

}  // namespace imcsim::train
