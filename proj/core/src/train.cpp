#include "imcsim/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "imcsim/error.hpp"
#include "imcsim/rng.hpp"

namespace imcsim::train {

std::string_view to_string(DatasetSpec::Kind kind) {
  switch (kind) {
    case DatasetSpec::Kind::kCifar10:
      return "cifar10";
    case DatasetSpec::Kind::kSyntheticCifar:
      return "synthetic-cifar";
    case DatasetSpec::Kind::kTwoClass:
      return "two-class";
  }
  return "?";
}

DatasetSpec::Kind parse_dataset_kind(std::string_view name) {
  if (name == "cifar10") return DatasetSpec::Kind::kCifar10;
  if (name == "synthetic-cifar") return DatasetSpec::Kind::kSyntheticCifar;
  if (name == "two-class" || name == "synthetic") return DatasetSpec::Kind::kTwoClass;
  throw ConfigError("dataset.kind: unknown dataset \"" + std::string(name) +
                    "\" (expected cifar10, synthetic-cifar or two-class)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  for (const auto& p : vref) {
    if (!(p.vp > 0.0)) throw ConfigError("vref.vp must be positive");
  }
  try {
    cima.validate();
    factors.validate();
    validate_routing(model);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

DataPair load_datasets(const DatasetSpec& spec) {
  DataPair out;
  switch (spec.kind) {
    case DatasetSpec::Kind::kCifar10:
      out.train = data::load_cifar10(spec.path, data::Split::kTrain, spec.train_per_class);
      out.test = data::load_cifar10(spec.path, data::Split::kTest, spec.test_per_class);
      break;
    case DatasetSpec::Kind::kSyntheticCifar:
      out.train = data::make_synthetic_cifar(spec.train_per_class, data::Split::kTrain, spec.seed);
      out.test = data::make_synthetic_cifar(spec.test_per_class, data::Split::kTest, spec.seed);
      break;
    case DatasetSpec::Kind::kTwoClass: {
      // One draw split in two keeps train and test on the same direction.
      auto all = data::make_two_class(spec.train_samples + spec.test_samples, spec.side, spec.channels, spec.seed);
      const std::size_t cut = static_cast<std::size_t>(spec.train_samples) * all.image_size();
      out.train = all;
      out.test = all;
      out.train.images.assign(all.images.begin(), all.images.begin() + static_cast<std::ptrdiff_t>(cut));
      out.train.labels.assign(all.labels.begin(), all.labels.begin() + spec.train_samples);
      out.test.images.assign(all.images.begin() + static_cast<std::ptrdiff_t>(cut), all.images.end());
      out.test.labels.assign(all.labels.begin() + spec.train_samples, all.labels.end());
      break;
    }
  }
  return out;
}

Tensor make_batch(const data::Dataset& d, std::span<const int> indices) {
  Tensor x(static_cast<int>(indices.size()), d.h, d.w, d.c);
  const std::size_t sz = d.image_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto img = d.image(indices[i]);
    std::copy(img.begin(), img.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * sz));
  }
  return x;
}

namespace {

std::vector<int> labels_of(const data::Dataset& d, std::span<const int> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(d.labels[static_cast<std::size_t>(i)]);
  return out;
}

int argmax_row(const Tensor& logits, int b) {
  const int k = logits.features();
  const double* z = logits.data.data() + static_cast<std::size_t>(b) * k;
  return static_cast<int>(std::max_element(z, z + k) - z);
}

void check_shapes(const TrainConfig& cfg, const data::Dataset& d) {
  if (d.h != cfg.model.in_h || d.w != cfg.model.in_w || d.c != cfg.model.in_c) {
    throw ConfigError("model input " + std::to_string(cfg.model.in_h) + "x" + std::to_string(cfg.model.in_w) + "x" +
                      std::to_string(cfg.model.in_c) + " does not match the dataset images " +
                      std::to_string(d.h) + "x" + std::to_string(d.w) + "x" + std::to_string(d.c));
  }
  if (output_features(cfg.model) != d.classes) {
    throw ConfigError("model produces " + std::to_string(output_features(cfg.model)) + " outputs but the dataset has " +
                      std::to_string(d.classes) + " classes");
  }
  if (d.size() == 0) throw ConfigError("dataset is empty");
}

}  // namespace

double evaluate(Network& net, const data::Dataset& d, int batch_size, ExecContext& ctx) {
  if (d.size() == 0) return 0.0;
  int correct = 0;
  std::vector<int> idx;
  for (int start = 0; start < d.size(); start += batch_size) {
    idx.resize(static_cast<std::size_t>(std::min(batch_size, d.size() - start)));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = net.forward(make_batch(d, idx), false, ctx);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (argmax_row(logits, static_cast<int>(b)) == d.labels[static_cast<std::size_t>(idx[b])]) ++correct;
    }
  }
  return static_cast<double>(correct) / d.size();
}

TrainResult train_run(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const auto data = load_datasets(cfg.dataset);
  return train_run(cfg, data.train, data.test, on_epoch);
}

TrainResult train_run(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& test,
                      const EpochCallback& on_epoch) {
  cfg.validate();
  check_shapes(cfg, train);
  check_shapes(cfg, test);

  TrainResult result{{}, energy::EnergyLedger(cfg.factors), {}, nullptr};
  result.network = std::make_unique<Network>(cfg.model, cfg.seed, cfg.alpha_init);
  Network& net = *result.network;

  ExecContext ctx;
  ctx.cima = cfg.cima;
  ctx.vref = cfg.vref;
  ctx.threads = cfg.threads;

  Sgd sgd(cfg.momentum, cfg.weight_decay);
  auto params = net.params();
  Rng rng(cfg.seed ^ 0x5eedf00dULL);
  std::vector<int> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    result.usage.set_epoch(epoch);
    const double lr = cfg.cosine_schedule
                          ? cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * (epoch - 1) / cfg.epochs))
                          : cfg.learning_rate;
    double loss_sum = 0.0;
    int correct_sum = 0;
    int seen = 0;
    for (int start = 0; start < train.size(); start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, train.size() - start);
      const std::span<const int> idx(order.data() + start, static_cast<std::size_t>(count));
      const auto labels = labels_of(train, idx);
      ctx.ledger = &result.ledger;
      ctx.usage = &result.usage;
      const Tensor logits = net.forward(make_batch(train, idx), true, ctx);
      Tensor grad;
      int correct = 0;
      const double loss = softmax_cross_entropy(logits, labels, grad, correct);
      if (!std::isfinite(loss)) throw Error("training diverged (non-finite loss) in epoch " + std::to_string(epoch));
      net.backward(grad, ctx);
      sgd.step(params, lr);
      loss_sum += loss * count;
      correct_sum += correct;
      seen += count;
    }
    ctx.ledger = nullptr;
    ctx.usage = nullptr;
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / seen;
    m.train_acc = static_cast<double>(correct_sum) / seen;
    m.test_acc = evaluate(net, test, cfg.batch_size, ctx);
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

std::string metrics_csv(std::span<const EpochMetrics> metrics) {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,test_acc\n";
  char buf[128];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", m.epoch, m.train_loss, m.train_acc, m.test_acc);
    out << buf;
  }
  return out.str();
}

std::vector<vref::SparsityHistogram> gradient_sparsity(Network& net, const data::Dataset& d, int batch_size,
                                                       ExecContext& ctx) {
  if (d.size() == 0) throw InputError("sparsity needs a non-empty dataset");
  std::vector<int> idx(static_cast<std::size_t>(std::min(batch_size, d.size())));
  std::iota(idx.begin(), idx.end(), 0);
  const auto labels = labels_of(d, idx);
  const Tensor logits = net.forward(make_batch(d, idx), true, ctx);
  Tensor grad;
  int correct = 0;
  softmax_cross_entropy(logits, labels, grad, correct);
  const bool was = net.capture_gradients;
  net.capture_gradients = true;
  net.backward(grad, ctx);
  net.capture_gradients = was;
  std::vector<vref::SparsityHistogram> out;
  for (const auto& c : net.captured()) out.push_back(vref::sparsity_histogram(c.codes, c.vector_length, c.layer));
  return out;
}

}  // namespace imcsim::train
