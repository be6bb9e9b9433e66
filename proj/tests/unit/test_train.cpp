#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "imcsim/error.hpp"
#include "imcsim/train.hpp"

using namespace imcsim;
using namespace imcsim::train;

namespace {

LayerSpec layer(LayerKind kind, int units = 0) {
  LayerSpec l;
  l.kind = kind;
  l.units = units;
  return l;
}

// conv(3) bn relu conv(4) bn relu pool dense(3) on 4x4x2 inputs. The middle
// conv is the only layer that may be routed to the array.
ModelSpec tiny_model() {
  ModelSpec m;
  m.name = "tiny";
  m.in_h = m.in_w = 4;
  m.in_c = 2;
  m.layers = {layer(LayerKind::kConv3x3, 3), layer(LayerKind::kBatchNorm), layer(LayerKind::kRelu),
              layer(LayerKind::kConv3x3, 4), layer(LayerKind::kBatchNorm), layer(LayerKind::kRelu),
              layer(LayerKind::kMaxPool2x2), layer(LayerKind::kDense, 3)};
  return m;
}

ModelSpec routed(Route fwd, Route bwd, Route wu) {
  auto m = tiny_model();
  m.layers[3].routing = {fwd, bwd, wu};
  return m;
}

Tensor random_input(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor x(n, 4, 4, 2);
  for (auto& v : x.data) v = u(rng);
  return x;
}

double loss_of(Network& net, const Tensor& x, const std::vector<int>& labels, ExecContext& ctx) {
  const auto logits = net.forward(x, true, ctx);
  Tensor g;
  int correct = 0;
  return softmax_cross_entropy(logits, labels, g, correct);
}

}  // namespace

TEST(Network, FiniteDifferenceGradients) {
  Network net(tiny_model(), 3);
  ExecContext ctx;
  const auto x = random_input(5, 1);
  const std::vector<int> labels{0, 1, 2, 1, 0};
  const auto logits = net.forward(x, true, ctx);
  Tensor g;
  int correct = 0;
  softmax_cross_entropy(logits, labels, g, correct);
  net.backward(g, ctx);
  auto params = net.params();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].value.size(); ++i) {
      const double keep = params[k].value[i];
      params[k].value[i] = keep + eps;
      const double up = loss_of(net, x, labels, ctx);
      params[k].value[i] = keep - eps;
      const double down = loss_of(net, x, labels, ctx);
      params[k].value[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double err = std::abs(numeric - analytic[k][i]) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
      EXPECT_LT(err, 1e-4) << params[k].name << "[" << i << "]";
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Network, ArrayForwardMatchesQuantizedFloat) {
  // Both networks quantize the middle conv's inputs and weights; only the
  // first runs its forward MVM on the array. Patches hold 27 rows, so every
  // cycle is exact under variable references.
  Network imc(routed(Route::kImc, Route::kFloat, Route::kFloat), 5);
  Network flt(routed(Route::kFloat, Route::kImc, Route::kImc), 5);
  ExecContext ctx;
  const auto x = random_input(4, 2);
  const auto a = imc.forward(x, true, ctx);
  const auto b = flt.forward(x, true, ctx);
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-9 * std::max(1.0, std::abs(b.data[i])));
}

TEST(Network, ZeroGradientIssuesNoArrayCycles) {
  Network net(routed(Route::kImc, Route::kImc, Route::kImc), 1);
  energy::EnergyLedger ledger;
  ExecContext ctx;
  const auto x = random_input(2, 6);
  const auto logits = net.forward(x, true, ctx);
  ctx.ledger = &ledger;
  net.backward(Tensor(logits.n, logits.h, logits.w, logits.c), ctx);
  for (const auto& e : ledger.entries()) {
    if (e.device == energy::Device::kImc) EXPECT_EQ(e.counts.adc_samples, 0u) << e.layer << " " << to_string(e.mvm);
  }
  for (auto& p : net.params()) {
    if (p.name.find("weight") == std::string::npos) continue;
    for (double v : p.grad) EXPECT_EQ(v, 0.0);
  }
}

TEST(Network, CheckpointRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "imcsim_tiny.bin";
  Network a(tiny_model(), 11);
  a.save(path.string());
  Network b(tiny_model(), 12);
  b.load(path.string());
  ExecContext ctx;
  const auto x = random_input(3, 8);
  EXPECT_EQ(a.forward(x, false, ctx).data, b.forward(x, false, ctx).data);
  auto other = tiny_model();
  other.layers[7].units = 5;
  Network c(other, 1);
  EXPECT_THROW(c.load(path.string()), FormatError);
}

TEST(Network, CapturedCodesCountNonzeros) {
  Network net(routed(Route::kImc, Route::kImc, Route::kImc), 2);
  net.capture_gradients = true;
  ExecContext ctx;
  const auto x = random_input(4, 3);
  const auto logits = net.forward(x, true, ctx);
  Tensor g;
  int correct = 0;
  softmax_cross_entropy(logits, std::vector<int>{0, 1, 2, 0}, g, correct);
  net.backward(g, ctx);
  ASSERT_FALSE(net.captured().empty());
  for (const auto& cap : net.captured()) {
    const auto h = vref::sparsity_histogram(cap.codes, cap.vector_length, cap.layer);
    double total = 0.0;
    for (double m : h.mean_active_rows) total += m * static_cast<double>(h.vectors);
    const auto nonzero = std::count_if(cap.codes.begin(), cap.codes.end(), [](std::int32_t v) { return v != 0; });
    EXPECT_NEAR(total, static_cast<double>(nonzero), 1e-9);
  }
}

TEST(Config, RejectsEdgeLayersOnArray) {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.model.layers[0].routing = {Route::kImc, Route::kFloat, Route::kFloat};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.model = tiny_model();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Training, LedgerMacsEqualAcrossKinds) {
  TrainConfig cfg;
  cfg.model = routed(Route::kImc, Route::kImc, Route::kImc);
  cfg.dataset.kind = DatasetSpec::Kind::kTwoClass;
  cfg.dataset.side = 4;
  cfg.dataset.channels = 2;
  cfg.dataset.train_samples = 20;
  cfg.dataset.test_samples = 10;
  cfg.model.layers[7].units = 2;
  cfg.batch_size = 10;
  cfg.epochs = 1;
  const auto r = train_run(cfg);
  std::map<std::string, std::array<std::uint64_t, 3>> macs;
  for (const auto& e : r.ledger.entries()) macs[e.layer][static_cast<std::size_t>(e.mvm)] += e.counts.macs;
  ASSERT_EQ(macs.count("L1"), 1u);
  EXPECT_EQ(macs["L1"][1], 0u);  // the image gradient is never computed
  macs.erase("L1");
  for (const auto& [name, m] : macs) {
    EXPECT_EQ(m[0], m[1]) << name;
    EXPECT_EQ(m[0], m[2]) << name;
  }
}

namespace {

TrainConfig toy(Route inner) {
  TrainConfig cfg;
  ModelSpec m;
  m.name = "toy";
  m.in_h = m.in_w = 8;
  m.in_c = 3;
  m.layers = {layer(LayerKind::kConv3x3, 8), layer(LayerKind::kBatchNorm), layer(LayerKind::kRelu),
              layer(LayerKind::kConv3x3, 8), layer(LayerKind::kBatchNorm), layer(LayerKind::kRelu),
              layer(LayerKind::kMaxPool2x2), layer(LayerKind::kDense, 2)};
  set_inner_routing(m, inner, inner, inner);
  cfg.model = m;
  cfg.dataset.kind = DatasetSpec::Kind::kTwoClass;
  cfg.dataset.train_samples = 200;
  cfg.dataset.test_samples = 100;
  cfg.batch_size = 20;
  cfg.epochs = 10;
  return cfg;
}

}  // namespace

TEST(Training, FloatFitsTwoClassTask) {
  const auto r = train_run(toy(Route::kFloat));
  ASSERT_EQ(r.metrics.size(), 10u);
  EXPECT_EQ(r.metrics.back().train_acc, 1.0);
}

TEST(Training, ArrayRoutingTracksFloatOnTwoClassTask) {
  const auto f = train_run(toy(Route::kFloat));
  const auto i = train_run(toy(Route::kImc));
  EXPECT_GE(i.metrics.back().test_acc, f.metrics.back().test_acc - 0.03);
  EXPECT_GT(i.ledger.total_joules(energy::Device::kImc), 0.0);
  EXPECT_FALSE(i.usage.empty());
}

TEST(Training, RepeatRunsAreIdentical) {
  auto cfg = toy(Route::kImc);
  cfg.epochs = 2;
  cfg.threads = 3;
  const auto a = train_run(cfg);
  cfg.threads = 1;
  const auto b = train_run(cfg);
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  EXPECT_EQ(a.ledger.csv(), b.ledger.csv());
  EXPECT_EQ(vref::usage_csv(a.usage), vref::usage_csv(b.usage));
}

TEST(Training, DatasetShapeMismatchIsConfigError) {
  auto cfg = toy(Route::kFloat);
  cfg.dataset.side = 6;
  EXPECT_THROW(train_run(cfg), ConfigError);
}
