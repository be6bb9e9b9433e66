#pragma once

// Trainable network built from a ModelSpec. Every conv/dense layer runs its
// three MVMs (forward, backward, weight update) on either the float route or
// the simulated array, per the layer's routing.
//
// Quantization points on the array routes:
//   - inputs of a layer whose forward or weight-update MVM is on the array are
//     PACT-quantized to [0, 16] with a learnable per-layer alpha;
//   - weights of a layer whose forward or backward MVM is on the array are
//     SAWB-quantized to [-8, 8];
//   - output gradients feeding an array backward or weight-update MVM are
//     radix-4 quantized under the layer's gradscale.
// Float routes of such a layer consume the dequantized activations/weights so
// that both routes see the same forward function. Quantizers use
// straight-through gradients: identity inside the clip range, zero outside,
// and elements at or above alpha feed the alpha gradient.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imcsim/energy.hpp"
#include "imcsim/formats.hpp"
#include "imcsim/model.hpp"
#include "imcsim/tensor.hpp"
#include "imcsim/types.hpp"
#include "imcsim/vref.hpp"

namespace imcsim::train {

/// Everything an MVM call needs besides its operands.
struct ExecContext {
  CimaConfig cima;
  std::array<vref::VrefPolicy, 3> vref{vref::VrefPolicy::variable(0.8), vref::VrefPolicy::variable(0.8),
                                       vref::VrefPolicy::variable(0.8)};
  int threads = 1;
  energy::EnergyLedger* ledger = nullptr;  // training-step energy, when set
  vref::VrefUsageLog* usage = nullptr;     // training-step reference usage, when set
  std::uint64_t noise_stream = 0;          // advanced by every array call

  const vref::VrefPolicy& policy(MvmKind kind) const { return vref[static_cast<std::size_t>(kind)]; }
};

struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool decay = true;  // subject to weight decay
};

class Network {
 public:
  Network(const ModelSpec& spec, std::uint64_t seed, double alpha_init = 4.0);

  const ModelSpec& spec() const { return spec_; }
  int num_classes() const { return output_features(spec_); }

  /// Training mode uses batch statistics and caches what backward needs.
  Tensor forward(const Tensor& x, bool training, ExecContext& ctx);
  /// Gradient of the loss w.r.t. the last forward output. Parameter
  /// gradients are overwritten, not accumulated.
  void backward(const Tensor& grad_out, ExecContext& ctx);

  std::vector<ParamRef> params();
  /// Non-trainable state saved with a checkpoint (batchnorm running stats).
  std::vector<ParamRef> buffers();

  /// Radix-4 codes (times 64) of the streamed backward vectors of every MVM
  /// layer after the first, from the last backward pass, with the vector
  /// length: output-gradient rows for dense layers, backward patches for
  /// convs. Captured only when capture_gradients is set.
  struct GradientCapture {
    std::string layer;
    std::vector<std::int32_t> codes;
    std::size_t vector_length = 0;
  };
  bool capture_gradients = false;
  const std::vector<GradientCapture>& captured() const { return captured_; }

  void save(const std::string& path);
  void load(const std::string& path);

 private:
  struct MvmState {
    MvmLayerShape shape;
    bool first = false;
    std::vector<double> weight;  // D x N row-major
    std::vector<double> weight_grad;
    std::vector<double> alpha{4.0};
    std::vector<double> alpha_grad{0.0};
    formats::GradScaleState gradscale;
    // forward cache
    Tensor input;
    bool quant_in = false;
    bool quant_w = false;
    std::vector<double> patches;        // V x D, dequantized when quant_in
    std::vector<std::int32_t> a_codes;  // V x D, PACT integers
    double a_scale = 1.0;
    std::vector<double> w_eff;
    formats::QuantizedTensor w_q;
    double w_clip = 0.0;
    int out_h = 1;
    int out_w = 1;
  };
  struct BatchNormState {
    int channels = 0;
    std::vector<double> gamma, beta, gamma_grad, beta_grad, running_mean, running_var;
    std::vector<double> xhat, inv_std;
  };
  struct Node {
    LayerSpec spec;
    int mvm = -1;  // index into mvm_
    int bn = -1;   // index into bn_
    Tensor input;  // relu / pool input shape cache
    std::vector<std::size_t> argmax;
  };

  Tensor mvm_forward(MvmState& s, const LayerSpec& spec, const Tensor& x, bool training, ExecContext& ctx);
  Tensor mvm_backward(MvmState& s, const LayerSpec& spec, const Tensor& g, ExecContext& ctx);
  Tensor bn_forward(BatchNormState& s, const Tensor& x, bool training);
  Tensor bn_backward(BatchNormState& s, const Tensor& g);

  ModelSpec spec_;
  std::vector<Node> nodes_;
  std::vector<MvmState> mvm_;
  std::vector<BatchNormState> bn_;
  std::vector<GradientCapture> captured_;
};

/// Mean softmax cross-entropy over the batch; fills grad (same shape as
/// logits) and the number of correct argmax predictions.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad, int& correct);

/// SGD with momentum on a parameter list; velocity holds one buffer per
/// parameter and is sized on first use.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(std::vector<ParamRef>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace imcsim::train
