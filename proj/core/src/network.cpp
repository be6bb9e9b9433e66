#include "imcsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "imcsim/error.hpp"
#include "imcsim/imc_array.hpp"
#include "imcsim/rng.hpp"

namespace imcsim::train {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr char kCheckpointMagic[8] = {'I', 'M', 'C', 'S', 'I', 'M', 'W', '1'};

bool on_array(const LayerSpec& spec, MvmKind kind) { return spec.route(kind) == Route::kImc; }

imc::MvmOptions options(MvmKind kind, ExecContext& ctx, bool training, std::uint64_t vectors) {
  imc::MvmOptions opts;
  opts.kind = kind;
  opts.usage = training ? ctx.usage : nullptr;
  opts.threads = ctx.threads;
  opts.noise_stream = ctx.noise_stream;
  ctx.noise_stream += vectors;
  return opts;
}

imc::IntMatrix int_matrix(int rows, int cols, std::vector<std::int32_t> data) {
  imc::IntMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data = std::move(data);
  return m;
}

void charge(ExecContext& ctx, bool training, const MvmLayerShape& shape, MvmKind kind, energy::Device device,
            const EnergyCounts& counts) {
  if (training && ctx.ledger != nullptr) ctx.ledger->add(shape.label(), kind, device, counts);
}

EnergyCounts gpu_counts(std::uint64_t macs) {
  EnergyCounts c;
  c.macs = macs;
  return c;
}

}  // namespace

Network::Network(const ModelSpec& spec, std::uint64_t seed, double alpha_init) : spec_(spec) {
  validate_routing(spec_);
  if (!(alpha_init > 0.0)) throw ParameterError("PACT alpha must start positive");
  const auto shapes = mvm_layers(spec_);
  Rng rng(seed);
  int channels = spec_.in_c;
  std::size_t next_shape = 0;
  for (const auto& layer : spec_.layers) {
    Node node;
    node.spec = layer;
    if (layer.is_mvm()) {
      MvmState s;
      s.shape = shapes[next_shape];
      s.first = next_shape == 0;
      ++next_shape;
      const int d = s.shape.patch();
      const int n = s.shape.out_units;
      s.weight.resize(static_cast<std::size_t>(d) * n);
      const double sd = std::sqrt(2.0 / d);
      for (auto& w : s.weight) w = rng.normal(0.0, sd);
      s.weight_grad.assign(s.weight.size(), 0.0);
      s.alpha = {alpha_init};
      node.mvm = static_cast<int>(mvm_.size());
      mvm_.push_back(std::move(s));
      channels = layer.units;
    } else if (layer.kind == LayerKind::kBatchNorm) {
      BatchNormState b;
      b.channels = channels;
      b.gamma.assign(static_cast<std::size_t>(channels), 1.0);
      b.beta.assign(static_cast<std::size_t>(channels), 0.0);
      b.gamma_grad.assign(static_cast<std::size_t>(channels), 0.0);
      b.beta_grad.assign(static_cast<std::size_t>(channels), 0.0);
      b.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
      b.running_var.assign(static_cast<std::size_t>(channels), 1.0);
      node.bn = static_cast<int>(bn_.size());
      bn_.push_back(std::move(b));
    }
    nodes_.push_back(std::move(node));
  }
}

// ---------------------------------------------------------------------------

Tensor Network::mvm_forward(MvmState& s, const LayerSpec& spec, const Tensor& x, bool training,
                            ExecContext& ctx) {
  const auto& sh = s.shape;
  const bool conv = sh.kind == LayerKind::kConv3x3;
  if (conv ? (x.h != sh.in_h || x.w != sh.in_w || x.c != sh.in_c) : x.features() != sh.in_c) {
    throw DimensionError("layer " + sh.label() + ": input shape mismatch");
  }
  const int batch = x.n;
  const int V = batch * sh.positions();
  const int D = sh.patch();
  const int N = sh.out_units;

  s.quant_in = on_array(spec, MvmKind::kForward) || on_array(spec, MvmKind::kWeightUpdate);
  s.quant_w = on_array(spec, MvmKind::kForward) || on_array(spec, MvmKind::kBackward);

  std::vector<double> x_eff;
  std::vector<std::int32_t> a_int;
  if (s.quant_in) {
    auto q = formats::pact_quantize(x.data, s.alpha[0]);
    x_eff = q.dequantize();
    s.a_scale = q.scale;
    a_int = std::move(q.values);
  } else {
    x_eff = x.data;
    s.a_scale = 1.0;
  }
  if (conv) {
    s.patches = im2col3x3<double>(x_eff, batch, x.h, x.w, x.c);
    s.a_codes = s.quant_in ? im2col3x3<std::int32_t>(a_int, batch, x.h, x.w, x.c) : std::vector<std::int32_t>{};
  } else {
    s.patches = std::move(x_eff);
    s.a_codes = std::move(a_int);
  }

  if (s.quant_w) {
    s.w_clip = formats::sawb_clip(s.weight);
    s.w_q = formats::symmetric_quantize(s.weight, s.w_clip);
    s.w_eff = s.w_q.dequantize();
  } else {
    s.w_eff = s.weight;
  }

  s.out_h = conv ? x.h : 1;
  s.out_w = conv ? x.w : 1;
  Tensor y(batch, s.out_h, s.out_w, N);
  if (on_array(spec, MvmKind::kForward)) {
    const auto stored = imc::load_partitioned(int_matrix(D, N, s.w_q.values), formats::kWeightBits, ctx.cima);
    const auto r = imc::mvm_batch(imc::InputFormat::pm1(formats::kActivationBits), s.a_codes, V, stored,
                                  ctx.policy(MvmKind::kForward), ctx.cima,
                                  options(MvmKind::kForward, ctx, training, static_cast<std::uint64_t>(V)));
    const double scale = s.a_scale * s.w_q.scale;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = r.values[i] * scale;
    charge(ctx, training, sh, MvmKind::kForward, energy::Device::kImc, r.counts);
  } else {
    matmul(s.patches, s.w_eff, y.data, V, D, N);
    charge(ctx, training, sh, MvmKind::kForward, energy::Device::kGpu,
           gpu_counts(static_cast<std::uint64_t>(V) * D * N));
  }
  if (training) s.input = x;
  return y;
}

Tensor Network::mvm_backward(MvmState& s, const LayerSpec& spec, const Tensor& g, ExecContext& ctx) {
  const auto& sh = s.shape;
  const bool conv = sh.kind == LayerKind::kConv3x3;
  const int batch = s.input.n;
  const int V = batch * sh.positions();
  const int D = sh.patch();
  const int N = sh.out_units;
  if (g.size() != static_cast<std::size_t>(V) * N) throw DimensionError("layer " + sh.label() + ": gradient shape");

  const bool bwd_imc = on_array(spec, MvmKind::kBackward);
  const bool wu_imc = on_array(spec, MvmKind::kWeightUpdate);
  const bool capture = capture_gradients && !s.first;
  formats::QuantizedTensor gq;
  if (bwd_imc || wu_imc || capture) {
    s.gradscale = formats::gradscale_update(s.gradscale, g.data);
    gq = formats::radix4_quantize(g.data, s.gradscale);
  }
  const double g_unit = 64.0 * gq.scale;  // real value of one decoded radix-4 unit

  // Weight update: dW (D x N) = patches^T * G.
  s.weight_grad.assign(static_cast<std::size_t>(D) * N, 0.0);
  if (wu_imc) {
    const auto stored =
        imc::load_partitioned(int_matrix(V, D, s.a_codes), formats::kActivationBits, ctx.cima);
    const auto gt = transpose<std::int32_t>(gq.values, V, N);
    const auto r = imc::mvm_batch(imc::InputFormat::radix4(), gt, N, stored, ctx.policy(MvmKind::kWeightUpdate),
                                  ctx.cima, options(MvmKind::kWeightUpdate, ctx, true, static_cast<std::uint64_t>(N)));
    const double scale = g_unit * s.a_scale;
    for (int n = 0; n < N; ++n) {
      for (int d = 0; d < D; ++d) {
        s.weight_grad[static_cast<std::size_t>(d) * N + n] = r.values[static_cast<std::size_t>(n) * D + d] * scale;
      }
    }
    charge(ctx, true, sh, MvmKind::kWeightUpdate, energy::Device::kImc, r.counts);
  } else {
    matmul_tn(s.patches, g.data, s.weight_grad, V, D, N);
    charge(ctx, true, sh, MvmKind::kWeightUpdate, energy::Device::kGpu,
           gpu_counts(static_cast<std::uint64_t>(V) * D * N));
  }
  if (s.quant_w) {
    for (std::size_t i = 0; i < s.weight.size(); ++i) {
      if (std::abs(s.weight[i]) > s.w_clip) s.weight_grad[i] = 0.0;
    }
  }

  s.alpha_grad[0] = 0.0;
  if (s.first) return {};  // the image needs no gradient

  // Backward inner dim is 9*C_out (conv) or N (dense); outputs are C_in or M.
  const int in_c = sh.in_c;
  const int inner = conv ? 9 * N : N;
  const int outs = sh.in_c;
  std::vector<double> dx_eff(static_cast<std::size_t>(V) * outs);
  std::vector<std::int32_t> streamed;
  if (bwd_imc || capture) {
    streamed = conv ? backward_patches3x3<std::int32_t>(gq.values, batch, s.out_h, s.out_w, N) : gq.values;
  }
  if (bwd_imc) {
    const auto wb = conv ? flip_kernel3x3<std::int32_t>(s.w_q.values, in_c, N)
                         : transpose<std::int32_t>(s.w_q.values, D, N);
    const auto stored = imc::load_partitioned(int_matrix(inner, outs, wb), formats::kWeightBits, ctx.cima);
    const auto r = imc::mvm_batch(imc::InputFormat::radix4(), streamed, V, stored, ctx.policy(MvmKind::kBackward),
                                  ctx.cima, options(MvmKind::kBackward, ctx, true, static_cast<std::uint64_t>(V)));
    const double scale = g_unit * s.w_q.scale;
    for (std::size_t i = 0; i < dx_eff.size(); ++i) dx_eff[i] = r.values[i] * scale;
    charge(ctx, true, sh, MvmKind::kBackward, energy::Device::kImc, r.counts);
  } else {
    if (conv) {
      const auto bp = backward_patches3x3<double>(g.data, batch, s.out_h, s.out_w, N);
      const auto wb = flip_kernel3x3<double>(s.w_eff, in_c, N);
      matmul(bp, wb, dx_eff, V, inner, outs);
    } else {
      matmul(g.data, transpose<double>(s.w_eff, D, N), dx_eff, V, inner, outs);
    }
    charge(ctx, true, sh, MvmKind::kBackward, energy::Device::kGpu,
           gpu_counts(static_cast<std::uint64_t>(V) * D * N));
  }
  if (capture) captured_.push_back({sh.label(), std::move(streamed), static_cast<std::size_t>(inner)});

  Tensor dx(s.input.n, s.input.h, s.input.w, s.input.c);
  if (s.quant_in) {
    const double alpha = s.alpha[0];
    double alpha_grad = 0.0;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      const double a = s.input.data[i];
      if (a >= alpha) {
        alpha_grad += dx_eff[i];
      } else if (a > 0.0) {
        dx.data[i] = dx_eff[i];
      }
    }
    s.alpha_grad[0] = alpha_grad;
  } else {
    dx.data = std::move(dx_eff);
  }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor Network::bn_forward(BatchNormState& s, const Tensor& x, bool training) {
  if (x.c != s.channels) throw DimensionError("batchnorm channel mismatch");
  const int C = s.channels;
  const std::size_t m = x.size() / static_cast<std::size_t>(C);
  Tensor y(x.n, x.h, x.w, x.c);
  std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
  std::vector<double> var(static_cast<std::size_t>(C), 0.0);
  if (training) {
    for (std::size_t i = 0; i < x.size(); ++i) mean[i % C] += x.data[i];
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x.data[i] - mean[i % C];
      var[i % C] += d * d;
    }
    for (auto& v : var) v /= static_cast<double>(m);
    const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
    for (int c = 0; c < C; ++c) {
      const auto k = static_cast<std::size_t>(c);
      s.running_mean[k] = (1.0 - kBnMomentum) * s.running_mean[k] + kBnMomentum * mean[k];
      s.running_var[k] = (1.0 - kBnMomentum) * s.running_var[k] + kBnMomentum * var[k] * unbias;
    }
  } else {
    mean = s.running_mean;
    var = s.running_var;
  }
  s.inv_std.resize(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) s.inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + kBnEps);
  if (training) s.xhat.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = i % C;
    const double xh = (x.data[i] - mean[c]) * s.inv_std[c];
    if (training) s.xhat[i] = xh;
    y.data[i] = s.gamma[c] * xh + s.beta[c];
  }
  return y;
}

Tensor Network::bn_backward(BatchNormState& s, const Tensor& g) {
  const int C = s.channels;
  const std::size_t m = g.size() / static_cast<std::size_t>(C);
  std::fill(s.gamma_grad.begin(), s.gamma_grad.end(), 0.0);
  std::fill(s.beta_grad.begin(), s.beta_grad.end(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    s.gamma_grad[i % C] += g.data[i] * s.xhat[i];
    s.beta_grad[i % C] += g.data[i];
  }
  Tensor dx(g.n, g.h, g.w, g.c);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t c = i % C;
    // dxhat = g * gamma; sums of dxhat and dxhat*xhat reuse the param grads.
    const double sum_dxhat = s.beta_grad[c] * s.gamma[c];
    const double sum_dxhat_xhat = s.gamma_grad[c] * s.gamma[c];
    dx.data[i] = s.inv_std[c] * inv_m *
                 (static_cast<double>(m) * g.data[i] * s.gamma[c] - sum_dxhat - s.xhat[i] * sum_dxhat_xhat);
  }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor Network::forward(const Tensor& x, bool training, ExecContext& ctx) {
  if (x.h != spec_.in_h || x.w != spec_.in_w || x.c != spec_.in_c) throw DimensionError("network input shape");
  Tensor cur = x;
  for (auto& node : nodes_) {
    switch (node.spec.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kDense:
        cur = mvm_forward(mvm_[static_cast<std::size_t>(node.mvm)], node.spec, cur, training, ctx);
        break;
      case LayerKind::kBatchNorm:
        cur = bn_forward(bn_[static_cast<std::size_t>(node.bn)], cur, training);
        break;
      case LayerKind::kRelu:
        if (training) node.input = cur;
        for (auto& v : cur.data) v = std::max(v, 0.0);
        break;
      case LayerKind::kMaxPool2x2: {
        Tensor out(cur.n, cur.h / 2, cur.w / 2, cur.c);
        if (training) node.argmax.assign(out.size(), 0);
        std::size_t o = 0;
        for (int b = 0; b < cur.n; ++b) {
          for (int y = 0; y < out.h; ++y) {
            for (int xx = 0; xx < out.w; ++xx) {
              for (int c = 0; c < cur.c; ++c, ++o) {
                std::size_t best = cur.index(b, 2 * y, 2 * xx, c);
                for (int dy = 0; dy < 2; ++dy) {
                  for (int dx = 0; dx < 2; ++dx) {
                    const std::size_t idx = cur.index(b, 2 * y + dy, 2 * xx + dx, c);
                    if (cur.data[idx] > cur.data[best]) best = idx;
                  }
                }
                out.data[o] = cur.data[best];
                if (training) node.argmax[o] = best;
              }
            }
          }
        }
        if (training) node.input = Tensor(cur.n, cur.h, cur.w, cur.c);
        cur = std::move(out);
        break;
      }
    }
  }
  return cur;
}

void Network::backward(const Tensor& grad_out, ExecContext& ctx) {
  captured_.clear();
  Tensor g = grad_out;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = *it;
    switch (node.spec.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kDense:
        g = mvm_backward(mvm_[static_cast<std::size_t>(node.mvm)], node.spec, g, ctx);
        break;
      case LayerKind::kBatchNorm:
        g = bn_backward(bn_[static_cast<std::size_t>(node.bn)], g);
        break;
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!(node.input.data[i] > 0.0)) g.data[i] = 0.0;
        }
        break;
      case LayerKind::kMaxPool2x2: {
        Tensor dx(node.input.n, node.input.h, node.input.w, node.input.c);
        for (std::size_t o = 0; o < g.size(); ++o) dx.data[node.argmax[o]] += g.data[o];
        g = std::move(dx);
        break;
      }
    }
  }
  std::reverse(captured_.begin(), captured_.end());
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& s : mvm_) {
    out.push_back({s.shape.label() + ".weight", s.weight, s.weight_grad, true});
    const auto& spec = spec_.layers[static_cast<std::size_t>(s.shape.layer_index)];
    if (on_array(spec, MvmKind::kForward) || on_array(spec, MvmKind::kWeightUpdate)) {
      out.push_back({s.shape.label() + ".alpha", s.alpha, s.alpha_grad, true});
    }
  }
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    const std::string name = "bn" + std::to_string(i + 1);
    out.push_back({name + ".gamma", bn_[i].gamma, bn_[i].gamma_grad, false});
    out.push_back({name + ".beta", bn_[i].beta, bn_[i].beta_grad, false});
  }
  return out;
}

std::vector<ParamRef> Network::buffers() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    const std::string name = "bn" + std::to_string(i + 1);
    out.push_back({name + ".running_mean", bn_[i].running_mean, {}, false});
    out.push_back({name + ".running_var", bn_[i].running_var, {}, false});
  }
  return out;
}

void Network::save(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  auto entries = params();
  for (auto& b : buffers()) entries.push_back(b);
  const auto count = static_cast<std::uint64_t>(entries.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& e : entries) {
    const auto len = static_cast<std::uint32_t>(e.name.size());
    const auto size = static_cast<std::uint64_t>(e.value.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(e.name.data(), len);
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(reinterpret_cast<const char*>(e.value.data()), static_cast<std::streamsize>(size * sizeof(double)));
  }
  if (!out) throw IoError("error writing checkpoint " + path);
}

void Network::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw FormatError(path + ": not a checkpoint");
  auto entries = params();
  for (auto& b : buffers()) entries.push_back(b);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != entries.size()) throw FormatError(path + ": checkpoint does not match the model");
  for (auto& e : entries) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint64_t size = 0;
    in.read(reinterpret_cast<char*>(&size), sizeof(size));
    if (!in || name != e.name || size != e.value.size()) {
      throw FormatError(path + ": checkpoint entry " + name + " does not match " + e.name);
    }
    in.read(reinterpret_cast<char*>(e.value.data()), static_cast<std::streamsize>(size * sizeof(double)));
    if (!in) throw FormatError(path + ": truncated checkpoint");
  }
}

// ---------------------------------------------------------------------------

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad, int& correct) {
  const int B = logits.n;
  const int K = logits.features();
  if (labels.size() != static_cast<std::size_t>(B)) throw DimensionError("label count does not match batch");
  grad = Tensor(logits.n, logits.h, logits.w, logits.c);
  correct = 0;
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* z = logits.data.data() + static_cast<std::size_t>(b) * K;
    double* gz = grad.data.data() + static_cast<std::size_t>(b) * K;
    const int label = labels[static_cast<std::size_t>(b)];
    if (label < 0 || label >= K) throw RangeError("label outside the class range");
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(z[k] - zmax);
    const double log_sum = std::log(sum) + zmax;
    loss += log_sum - z[label];
    for (int k = 0; k < K; ++k) gz[k] = std::exp(z[k] - log_sum) / B;
    gz[label] -= 1.0 / B;
    if (std::max_element(z, z + K) - z == label) ++correct;
  }
  return loss / B;
}

void Sgd::step(std::vector<ParamRef>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.emplace_back(p.value.size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double grad = p.grad[j] + (p.decay ? weight_decay_ * p.value[j] : 0.0);
      v[j] = momentum_ * v[j] + grad;
      p.value[j] -= lr * v[j];
    }
  }
  for (auto& p : params) {
    if (p.name.ends_with(".alpha")) p.value[0] = std::max(p.value[0], 1e-3);
  }
}

}  // namespace imcsim::train
