#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "imcsim/types.hpp"

namespace imcsim {

enum class LayerKind { kConv3x3, kDense, kBatchNorm, kRelu, kMaxPool2x2 };

std::string_view to_string(LayerKind kind);
/// "conv3x3", "dense", "batchnorm", "relu", "maxpool2x2".
LayerKind parse_layer_kind(std::string_view name);

enum class Route { kFloat, kImc };

std::string_view to_string(Route route);
Route parse_route(std::string_view name);

/// Conv layers are 3x3, stride 1, same padding, no bias; dense layers have
/// no bias either (a batchnorm follows every MVM layer in the stock models).
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int units = 0;  // filters for conv, neurons for dense
  std::array<Route, 3> routing{Route::kFloat, Route::kFloat, Route::kFloat};

  Route route(MvmKind kind) const { return routing[static_cast<std::size_t>(kind)]; }
  bool is_mvm() const { return kind == LayerKind::kConv3x3 || kind == LayerKind::kDense; }
};

struct ModelSpec {
  std::string name;
  int in_h = 32;
  int in_w = 32;
  int in_c = 3;
  std::vector<LayerSpec> layers;
};

/// Shape of one MVM layer after shape inference.
struct MvmLayerShape {
  int mvm_index = 0;  // 1-based among MVM layers (L1, L2, ...)
  int layer_index = 0;
  LayerKind kind = LayerKind::kDense;
  int in_h = 1;
  int in_w = 1;
  int in_c = 0;       // channels for conv, flattened features for dense
  int out_units = 0;  // C_out or N
  /// Elements per input patch: 9 * C_in for conv, M for dense.
  int patch() const { return kind == LayerKind::kConv3x3 ? 9 * in_c : in_c; }
  /// Output positions per image (H * W for conv, 1 for dense).
  int positions() const { return kind == LayerKind::kConv3x3 ? in_h * in_w : 1; }
  std::string label() const { return "L" + std::to_string(mvm_index); }
};

/// Throws DimensionError when a layer cannot be applied (pooling an odd
/// size, conv after dense, ...).
std::vector<MvmLayerShape> mvm_layers(const ModelSpec& model);

/// Number of output features the model produces.
int output_features(const ModelSpec& model);

/// Throws ConfigError when the first or last MVM layer is routed to IMC or the
/// model contains no MVM layer.
void validate_routing(const ModelSpec& model);

/// Route all MVM layers except the first and last.
void set_inner_routing(ModelSpec& model, Route forward, Route backward, Route weight_update);

/// The 9-layer VGG-lite network (six 3x3 convs, three dense).
ModelSpec vgg_lite();
/// Reduced desk-scale network: convs of 16/32/32 filters, one hidden dense
/// layer and the classifier.
ModelSpec desk_model(int hidden = 64, int classes = 10);

}  // namespace imcsim
