#include "imcsim/model.hpp"

#include "imcsim/error.hpp"

namespace imcsim {

std::string_view to_string(MvmKind kind) {
  switch (kind) {
    case MvmKind::kForward:
      return "forward";
    case MvmKind::kBackward:
      return "backward";
    case MvmKind::kWeightUpdate:
      return "weight_update";
  }
  return "?";
}

MvmKind parse_mvm_kind(std::string_view name) {
  if (name == "forward") return MvmKind::kForward;
  if (name == "backward") return MvmKind::kBackward;
  if (name == "weight_update") return MvmKind::kWeightUpdate;
  throw ConfigError("unknown MVM kind \"" + std::string(name) + "\"");
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv3x3:
      return "conv3x3";
    case LayerKind::kDense:
      return "dense";
    case LayerKind::kBatchNorm:
      return "batchnorm";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kMaxPool2x2:
      return "maxpool2x2";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "conv3x3") return LayerKind::kConv3x3;
  if (name == "dense") return LayerKind::kDense;
  if (name == "batchnorm") return LayerKind::kBatchNorm;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "maxpool2x2") return LayerKind::kMaxPool2x2;
  throw ConfigError("unknown layer kind \"" + std::string(name) + "\"");
}

std::string_view to_string(Route route) { return route == Route::kImc ? "imc" : "float"; }

Route parse_route(std::string_view name) {
  if (name == "imc") return Route::kImc;
  if (name == "float") return Route::kFloat;
  throw ConfigError("unknown route \"" + std::string(name) + "\" (expected float or imc)");
}

std::vector<MvmLayerShape> mvm_layers(const ModelSpec& model) {
  if (model.in_h <= 0 || model.in_w <= 0 || model.in_c <= 0) throw DimensionError("input shape must be positive");
  std::vector<MvmLayerShape> out;
  int h = model.in_h;
  int w = model.in_w;
  int c = model.in_c;
  bool flat = false;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    switch (layer.kind) {
      case LayerKind::kConv3x3: {
        if (flat) throw DimensionError("layer " + std::to_string(i) + ": conv after dense");
        if (layer.units <= 0) throw DimensionError("layer " + std::to_string(i) + ": conv needs units > 0");
        MvmLayerShape s;
        s.mvm_index = static_cast<int>(out.size()) + 1;
        s.layer_index = static_cast<int>(i);
        s.kind = layer.kind;
        s.in_h = h;
        s.in_w = w;
        s.in_c = c;
        s.out_units = layer.units;
        out.push_back(s);
        c = layer.units;
        break;
      }
      case LayerKind::kDense: {
        if (layer.units <= 0) throw DimensionError("layer " + std::to_string(i) + ": dense needs units > 0");
        MvmLayerShape s;
        s.mvm_index = static_cast<int>(out.size()) + 1;
        s.layer_index = static_cast<int>(i);
        s.kind = layer.kind;
        s.in_c = flat ? c : h * w * c;
        s.out_units = layer.units;
        out.push_back(s);
        flat = true;
        h = w = 1;
        c = layer.units;
        break;
      }
      case LayerKind::kMaxPool2x2:
        if (flat || h % 2 != 0 || w % 2 != 0) {
          throw DimensionError("layer " + std::to_string(i) + ": maxpool2x2 needs an even spatial size");
        }
        h /= 2;
        w /= 2;
        break;
      case LayerKind::kBatchNorm:
      case LayerKind::kRelu:
        break;
    }
  }
  return out;
}

int output_features(const ModelSpec& model) {
  int h = model.in_h;
  int w = model.in_w;
  int c = model.in_c;
  for (const auto& layer : model.layers) {
    if (layer.kind == LayerKind::kConv3x3) c = layer.units;
    if (layer.kind == LayerKind::kDense) {
      h = w = 1;
      c = layer.units;
    }
    if (layer.kind == LayerKind::kMaxPool2x2) {
      h /= 2;
      w /= 2;
    }
  }
  return h * w * c;
}

void validate_routing(const ModelSpec& model) {
  const auto shapes = mvm_layers(model);
  if (shapes.empty()) throw ConfigError("model has no conv or dense layer");
  for (const auto* s : {&shapes.front(), &shapes.back()}) {
    const auto& layer = model.layers[static_cast<std::size_t>(s->layer_index)];
    for (auto kind : kAllMvmKinds) {
      if (layer.route(kind) == Route::kImc) {
        throw ConfigError("routing: first and last MVM layers must stay float (layer " + s->label() + ", " +
                          std::string(to_string(kind)) + ")");
      }
    }
  }
}

void set_inner_routing(ModelSpec& model, Route forward, Route backward, Route weight_update) {
  const auto shapes = mvm_layers(model);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    auto& layer = model.layers[static_cast<std::size_t>(shapes[i].layer_index)];
    const bool inner = i != 0 && i + 1 != shapes.size();
    layer.routing = inner ? std::array<Route, 3>{forward, backward, weight_update}
                          : std::array<Route, 3>{Route::kFloat, Route::kFloat, Route::kFloat};
  }
}

namespace {

LayerSpec make(LayerKind kind, int units = 0) {
  LayerSpec l;
  l.kind = kind;
  l.units = units;
  return l;
}

}  // namespace

ModelSpec vgg_lite() {
  using K = LayerKind;
  ModelSpec m;
  m.name = "vgg-lite";
  auto conv_block = [&](int units, bool pool) {
    m.layers.push_back(make(K::kConv3x3, units));
    if (pool) m.layers.push_back(make(K::kMaxPool2x2));
    m.layers.push_back(make(K::kBatchNorm));
    m.layers.push_back(make(K::kRelu));
  };
  conv_block(128, false);
  conv_block(128, true);
  conv_block(256, false);
  conv_block(256, true);
  conv_block(256, false);
  conv_block(256, true);
  for (int units : {1024, 1024}) {
    m.layers.push_back(make(K::kDense, units));
    m.layers.push_back(make(K::kBatchNorm));
    m.layers.push_back(make(K::kRelu));
  }
  m.layers.push_back(make(K::kDense, 10));
  m.layers.push_back(make(K::kBatchNorm));
  return m;
}

ModelSpec desk_model(int hidden, int classes) {
  using K = LayerKind;
  ModelSpec m;
  m.name = "desk";
  for (int units : {16, 32, 32}) {
    m.layers.push_back(make(K::kConv3x3, units));
    m.layers.push_back(make(K::kMaxPool2x2));
    m.layers.push_back(make(K::kBatchNorm));
    m.layers.push_back(make(K::kRelu));
  }
  m.layers.push_back(make(K::kDense, hidden));
  m.layers.push_back(make(K::kBatchNorm));
  m.layers.push_back(make(K::kRelu));
  m.layers.push_back(make(K::kDense, classes));
  m.layers.push_back(make(K::kBatchNorm));
  return m;
}

}  // namespace imcsim
