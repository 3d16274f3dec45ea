// Copyright 2026 The segrefine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "segrefine/networks.hpp"

#include <cmath>
#include <random>

#include "segrefine/error.hpp"
#include "segrefine/warp.hpp"

namespace segrefine {
namespace {

bool in_regime(const std::string& name, Regime regime) {
  const bool prop_layer = name.starts_with("E_") || name == "flow";
  const bool repl_layer = name.starts_with("C_");
  const bool fusion_layer = name.starts_with("M_") || name == "mask";
  switch (regime) {
    case Regime::kPropOnly:
      return !repl_layer && !fusion_layer;
    case Regime::kReplOnly:
      return !prop_layer && !fusion_layer;
    case Regime::kJoint:
      return true;
  }
  return false;
}

std::vector<LayerDef> full_plan(std::size_t num_classes, std::size_t divisor) {
  const std::size_t e1 = 64 / divisor;
  const std::size_t e2 = 128 / divisor;
  const std::size_t e3 = 256 / divisor;
  const auto relu = Activation::kRelu;
  std::vector<LayerDef> plan = {
      {"conv1_1", 3 + num_classes, e1, relu}, {"conv1_2", e1, e1, relu},
      {"conv2_1", e1, e2, relu},              {"conv2_2", e2, e2, relu},
      {"conv3_1", e2, e3, relu},              {"conv3_2", e3, e3, relu},
      {"conv4_1", e3, e3, relu},              {"conv4_2", e3, e3, relu},
  };
  for (const char* p : {"E_", "C_"}) {
    const std::string prefix = p;
    plan.push_back({prefix + "conv1_1", 2 * e3, e3, relu});
    plan.push_back({prefix + "conv1_2", e3, e3, relu});
    plan.push_back({prefix + "conv2_1", e3 + e2, e2, relu});
    plan.push_back({prefix + "conv2_2", e2, e2, relu});
    plan.push_back({prefix + "conv3_1", e2 + e1, e1, relu});
    plan.push_back({prefix + "conv3_2", e1, e1, relu});
  }
  plan.push_back({"flow", e1, 2, Activation::kTanh});
  plan.push_back({"C_out", e1, num_classes, Activation::kNone});
  plan.push_back({"M_conv1", 2 * e1, e1, relu});
  plan.push_back({"M_conv2", e1, e1, relu});
  plan.push_back({"M_conv3", e1, e3, relu});
  plan.push_back({"mask", e3, 1, Activation::kSigmoid});
  return plan;
}

void check_spec(const ModelSpec& spec) {
  if (spec.num_classes < 2) {
    throw ConfigError("num_classes must be >= 2, got " + std::to_string(spec.num_classes));
  }
  if (spec.num_classes > 254) throw ConfigError("num_classes must be <= 254");
  const std::size_t d = spec.width_divisor;
  if (d != 1 && d != 2 && d != 4 && d != 8 && d != 16) {
    throw ConfigError("width_divisor must be one of 1, 2, 4, 8, 16; got " + std::to_string(d));
  }
}

Activation activation_for(const std::string& name) {
  if (name == "flow") return Activation::kTanh;
  if (name == "mask") return Activation::kSigmoid;
  if (name == "C_out") return Activation::kNone;
  return Activation::kRelu;
}

// Runs one convolution + activation and records it for backward.
template <typename T>
class Recorder {
 public:
  Recorder(const ModelParams<T>& params, ForwardTrace<T>& trace)
      : params_(params), trace_(trace) {}

  const BasicTensor<T>& conv(const std::string& name, BasicTensor<T> input) {
    const Activation act = activation_for(name);
    BasicTensor<T> out = activation(conv2d(input, params_.at(name)), act);
    trace_.layers.push_back({name, act, std::move(input), std::move(out)});
    return trace_.layers.back().output;
  }

  BasicTensor<T> pool(const BasicTensor<T>& input) {
    trace_.pools.push_back(maxpool2x2(input));
    return trace_.pools.back().output;
  }

 private:
  const ModelParams<T>& params_;
  ForwardTrace<T>& trace_;
};

template <typename T>
BasicTensor<T> decoder_forward(Recorder<T>& rec, const std::string& prefix,
                               const BasicTensor<T>& skip1, const BasicTensor<T>& enc2,
                               const BasicTensor<T>& enc1) {
  BasicTensor<T> x = rec.conv(prefix + "conv1_1", skip1);
  x = rec.conv(prefix + "conv1_2", std::move(x));
  x = rec.conv(prefix + "conv2_1", concat_channels(upsample_bilinear_2x(x), enc2));
  x = rec.conv(prefix + "conv2_2", std::move(x));
  x = rec.conv(prefix + "conv3_1", concat_channels(upsample_bilinear_2x(x), enc1));
  return rec.conv(prefix + "conv3_2", std::move(x));
}

// Reverse pass bookkeeping: activation gradients flow back through the
// recorded layers while parameter gradients accumulate into `grads`.
template <typename T>
class Backprop {
 public:
  Backprop(const ForwardTrace<T>& trace, const ModelParams<T>& params, ModelParams<T>& grads)
      : trace_(trace), params_(params), grads_(grads) {}

  BasicTensor<T> conv(const std::string& name, const BasicTensor<T>& grad_out) {
    const auto& cache = trace_.layer(name);
    const BasicTensor<T> pre = activation_backward(cache.output, grad_out, cache.act);
    ConvGrads<T> g = conv2d_backward(cache.input, params_.at(name), pre);
    auto& acc = grads_.at(name);
    acc.kernel += g.weights.kernel;
    acc.bias += g.weights.bias;
    return std::move(g.input);
  }

  const ForwardTrace<T>& trace() const { return trace_; }

 private:
  const ForwardTrace<T>& trace_;
  const ModelParams<T>& params_;
  ModelParams<T>& grads_;
};

template <typename T>
struct DecoderInputGrads {
  BasicTensor<T> skip1;
  BasicTensor<T> enc2;
  BasicTensor<T> enc1;
};

template <typename T>
DecoderInputGrads<T> decoder_backward(Backprop<T>& bp, const std::string& prefix,
                                      const BasicTensor<T>& grad_out) {
  DecoderInputGrads<T> out;
  BasicTensor<T> g = bp.conv(prefix + "conv3_2", grad_out);
  g = bp.conv(prefix + "conv3_1", g);
  const std::size_t up3_channels = bp.trace().layer(prefix + "conv2_2").output.c();
  auto [up3, enc1] = split_channels(g, up3_channels);
  out.enc1 = std::move(enc1);
  g = upsample_bilinear_2x_backward(up3, bp.trace().layer(prefix + "conv2_2").output.shape());
  g = bp.conv(prefix + "conv2_2", g);
  g = bp.conv(prefix + "conv2_1", g);
  const std::size_t up2_channels = bp.trace().layer(prefix + "conv1_2").output.c();
  auto [up2, enc2] = split_channels(g, up2_channels);
  out.enc2 = std::move(enc2);
  g = upsample_bilinear_2x_backward(up2, bp.trace().layer(prefix + "conv1_2").output.shape());
  g = bp.conv(prefix + "conv1_2", g);
  out.skip1 = bp.conv(prefix + "conv1_1", g);
  return out;
}

template <typename T>
void accumulate(BasicTensor<T>& acc, const BasicTensor<T>& g) {
  if (g.empty()) return;
  if (acc.empty()) {
    acc = g;
  } else {
    acc += g;
  }
}

}  // namespace

std::vector<LayerDef> layer_plan(const ModelSpec& spec) {
  check_spec(spec);
  std::vector<LayerDef> out;
  for (auto& l : full_plan(spec.num_classes, spec.width_divisor)) {
    if (in_regime(l.name, spec.regime)) out.push_back(std::move(l));
  }
  return out;
}

template <typename T>
ModelParams<T>::ModelParams(std::vector<Layer> layers) : layers_(std::move(layers)) {}

template <typename T>
const ConvWeights<T>* ModelParams<T>::find(std::string_view name) const {
  for (const auto& l : layers_) {
    if (l.name == name) return &l.weights;
  }
  return nullptr;
}

template <typename T>
ConvWeights<T>* ModelParams<T>::find(std::string_view name) {
  for (auto& l : layers_) {
    if (l.name == name) return &l.weights;
  }
  return nullptr;
}

template <typename T>
const ConvWeights<T>& ModelParams<T>::at(std::string_view name) const {
  const auto* w = find(name);
  if (w == nullptr) throw ContractError("model has no layer '" + std::string(name) + "'");
  return *w;
}

template <typename T>
ConvWeights<T>& ModelParams<T>::at(std::string_view name) {
  auto* w = find(name);
  if (w == nullptr) throw ContractError("model has no layer '" + std::string(name) + "'");
  return *w;
}

template <typename T>
std::size_t ModelParams<T>::num_classes() const {
  return at("conv1_1").in_channels() - 3;
}

template <typename T>
std::size_t ModelParams<T>::width_divisor() const {
  const std::size_t e1 = at("conv1_1").out_channels();
  if (e1 == 0 || 64 % e1 != 0) throw ContractError("unexpected conv1_1 width");
  return 64 / e1;
}

template <typename T>
Regime ModelParams<T>::regime() const {
  const bool prop = contains("flow");
  const bool repl = contains("C_out");
  const bool fusion = contains("mask");
  if (prop && repl && fusion) return Regime::kJoint;
  if (prop && !repl && !fusion) return Regime::kPropOnly;
  if (repl && !prop && !fusion) return Regime::kReplOnly;
  throw ContractError("model layers do not form a known regime");
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += l.weights.kernel.size() + l.weights.bias.size();
  return total;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  std::vector<Layer> layers;
  layers.reserve(layers_.size());
  for (const auto& l : layers_) {
    layers.push_back({l.name, ConvWeights<T>(l.weights.out_channels(), l.weights.in_channels())});
  }
  return ModelParams(std::move(layers));
}

ModelParams<float> build_model(const ModelSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  std::mt19937_64 rng(seed);
  std::vector<ModelParams<float>::Layer> layers;
  // Draw every layer of the full plan so shared layers match across regimes.
  for (const auto& def : full_plan(spec.num_classes, spec.width_divisor)) {
    ConvWeights<float> w(def.out_channels, def.in_channels);
    const double fan_in = static_cast<double>(def.in_channels * 9);
    const double fan_out = static_cast<double>(def.out_channels * 9);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w.kernel.values()) v = static_cast<float>(dist(rng));
    if (in_regime(def.name, spec.regime)) layers.push_back({def.name, std::move(w)});
  }
  return ModelParams<float>(std::move(layers));
}

ModelParams<float> build_model(std::size_t num_classes, std::uint64_t seed) {
  return build_model(ModelSpec{num_classes, 1, Regime::kJoint}, seed);
}

template <typename T>
const typename ForwardTrace<T>::LayerCache& ForwardTrace<T>::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  throw ContractError("trace has no layer '" + std::string(name) + "'");
}

template <typename T>
const BasicTensor<T>& ForwardTrace<T>::output() const {
  switch (regime) {
    case Regime::kPropOnly:
      return prop;
    case Regime::kReplOnly:
      return repl;
    case Regime::kJoint:
      return fused;
  }
  return fused;
}

template <typename T>
ForwardTrace<T> forward_full(const BasicTensor<T>& image, const BasicTensor<T>& init,
                             const ModelParams<T>& params, double max_disp_px) {
  return forward_full(image, init, params, max_disp_px, params.regime());
}

template <typename T>
ForwardTrace<T> forward_full(const BasicTensor<T>& image, const BasicTensor<T>& init,
                             const ModelParams<T>& params, double max_disp_px,
                             Regime regime) {
  const Shape& is = image.shape();
  const Shape& ps = init.shape();
  if (is.c != 3) throw ShapeError("forward_full: image must have 3 channels, got " + is.str());
  if (ps.n != is.n || ps.h != is.h || ps.w != is.w) {
    throw ShapeError("forward_full: image " + is.str() + " vs probability map " + ps.str());
  }
  if (is.h == 0 || is.w == 0 || is.h % 8 != 0 || is.w % 8 != 0) {
    throw ShapeError("forward_full: spatial size must be a positive multiple of 8, got " +
                     is.str());
  }
  if (ps.c != params.num_classes()) {
    throw ShapeError("forward_full: probability map has " + std::to_string(ps.c) +
                     " channels, model expects " + std::to_string(params.num_classes()));
  }
  if (!is_prob_map(init, 1e-5)) {
    throw ContractError("forward_full: initial map is not a valid probability map");
  }
  require_finite(image, "forward_full image");

  ForwardTrace<T> tr;
  tr.regime = regime;
  tr.max_disp_px = max_disp_px;
  tr.params = &params;
  tr.revision = params.revision();
  tr.init = init;
  Recorder<T> rec(params, tr);

  BasicTensor<T> x = rec.conv("conv1_1", concat_channels(image, init));
  const BasicTensor<T> enc1 = rec.conv("conv1_2", std::move(x));
  x = rec.conv("conv2_1", rec.pool(enc1));
  const BasicTensor<T> enc2 = rec.conv("conv2_2", std::move(x));
  x = rec.conv("conv3_1", rec.pool(enc2));
  const BasicTensor<T> enc3 = rec.conv("conv3_2", std::move(x));
  x = rec.conv("conv4_1", rec.pool(enc3));
  x = rec.conv("conv4_2", std::move(x));
  const BasicTensor<T> skip1 = concat_channels(upsample_bilinear_2x(x), enc3);

  const bool run_prop = regime != Regime::kReplOnly;
  const bool run_repl = regime != Regime::kPropOnly;
  BasicTensor<T> prop_features;
  BasicTensor<T> repl_features;
  if (run_prop) {
    prop_features = decoder_forward(rec, "E_", skip1, enc2, enc1);
    tr.flow_raw = rec.conv("flow", prop_features);
    tr.displacement = displacement_from_flow(tr.flow_raw, max_disp_px);
    tr.prop = warp_bilinear(init, tr.displacement);
  }
  if (run_repl) {
    repl_features = decoder_forward(rec, "C_", skip1, enc2, enc1);
    tr.repl_logits = rec.conv("C_out", repl_features);
    tr.repl = softmax_channels(tr.repl_logits);
  }
  if (regime == Regime::kJoint) {
    x = rec.conv("M_conv1", concat_channels(prop_features, repl_features));
    x = rec.conv("M_conv2", std::move(x));
    x = rec.conv("M_conv3", std::move(x));
    tr.mask = rec.conv("mask", std::move(x));
    tr.fused = fuse(tr.prop, tr.repl, tr.mask);
  }
  return tr;
}

template <typename T>
ModelParams<T> backward_full(const ForwardTrace<T>& trace, const OutputGrads<T>& grads,
                             const ModelParams<T>& params) {
  if (trace.params != &params || trace.revision != params.revision()) {
    throw ContractError("backward_full: trace does not belong to these parameters");
  }
  ModelParams<T> out = params.zeros_like();
  Backprop<T> bp(trace, params, out);
  const Regime regime = trace.regime;

  BasicTensor<T> d_prop = grads.prop;
  BasicTensor<T> d_repl = grads.repl;
  BasicTensor<T> d_prop_features;
  BasicTensor<T> d_repl_features;

  if (regime == Regime::kJoint && !grads.fused.empty()) {
    FuseGrads<T> fg = fuse_backward(trace.prop, trace.repl, trace.mask, grads.fused);
    accumulate(d_prop, fg.prop);
    accumulate(d_repl, fg.repl);
    BasicTensor<T> g = bp.conv("mask", fg.mask);
    g = bp.conv("M_conv3", g);
    g = bp.conv("M_conv2", g);
    g = bp.conv("M_conv1", g);
    auto [d_e, d_c] = split_channels(g, trace.layer("E_conv3_2").output.c());
    d_prop_features = std::move(d_e);
    d_repl_features = std::move(d_c);
  }
  if (regime != Regime::kPropOnly && !d_repl.empty()) {
    const BasicTensor<T> d_logits = softmax_channels_backward(trace.repl, d_repl);
    accumulate(d_repl_features, bp.conv("C_out", d_logits));
  }
  if (regime != Regime::kReplOnly && !d_prop.empty()) {
    WarpGrads<T> wg = warp_bilinear_backward(trace.init, trace.displacement, d_prop);
    const BasicTensor<T> d_flow = displacement_from_flow_backward(wg.disp, trace.max_disp_px);
    accumulate(d_prop_features, bp.conv("flow", d_flow));
  }

  // Decoder contributions to the shared encoder, summed in a fixed order.
  BasicTensor<T> d_skip1;
  BasicTensor<T> d_enc2;
  BasicTensor<T> d_enc1;
  for (const char* prefix : {"E_", "C_"}) {
    const std::string p = prefix;
    const BasicTensor<T>& d_features = p == "E_" ? d_prop_features : d_repl_features;
    if (p == "E_" && regime == Regime::kReplOnly) continue;
    if (p == "C_" && regime == Regime::kPropOnly) continue;
    BasicTensor<T> d = d_features;
    if (d.empty()) d = BasicTensor<T>(trace.layer(p + "conv3_2").output.shape());
    DecoderInputGrads<T> dg = decoder_backward(bp, p, d);
    accumulate(d_skip1, dg.skip1);
    accumulate(d_enc2, dg.enc2);
    accumulate(d_enc1, dg.enc1);
  }

  const auto& c42 = trace.layer("conv4_2").output;
  auto [d_up1, d_enc3] = split_channels(d_skip1, c42.c());
  BasicTensor<T> g = upsample_bilinear_2x_backward(d_up1, c42.shape());
  g = bp.conv("conv4_2", g);
  g = bp.conv("conv4_1", g);
  g = maxpool2x2_backward(trace.pools[2], g);
  g += d_enc3;
  g = bp.conv("conv3_2", g);
  g = bp.conv("conv3_1", g);
  g = maxpool2x2_backward(trace.pools[1], g);
  g += d_enc2;
  g = bp.conv("conv2_2", g);
  g = bp.conv("conv2_1", g);
  g = maxpool2x2_backward(trace.pools[0], g);
  g += d_enc1;
  g = bp.conv("conv1_2", g);
  bp.conv("conv1_1", g);
  return out;
}

#define SEGREFINE_INSTANTIATE(T)                                                          \
  template class ModelParams<T>;                                                          \
  template struct ForwardTrace<T>;                                                        \
  template ForwardTrace<T> forward_full<T>(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                           const ModelParams<T>&, double);                \
  template ForwardTrace<T> forward_full<T>(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                           const ModelParams<T>&, double, Regime);        \
  template ModelParams<T> backward_full<T>(const ForwardTrace<T>&, const OutputGrads<T>&, \
                                           const ModelParams<T>&);

SEGREFINE_INSTANTIATE(float)
SEGREFINE_INSTANTIATE(double)
#undef SEGREFINE_INSTANTIATE

}  // namespace segrefine
