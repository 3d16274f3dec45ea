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

#include "segrefine/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "segrefine/error.hpp"
#include "segrefine/inference.hpp"
#include "segrefine/io.hpp"

namespace segrefine {

template <typename T>
AdamState<T> make_adam_state(const ModelParams<T>& params, const AdamHyper& hyper,
                             Regime regime) {
  std::vector<typename ModelParams<T>::Layer> layers;
  ModelSpec spec{params.num_classes(), params.width_divisor(), regime};
  for (const auto& def : layer_plan(spec)) {
    const auto& w = params.at(def.name);
    layers.push_back({def.name, ConvWeights<T>(w.out_channels(), w.in_channels())});
  }
  AdamState<T> s;
  s.hyper = hyper;
  s.m = ModelParams<T>(layers);
  s.v = ModelParams<T>(std::move(layers));
  return s;
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::uint64_t step, const AdamHyper& hyper) {
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / c1;
    const double v_hat = vi / c2;
    param[i] = static_cast<T>(param[i] - hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
  }
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state) {
  for (const auto& l : state.m.layers()) {
    const auto& g = grads.at(l.name);
    const auto& p = params.at(l.name);
    if (!(g.kernel.shape() == p.kernel.shape()) || !(g.bias.shape() == p.bias.shape())) {
      throw ShapeError("adam_step: gradient shape mismatch for layer " + l.name);
    }
    if (!g.kernel.all_finite() || !g.bias.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in layer " + l.name +
                         "; step aborted");
    }
  }
  ++state.step;
  for (auto& l : state.m.layers()) {
    auto& p = params.at(l.name);
    const auto& g = grads.at(l.name);
    auto& v = state.v.at(l.name);
    adam_update<T>(p.kernel.values(), g.kernel.values(), l.weights.kernel.values(),
                   v.kernel.values(), state.step, state.hyper);
    adam_update<T>(p.bias.values(), g.bias.values(), l.weights.bias.values(), v.bias.values(),
                   state.step, state.hyper);
  }
  params.bump_revision();
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.iterations < 1) fail("iterations must be >= 1");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (c.num_classes < 2) fail("num_classes must be >= 2");
  if (!(c.max_disp_px >= 0.0)) fail("max_disp_px must be non-negative");
  if (c.augment.crop_size == 0 || c.augment.crop_size % 8 != 0) {
    fail("crop_size must be a positive multiple of 8");
  }
  if (!(c.augment.min_scale > 0.0) || c.augment.max_scale < c.augment.min_scale) {
    fail("scale range must satisfy 0 < min_scale <= max_scale");
  }
  if (c.log_every < 1) fail("log_every must be >= 1");
  if (c.eval_every != 0 && c.eval_every % c.log_every != 0) {
    fail("eval_every must be a multiple of log_every");
  }
  ModelSpec spec{c.num_classes, c.width_divisor, c.regime};
  layer_plan(spec);
}

std::string log_to_csv(const std::vector<LogRow>& log, Regime regime) {
  std::ostringstream os;
  os.precision(9);
  os << "iter,loss,loss_prop,loss_repl,loss_fuse,val_miou\n";
  const bool prop = regime != Regime::kReplOnly;
  const bool repl = regime != Regime::kPropOnly;
  const bool fuse = regime == Regime::kJoint;
  for (const auto& r : log) {
    os << r.iter << ',' << r.loss << ',';
    if (prop) os << r.loss_prop;
    os << ',';
    if (repl) os << r.loss_repl;
    os << ',';
    if (fuse) os << r.loss_fuse;
    os << ',';
    if (r.val_miou) os << *r.val_miou;
    os << '\n';
  }
  return os.str();
}

TrainResult train(const TrainConfig& config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const ModelParams<float>* initial,
                  const ProgressFn& progress) {
  validate(config);
  if (train_set.empty()) throw DataError("train: empty training set");

  TrainResult result;
  if (initial != nullptr) {
    result.params = *initial;
    if (result.params.num_classes() != config.num_classes) {
      throw ConfigError("train: initial model has a different number of classes");
    }
  } else {
    result.params =
        build_model(ModelSpec{config.num_classes, config.width_divisor, config.regime}, config.seed);
  }
  ModelParams<float>& params = result.params;
  result.adam = make_adam_state(params, AdamHyper{config.lr, 0.9, 0.999, 1e-8}, config.regime);

  std::mt19937_64 order_rng(derive_seed(config.seed, 1));
  const std::uint64_t augment_seed = derive_seed(config.seed, 2);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  auto abort_training = [&](const std::string& why) {
    if (!config.diagnostic_checkpoint.empty()) {
      Checkpoint ck{static_cast<std::uint32_t>(config.num_classes),
                    static_cast<float>(config.max_disp_px), params, result.adam};
      save_checkpoint(config.diagnostic_checkpoint, ck);
    }
    throw NumericError(why);
  };

  LogRow acc;
  std::size_t acc_count = 0;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    std::vector<Tensor> images, inits;
    std::vector<LabelMap> gts;
    for (std::size_t k = 0; k < config.batch_size; ++k) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const Sample& src = train_set[order[cursor++]];
      Sample s = augment(src, derive_seed(augment_seed, (it - 1) * config.batch_size + k),
                         config.augment);
      images.push_back(std::move(s.image));
      inits.push_back(std::move(s.init));
      gts.push_back(std::move(s.gt));
    }
    const Tensor image = stack_batch<float>(images);
    const Tensor init = stack_batch<float>(inits);
    const LabelMap gt = stack_labels(gts);

    TotalLoss<float> loss;
    std::string failure;
    try {
      const auto trace = forward_full(image, init, params, config.max_disp_px, config.regime);
      loss = regime_loss(config.regime, trace.fused, trace.prop, trace.repl, gt);
      if (!std::isfinite(loss.total)) {
        failure = "training loss became non-finite";
      } else {
        const auto grads = backward_full(
            trace, OutputGrads<float>{loss.d_prop, loss.d_repl, loss.d_fused}, params);
        adam_step(params, grads, result.adam);
      }
    } catch (const NumericError& e) {
      failure = e.what();
    }
    if (!failure.empty()) abort_training(failure + " at iteration " + std::to_string(it));

    acc.loss += loss.total;
    acc.loss_prop += loss.prop;
    acc.loss_repl += loss.repl;
    acc.loss_fuse += loss.fused;
    ++acc_count;
    if (it % config.log_every == 0) {
      const double inv = 1.0 / static_cast<double>(acc_count);
      LogRow row{it, acc.loss * inv, acc.loss_prop * inv, acc.loss_repl * inv,
                 acc.loss_fuse * inv, std::nullopt};
      if (config.eval_every != 0 && it % config.eval_every == 0 && !val_set.empty()) {
        row.val_miou = evaluate_miou(params, val_set, config.max_disp_px, config.regime);
      }
      result.log.push_back(row);
      if (progress) progress(row);
      acc = LogRow{};
      acc_count = 0;
    }
  }
  return result;
}

#define SEGREFINE_INSTANTIATE(T)                                                               \
  template AdamState<T> make_adam_state<T>(const ModelParams<T>&, const AdamHyper&, Regime);   \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,   \
                               std::uint64_t, const AdamHyper&);                               \
  template void adam_step<T>(ModelParams<T>&, const ModelParams<T>&, AdamState<T>&);

SEGREFINE_INSTANTIATE(float)
SEGREFINE_INSTANTIATE(double)
#undef SEGREFINE_INSTANTIATE

}  // namespace segrefine
