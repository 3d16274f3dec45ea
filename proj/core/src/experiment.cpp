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

#include "segrefine/experiment.hpp"

#include <sstream>

#include "segrefine/error.hpp"
#include "segrefine/inference.hpp"

namespace segrefine {
namespace {

void put(std::ostream& os, const std::optional<double>& v) {
  if (v) os << *v;
}

}  // namespace

std::vector<Sample> ablation_train_set(const AblationConfig& c) {
  return make_dataset(c.data_seed, c.train_count, c.size, c.train.num_classes, c.corruption);
}

std::vector<Sample> ablation_val_set(const AblationConfig& c) {
  return make_dataset(validation_seed(c.data_seed), c.val_count, c.size, c.train.num_classes,
                      c.corruption);
}

std::vector<TrimapRow> trimap_rows(const Predictions& p, const std::vector<int>& widths,
                                   std::size_t num_classes) {
  std::vector<TrimapRow> rows(widths.size());
  auto curve = [&](const LabelMap& pred) -> std::vector<TrimapPoint> {
    if (pred.n == 0) return {};
    return trimap_curve(pred, p.gt, widths, num_classes);
  };
  const auto input = curve(p.input);
  const auto prop = curve(p.prop);
  const auto repl = curve(p.repl);
  const auto fused = curve(p.fused);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    rows[i].width = widths[i];
    if (!input.empty()) rows[i].input = input[i].miou;
    if (!prop.empty()) rows[i].prop = prop[i].miou;
    if (!repl.empty()) rows[i].repl = repl[i].miou;
    if (!fused.empty()) rows[i].fused = fused[i].miou;
  }
  return rows;
}

AblationReport run_ablation(const AblationConfig& config, const StageFn& progress) {
  const auto train_set = ablation_train_set(config);
  const auto val_set = ablation_val_set(config);
  const std::size_t classes = config.train.num_classes;
  AblationReport report;

  auto run = [&](Regime regime) {
    TrainConfig tc = config.train;
    tc.regime = regime;
    ProgressFn fn;
    if (progress) fn = [&](const LogRow& row) { progress(to_string(regime), row); };
    return train(tc, train_set, val_set, nullptr, fn);
  };

  TrainResult joint = run(Regime::kJoint);
  const Predictions p = predict(joint.params, val_set, config.train.max_disp_px);
  auto score = [&](const LabelMap& pred) {
    const auto miou = mean_iou(pred, p.gt, classes).miou;
    if (!miou) throw DataError("validation set has no labeled pixels");
    return *miou;
  };
  report.input_miou = score(p.input);
  report.joint_fused_miou = score(p.fused);
  report.joint_prop_miou = score(p.prop);
  report.joint_repl_miou = score(p.repl);
  report.trimap = trimap_rows(p, config.trimap_widths, classes);
  report.joint_log = std::move(joint.log);

  if (config.single_branches) {
    const TrainResult prop = run(Regime::kPropOnly);
    report.prop_only_miou = evaluate_miou(prop.params, val_set, config.train.max_disp_px);
    const TrainResult repl = run(Regime::kReplOnly);
    report.repl_only_miou = evaluate_miou(repl.params, val_set, config.train.max_disp_px);
  }
  return report;
}

std::string trimap_to_csv(const std::vector<TrimapRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "width,miou_input,miou_prop,miou_repl,miou_fuse\n";
  for (const auto& r : rows) {
    os << r.width << ',';
    put(os, r.input);
    os << ',';
    put(os, r.prop);
    os << ',';
    put(os, r.repl);
    os << ',';
    put(os, r.fused);
    os << '\n';
  }
  return os.str();
}

}  // namespace segrefine
