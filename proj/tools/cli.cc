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

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "segrefine/error.hpp"
#include "segrefine/experiment.hpp"
#include "segrefine/inference.hpp"
#include "segrefine/io.hpp"
#include "segrefine/metrics.hpp"
#include "segrefine/run_config.hpp"

namespace segrefine::cli {
namespace fs = std::filesystem;

namespace {

constexpr const char* kDefaultWidths = "1..40";
const std::vector<std::string> kVariants = {"input", "prop", "repl", "fuse"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw Error("write failed: " + path.string());
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << *v;
  return os.str();
}

// ---- gen -------------------------------------------------------------------

struct GenOptions {
  std::uint64_t seed = 2024;
  std::size_t count = 200;
  std::size_t val_count = 50;
  std::size_t size = 64;
  std::size_t classes = 4;
  CorruptionConfig corruption;
  std::string out_dir;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  if (o.classes < 2 || o.classes > 254) throw ConfigError("--classes must be in [2, 254]");
  if (o.size == 0 || o.size % 8 != 0) throw ConfigError("--size must be a positive multiple of 8");
  if (o.count == 0) throw ConfigError("--count must be >= 1");
  const auto train_set = make_dataset(o.seed, o.count, o.size, o.classes, o.corruption);
  const auto val_set =
      make_dataset(validation_seed(o.seed), o.val_count, o.size, o.classes, o.corruption);
  const fs::path root(o.out_dir);
  save_dataset(root / "train", train_set);
  save_dataset(root / "val", val_set);
  out << "wrote " << train_set.size() << " train and " << val_set.size() << " val samples to "
      << root.string() << '\n';
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::string config;
  std::string regime;
  std::vector<std::string> overrides;
  std::string out_checkpoint;
  std::string log_csv;
};

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides,
                         const std::string& regime) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  // Overrides replace earlier assignments of the same key.
  std::map<std::string, std::string> replaced;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    replaced[kv.substr(0, eq)] = kv;
  }
  if (!regime.empty()) replaced["regime"] = "regime=" + regime;
  std::ostringstream merged;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    const auto hash = line.find('#');
    if (eq != std::string::npos && (hash == std::string::npos || eq < hash)) {
      std::string key = line.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      if (replaced.count(key)) continue;
    }
    merged << line << '\n';
  }
  for (const auto& [key, kv] : replaced) merged << kv << '\n';
  return parse_run_config(merged.str());
}

void load_splits(const RunConfig& rc, std::vector<Sample>& train_set,
                 std::vector<Sample>& val_set) {
  const auto classes = rc.train.num_classes;
  if (rc.data_dir.empty()) {
    train_set = make_dataset(rc.data_seed, rc.train_count, rc.image_size, classes, rc.corruption);
    val_set = make_dataset(validation_seed(rc.data_seed), rc.val_count, rc.image_size, classes,
                           rc.corruption);
    return;
  }
  const fs::path root(rc.data_dir);
  train_set = load_dataset(root / "train", classes);
  if (train_set.empty()) throw DataError("no training samples in " + (root / "train").string());
  if (fs::is_directory(root / "val")) val_set = load_dataset(root / "val", classes);
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve_config(o.config, o.overrides, o.regime);
  std::vector<Sample> train_set, val_set;
  load_splits(rc, train_set, val_set);

  fs::path log_path = !o.log_csv.empty() ? fs::path(o.log_csv) : fs::path(rc.log_csv);
  if (log_path.empty()) log_path = fs::path(o.out_checkpoint + ".log.csv");

  auto progress = [&](const LogRow& row) {
    out << "iter " << row.iter << " loss " << row.loss;
    if (row.val_miou) out << " val_miou " << *row.val_miou;
    out << '\n' << std::flush;
  };
  TrainResult result;
  try {
    result = train(rc.train, train_set, val_set, nullptr, progress);
  } catch (const NumericError& e) {
    err << "training aborted: " << e.what() << '\n';
    if (!rc.train.diagnostic_checkpoint.empty()) {
      err << "last finite model written to " << rc.train.diagnostic_checkpoint << '\n';
    }
    return kExitRuntime;
  }

  Checkpoint ckpt;
  ckpt.num_classes = static_cast<std::uint32_t>(rc.train.num_classes);
  ckpt.max_disp_px = static_cast<float>(rc.train.max_disp_px);
  ckpt.params = std::move(result.params);
  ckpt.adam = std::move(result.adam);
  const fs::path ckpt_path(o.out_checkpoint);
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  save_checkpoint(ckpt_path, ckpt);
  write_text(log_path, log_to_csv(result.log, rc.train.regime));
  out << "checkpoint " << ckpt_path.string() << ", log " << log_path.string() << '\n';
  return kExitOk;
}

// ---- infer -----------------------------------------------------------------

struct InferOptions {
  std::string checkpoint;
  std::string image;
  std::string init;
  std::string out_prefix;
};

void write_probmap(const std::string& prefix, const std::string& variant, const Tensor& map) {
  if (!is_prob_map(map)) throw ContractError(variant + " output is not a probability map");
  save_tensor(prefix + "." + variant + ".dtf", map);
  const LabelMap labels = argmax_labels(map);
  save_pgm(prefix + "." + variant + ".pgm", labels);
  save_ppm(prefix + "." + variant + ".ppm", colorize(labels));
}

int cmd_infer(const InferOptions& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Tensor image = load_tensor(o.image);
  const Tensor init = load_tensor(o.init);
  if (image.n() != 1 || init.n() != 1) throw DataError("infer expects a single image");
  if (image.h() != init.h() || image.w() != init.w()) {
    throw DataError("image " + image.shape().str() + " and init map " + init.shape().str() +
                    " differ in size");
  }
  const auto trace = forward_full(image, init, ckpt.params, ckpt.max_disp_px);

  const fs::path prefix_path(o.out_prefix);
  if (prefix_path.has_parent_path()) fs::create_directories(prefix_path.parent_path());
  const std::string& prefix = o.out_prefix;
  const LabelMap input_labels = argmax_labels(init);
  save_pgm(prefix + ".input.pgm", input_labels);
  save_ppm(prefix + ".input.ppm", colorize(input_labels));
  if (!trace.prop.empty()) {
    write_probmap(prefix, "prop", trace.prop);
    save_tensor(prefix + ".disp.dtf", trace.displacement);
    save_ppm(prefix + ".disp.ppm", displacement_to_rgb(trace.displacement, ckpt.max_disp_px));
    double peak = 0.0;
    const std::size_t plane = trace.displacement.h() * trace.displacement.w();
    for (std::size_t i = 0; i < plane; ++i) {
      peak = std::max(peak, static_cast<double>(std::hypot(trace.displacement[i],
                                                           trace.displacement[plane + i])));
    }
    out << "max displacement " << peak << " px\n";
  }
  if (!trace.repl.empty()) write_probmap(prefix, "repl", trace.repl);
  if (!trace.mask.empty()) {
    for (const float m : trace.mask.values()) {
      if (!(m >= 0.0f && m <= 1.0f)) throw ContractError("fusion mask outside [0, 1]");
    }
    save_tensor(prefix + ".mask.dtf", trace.mask);
  }
  if (!trace.fused.empty()) write_probmap(prefix, "fuse", trace.fused);
  out << "wrote " << to_string(ckpt.params.regime()) << " outputs to " << prefix << ".*\n";
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::string widths = kDefaultWidths;
  std::size_t classes = 0;
  std::string out;
};

// Maps a file name to (stem, variant). Ground truth is "<stem>.pgm" or
// "<stem>.gt.pgm"; predictions are "<stem>.<variant>.pgm", with a bare
// "<stem>.pgm" read as the fused output.
std::optional<std::pair<std::string, std::string>> split_pred_name(const std::string& name) {
  if (!name.ends_with(".pgm")) return std::nullopt;
  const std::string base = name.substr(0, name.size() - 4);
  for (const auto& v : kVariants) {
    const std::string suffix = "." + v;
    if (base.size() > suffix.size() && base.ends_with(suffix)) {
      return std::make_pair(base.substr(0, base.size() - suffix.size()), v);
    }
  }
  if (base.ends_with(".gt")) return std::nullopt;
  return std::make_pair(base, std::string("fuse"));
}

fs::path gt_path_for(const fs::path& gt_dir, const std::string& stem) {
  const fs::path a = gt_dir / (stem + ".gt.pgm");
  if (fs::exists(a)) return a;
  return gt_dir / (stem + ".pgm");
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const std::vector<int> widths = parse_widths(o.widths);
  if (!fs::is_directory(o.pred_dir)) throw DataError("not a directory: " + o.pred_dir);
  if (!fs::is_directory(o.gt_dir)) throw DataError("not a directory: " + o.gt_dir);

  // stem -> variant -> path
  std::map<std::string, std::map<std::string, fs::path>> preds;
  for (const auto& entry : fs::directory_iterator(o.pred_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto parsed = split_pred_name(entry.path().filename().string());
    if (!parsed) continue;
    auto& slot = preds[parsed->first][parsed->second];
    if (!slot.empty()) {
      throw DataError("two fused predictions for " + parsed->first + " in " + o.pred_dir);
    }
    slot = entry.path();
  }
  if (preds.empty()) throw DataError("no predictions (*.pgm) in " + o.pred_dir);

  std::vector<std::string> problems;
  std::set<std::string> variants;
  for (const auto& [stem, files] : preds) {
    if (!fs::exists(gt_path_for(o.gt_dir, stem))) {
      problems.push_back(stem + ": no ground truth " + stem + ".gt.pgm or " + stem +
                         ".pgm in " + o.gt_dir);
    }
    for (const auto& [v, path] : files) variants.insert(v);
  }
  for (const auto& [stem, files] : preds) {
    for (const auto& v : variants) {
      if (!files.count(v)) problems.push_back(stem + ": missing " + v + " prediction");
    }
  }
  if (!problems.empty()) {
    for (const auto& p : problems) err << "error: " << p << '\n';
    err << problems.size() << " file error(s); nothing evaluated\n";
    return kExitRuntime;
  }

  std::vector<LabelMap> gts;
  std::map<std::string, std::vector<LabelMap>> by_variant;
  int max_label = 0;
  auto track = [&](const LabelMap& m) {
    for (const auto l : m.labels) {
      if (l != LabelMap::kIgnore) max_label = std::max<int>(max_label, l);
    }
  };
  for (const auto& [stem, files] : preds) {
    LabelMap gt = load_pgm(gt_path_for(o.gt_dir, stem));
    track(gt);
    for (const auto& [v, path] : files) {
      LabelMap p = load_pgm(path);
      if (p.h != gt.h || p.w != gt.w) {
        throw DataError(path.string() + ": size differs from its ground truth");
      }
      track(p);
      by_variant[v].push_back(std::move(p));
    }
    gts.push_back(std::move(gt));
  }
  std::size_t classes = o.classes;
  if (classes == 0) classes = static_cast<std::size_t>(max_label) + 1;
  if (classes < 2) classes = 2;
  if (static_cast<std::size_t>(max_label) >= classes) {
    throw DataError("label " + std::to_string(max_label) + " exceeds --classes");
  }

  // Maps may differ in size between stems, so bands are accumulated per image.
  std::map<std::string, TrimapAccumulator> curves;
  std::map<std::string, ConfusionMatrix> totals;
  for (const auto& v : variants) {
    curves.emplace(v, TrimapAccumulator(widths, classes));
    totals.emplace(v, ConfusionMatrix(classes));
    const auto& maps = by_variant[v];
    for (std::size_t i = 0; i < gts.size(); ++i) {
      curves.at(v).add(maps[i], gts[i]);
      totals.at(v).add(maps[i], gts[i]);
    }
  }

  std::vector<TrimapRow> rows(widths.size());
  std::map<std::string, std::vector<TrimapPoint>> points;
  for (const auto& v : variants) points[v] = curves.at(v).curve();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    rows[i].width = widths[i];
    if (points.count("input")) rows[i].input = points["input"][i].miou;
    if (points.count("prop")) rows[i].prop = points["prop"][i].miou;
    if (points.count("repl")) rows[i].repl = points["repl"][i].miou;
    if (points.count("fuse")) rows[i].fused = points["fuse"][i].miou;
  }
  const std::string csv = trimap_to_csv(rows);
  if (o.out.empty()) {
    out << csv;
    return kExitOk;
  }
  write_text(o.out, csv);
  out << "evaluated " << gts.size() << " images, " << classes << " classes\n";
  for (const auto& v : variants) out << "mIoU " << v << ' ' << fmt(totals.at(v).mean_iou()) << '\n';
  out << "trimap curve written to " << o.out << '\n';
  return kExitOk;
}

// ---- ablate ----------------------------------------------------------------

struct AblateOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds = {1};
  std::string widths = kDefaultWidths;
  std::string out_dir;
};

int cmd_ablate(const AblateOptions& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o.config, o.overrides, "");
  if (!rc.data_dir.empty()) throw ConfigError("ablate generates its own data; unset data_dir");
  if (o.seeds.empty()) throw ConfigError("--seeds must list at least one seed");
  AblationConfig ac;
  ac.data_seed = rc.data_seed;
  ac.train_count = rc.train_count;
  ac.val_count = rc.val_count;
  ac.size = rc.image_size;
  ac.corruption = rc.corruption;
  ac.train = rc.train;
  ac.trimap_widths = parse_widths(o.widths);

  const fs::path root(o.out_dir);
  std::ostringstream summary;
  for (std::size_t k = 0; k < o.seeds.size(); ++k) {
    ac.train.seed = o.seeds[k];
    ac.single_branches = k == 0;
    auto progress = [&](const std::string& stage, const LogRow& row) {
      out << "[seed " << o.seeds[k] << ' ' << stage << "] iter " << row.iter << " loss "
          << row.loss;
      if (row.val_miou) out << " val_miou " << *row.val_miou;
      out << '\n' << std::flush;
    };
    const AblationReport r = run_ablation(ac, progress);
    const std::string tag = "seed" + std::to_string(o.seeds[k]);
    write_text(root / ("trimap_" + tag + ".csv"), trimap_to_csv(r.trimap));
    write_text(root / ("joint_log_" + tag + ".csv"), log_to_csv(r.joint_log, Regime::kJoint));
    summary << "seed " << o.seeds[k] << ": input " << fmt(r.input_miou) << " fuse "
            << fmt(r.joint_fused_miou) << " prop " << fmt(r.joint_prop_miou) << " repl "
            << fmt(r.joint_repl_miou);
    if (r.prop_only_miou) summary << " prop_only " << fmt(r.prop_only_miou);
    if (r.repl_only_miou) summary << " repl_only " << fmt(r.repl_only_miou);
    summary << '\n';
  }
  write_text(root / "summary.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

}  // namespace

std::vector<int> parse_widths(const std::string& spec) {
  std::vector<int> widths;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || v < 1) {
      throw ConfigError("bad trimap width '" + s + "' in '" + spec + "'");
    }
    return v;
  };
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ',');) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      widths.push_back(number(part));
      continue;
    }
    const int lo = number(part.substr(0, dots));
    const int hi = number(part.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty width range '" + part + "'");
    for (int w = lo; w <= hi; ++w) widths.push_back(w);
  }
  if (widths.empty()) throw ConfigError("no trimap widths given");
  if (!std::is_sorted(widths.begin(), widths.end()) ||
      std::adjacent_find(widths.begin(), widths.end()) != widths.end()) {
    throw ConfigError("trimap widths must be strictly ascending");
  }
  return widths;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation refinement by label propagation and replacement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "segrefine 0.1.0");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic train/val dataset");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Training samples")->capture_default_str();
  gen_cmd->add_option("--val-count", gen.val_count, "Validation samples")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Image side, multiple of 8")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Classes including background")
      ->capture_default_str();
  gen_cmd->add_option("--jitter", gen.corruption.boundary_jitter_px, "Boundary jitter, pixels")
      ->capture_default_str();
  gen_cmd->add_option("--flip", gen.corruption.region_flip_rate, "Region flip probability")
      ->capture_default_str();
  gen_cmd->add_option("--blur", gen.corruption.blur_sigma, "Smoothing sigma")
      ->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "key=value run configuration");
  train_cmd->add_option("--regime", tr.regime, "joint, prop_only or repl_only");
  train_cmd->add_option("--set", tr.overrides, "Override a config key (key=value)");
  train_cmd->add_option("--out-checkpoint", tr.out_checkpoint, "Checkpoint path")->required();
  train_cmd->add_option("--log-csv", tr.log_csv, "Training log (default <checkpoint>.log.csv)");

  InferOptions inf;
  auto* infer_cmd = app.add_subcommand("infer", "Refine one initial probability map");
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "Trained checkpoint")->required();
  infer_cmd->add_option("--image", inf.image, "Image tensor (1, 3, h, w)")->required();
  infer_cmd->add_option("--init-probmap", inf.init, "Initial map (1, K, h, w)")->required();
  infer_cmd->add_option("--out-prefix", inf.out_prefix, "Output path prefix")->required();

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score label maps: mIoU and trimap curve");
  eval_cmd->add_option("--pred-dir", ev.pred_dir, "Predicted label maps")->required();
  eval_cmd->add_option("--gt-dir", ev.gt_dir, "Ground-truth label maps")->required();
  eval_cmd->add_option("--trimap-widths", ev.widths, "Band widths, e.g. 1..40 or 1,2,5")
      ->capture_default_str();
  eval_cmd->add_option("--classes", ev.classes, "Number of classes (default: from the data)");
  eval_cmd->add_option("--out", ev.out, "CSV path (default: standard output)");

  AblateOptions ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Joint vs single-branch ablation");
  ablate_cmd->add_option("--config", ab.config, "key=value run configuration");
  ablate_cmd->add_option("--set", ab.overrides, "Override a config key (key=value)");
  ablate_cmd->add_option("--seeds", ab.seeds, "Training seeds; single branches use the first")
      ->delimiter(',');
  ablate_cmd->add_option("--trimap-widths", ab.widths, "Band widths")->capture_default_str();
  ablate_cmd->add_option("--out-dir", ab.out_dir, "Output directory")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out, err);
    if (infer_cmd->parsed()) return cmd_infer(inf, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out, err);
    if (ablate_cmd->parsed()) return cmd_ablate(ab, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace segrefine::cli
