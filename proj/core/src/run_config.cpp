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

#include "segrefine/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "segrefine/error.hpp"

namespace segrefine {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename T>
Setter number(T RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) {
    c.*field = parse_number<T>(k, v);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["regime"] = [](RunConfig& c, auto, auto v) { c.train.regime = parse_regime(std::string(v)); };
    t["iterations"] = [](RunConfig& c, auto k, auto v) {
      c.train.iterations = parse_number<std::size_t>(k, v);
    };
    t["batch_size"] = [](RunConfig& c, auto k, auto v) {
      c.train.batch_size = parse_number<std::size_t>(k, v);
    };
    t["lr"] = [](RunConfig& c, auto k, auto v) { c.train.lr = parse_number<double>(k, v); };
    t["seed"] = [](RunConfig& c, auto k, auto v) {
      c.train.seed = parse_number<std::uint64_t>(k, v);
    };
    t["max_disp_px"] = [](RunConfig& c, auto k, auto v) {
      c.train.max_disp_px = parse_number<double>(k, v);
    };
    t["num_classes"] = [](RunConfig& c, auto k, auto v) {
      c.train.num_classes = parse_number<std::size_t>(k, v);
    };
    t["width_divisor"] = [](RunConfig& c, auto k, auto v) {
      c.train.width_divisor = parse_number<std::size_t>(k, v);
    };
    t["mirror"] = [](RunConfig& c, auto k, auto v) { c.train.augment.mirror = parse_bool(k, v); };
    t["rescale"] = [](RunConfig& c, auto k, auto v) { c.train.augment.rescale = parse_bool(k, v); };
    t["min_scale"] = [](RunConfig& c, auto k, auto v) {
      c.train.augment.min_scale = parse_number<double>(k, v);
    };
    t["max_scale"] = [](RunConfig& c, auto k, auto v) {
      c.train.augment.max_scale = parse_number<double>(k, v);
    };
    t["crop_size"] = [](RunConfig& c, auto k, auto v) {
      c.train.augment.crop_size = parse_number<std::size_t>(k, v);
    };
    t["log_every"] = [](RunConfig& c, auto k, auto v) {
      c.train.log_every = parse_number<std::size_t>(k, v);
    };
    t["eval_every"] = [](RunConfig& c, auto k, auto v) {
      c.train.eval_every = parse_number<std::size_t>(k, v);
    };
    t["diagnostic_checkpoint"] = [](RunConfig& c, auto, auto v) {
      c.train.diagnostic_checkpoint = std::string(v);
    };
    t["boundary_jitter_px"] = [](RunConfig& c, auto k, auto v) {
      c.corruption.boundary_jitter_px = parse_number<double>(k, v);
    };
    t["region_flip_rate"] = [](RunConfig& c, auto k, auto v) {
      c.corruption.region_flip_rate = parse_number<double>(k, v);
    };
    t["blur_sigma"] = [](RunConfig& c, auto k, auto v) {
      c.corruption.blur_sigma = parse_number<double>(k, v);
    };
    t["data_seed"] = number(&RunConfig::data_seed);
    t["train_count"] = number(&RunConfig::train_count);
    t["val_count"] = number(&RunConfig::val_count);
    t["image_size"] = number(&RunConfig::image_size);
    t["data_dir"] = [](RunConfig& c, auto, auto v) { c.data_dir = std::string(v); };
    t["log_csv"] = [](RunConfig& c, auto, auto v) { c.log_csv = std::string(v); };
    return t;
  }();
  return table;
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    }
    try {
      it->second(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  validate(config.train);
  const auto& k = config.corruption;
  if (k.boundary_jitter_px < 0.0) throw ConfigError("boundary_jitter_px must be non-negative");
  if (k.blur_sigma < 0.0) throw ConfigError("blur_sigma must be non-negative");
  if (k.region_flip_rate < 0.0 || k.region_flip_rate > 1.0) {
    throw ConfigError("region_flip_rate must lie in [0, 1]");
  }
  if (config.image_size == 0 || config.image_size % 8 != 0) {
    throw ConfigError("image_size must be a positive multiple of 8");
  }
  if (config.train_count == 0) throw ConfigError("train_count must be >= 1");
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& t = c.train;
  os << "regime=" << to_string(t.regime) << '\n'
     << "iterations=" << t.iterations << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "lr=" << t.lr << '\n'
     << "seed=" << t.seed << '\n'
     << "max_disp_px=" << t.max_disp_px << '\n'
     << "num_classes=" << t.num_classes << '\n'
     << "width_divisor=" << t.width_divisor << '\n'
     << "mirror=" << (t.augment.mirror ? "true" : "false") << '\n'
     << "rescale=" << (t.augment.rescale ? "true" : "false") << '\n'
     << "min_scale=" << t.augment.min_scale << '\n'
     << "max_scale=" << t.augment.max_scale << '\n'
     << "crop_size=" << t.augment.crop_size << '\n'
     << "log_every=" << t.log_every << '\n'
     << "eval_every=" << t.eval_every << '\n'
     << "diagnostic_checkpoint=" << t.diagnostic_checkpoint << '\n'
     << "boundary_jitter_px=" << c.corruption.boundary_jitter_px << '\n'
     << "region_flip_rate=" << c.corruption.region_flip_rate << '\n'
     << "blur_sigma=" << c.corruption.blur_sigma << '\n'
     << "data_seed=" << c.data_seed << '\n'
     << "train_count=" << c.train_count << '\n'
     << "val_count=" << c.val_count << '\n'
     << "image_size=" << c.image_size << '\n'
     << "data_dir=" << c.data_dir << '\n'
     << "log_csv=" << c.log_csv << '\n';
  return os.str();
}

}  // namespace segrefine
