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

#include "segrefine/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>

#include "segrefine/error.hpp"

namespace segrefine {
namespace {

constexpr char kTensorMagic[4] = {'D', 'T', 'F', '1'};
constexpr char kCheckpointMagic[4] = {'S', 'R', 'C', 'K'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 28;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw Error("write failed");
  }
  void u16(std::uint16_t v) {
    const std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
    bytes(b, 2);
  }
  void u32(std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    bytes(b, 4);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  std::uint64_t offset() const { return offset_; }

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      fail("truncated: needed " + std::to_string(n) + " bytes, got " + std::to_string(got),
           offset_ + got);
    }
    offset_ += n;
  }
  std::uint16_t u16() {
    std::uint8_t b[2];
    bytes(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

  void expect_magic(const char (&magic)[4]) {
    const std::uint64_t at = offset_;
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) {
      fail("bad magic, expected '" + std::string(magic, 4) + "'", at);
    }
  }

  [[noreturn]] void fail(const std::string& msg, std::uint64_t at) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  std::istream& is_;
  std::string what_;
  std::uint64_t offset_ = 0;
};

void write_tensor_record(Writer& w, const Tensor& t) {
  w.bytes(kTensorMagic, 4);
  w.u32(4);
  const Shape& s = t.shape();
  for (const std::size_t d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
  for (const float v : t.values()) w.f32(v);
}

Tensor read_tensor_record(Reader& r) {
  r.expect_magic(kTensorMagic);
  const std::uint64_t rank_at = r.offset();
  const std::uint32_t rank = r.u32();
  if (rank < 1 || rank > 4) r.fail("unsupported rank " + std::to_string(rank), rank_at);
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = r.u32();
    dims[4 - rank + i] = d;
    count *= d;
    if (count > kMaxElements) r.fail("tensor too large", rank_at);
  }
  std::vector<float> values(count);
  for (auto& v : values) v = r.f32();
  return Tensor(Shape{dims[0], dims[1], dims[2], dims[3]}, std::move(values));
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "' for reading");
  return is;
}

void write_entry(Writer& w, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw Error("entry name too long");
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  write_tensor_record(w, t);
}

std::vector<std::pair<std::string, Tensor>> params_entries(const ModelParams<float>& p,
                                                           const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& l : p.layers()) {
    out.emplace_back(prefix + l.name + ".weight", l.weights.kernel);
    out.emplace_back(prefix + l.name + ".bias", l.weights.bias);
  }
  return out;
}

// Reassembles layers from "<layer>.weight"/"<layer>.bias" entries, keeping
// first-appearance order.
ModelParams<float> assemble_params(const std::vector<std::pair<std::string, Tensor>>& entries,
                                   const std::string& what) {
  std::vector<ModelParams<float>::Layer> layers;
  std::map<std::string, std::size_t> index;
  std::map<std::string, int> seen;
  for (const auto& [name, t] : entries) {
    const auto dot = name.rfind('.');
    if (dot == std::string::npos) throw FormatError(what + ": malformed entry name '" + name + "'");
    const std::string layer = name.substr(0, dot);
    const std::string kind = name.substr(dot + 1);
    if (!index.contains(layer)) {
      index[layer] = layers.size();
      layers.push_back({layer, {}});
    }
    auto& w = layers[index[layer]].weights;
    if (kind == "weight") {
      if (t.h() != 3 || t.w() != 3) {
        throw FormatError(what + ": kernel '" + name + "' is not 3x3: " + t.shape().str());
      }
      w.kernel = t;
      seen[layer] |= 1;
    } else if (kind == "bias") {
      w.bias = Tensor(Shape{1, t.size(), 1, 1}, std::vector<float>(t.values().begin(), t.values().end()));
      seen[layer] |= 2;
    } else {
      throw FormatError(what + ": unknown entry kind '" + name + "'");
    }
  }
  for (const auto& l : layers) {
    if (seen[l.name] != 3) throw FormatError(what + ": layer '" + l.name + "' is incomplete");
    if (l.weights.bias.size() != l.weights.kernel.n()) {
      throw FormatError(what + ": bias length mismatch for '" + l.name + "'");
    }
  }
  return ModelParams<float>(std::move(layers));
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  Writer w(os);
  write_tensor_record(w, t);
}

Tensor read_tensor(std::istream& is) {
  Reader r(is, "tensor");
  return read_tensor_record(r);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  auto os = open_out(path);
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  auto is = open_in(path);
  Reader r(is, path.string());
  return read_tensor_record(r);
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  auto entries = params_entries(ckpt.params, "");
  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    for (auto& e : params_entries(a.m, "adam.m/")) entries.push_back(std::move(e));
    for (auto& e : params_entries(a.v, "adam.v/")) entries.push_back(std::move(e));
    entries.emplace_back("adam.step", Tensor(Shape{1, 1, 1, 1}, {static_cast<float>(a.step)}));
    entries.emplace_back(
        "adam.hyper",
        Tensor(Shape{1, 4, 1, 1}, {static_cast<float>(a.hyper.lr), static_cast<float>(a.hyper.beta1),
                                   static_cast<float>(a.hyper.beta2), static_cast<float>(a.hyper.eps)}));
  }
  Writer w(os);
  w.bytes(kCheckpointMagic, 4);
  w.u32(Checkpoint::kVersion);
  w.u32(ckpt.num_classes);
  w.f32(ckpt.max_disp_px);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) write_entry(w, name, t);
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    r.fail("unsupported version " + std::to_string(version), version_at);
  }
  Checkpoint ck;
  ck.num_classes = r.u32();
  ck.max_disp_px = r.f32();
  const std::uint32_t count = r.u32();

  std::vector<std::pair<std::string, Tensor>> model, moment1, moment2;
  std::optional<float> step;
  std::optional<Tensor> hyper;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    Tensor t = read_tensor_record(r);
    if (name.starts_with("adam.m/")) {
      moment1.emplace_back(name.substr(7), std::move(t));
    } else if (name.starts_with("adam.v/")) {
      moment2.emplace_back(name.substr(7), std::move(t));
    } else if (name == "adam.step") {
      step = t.size() == 1 ? t[0] : -1.0f;
    } else if (name == "adam.hyper") {
      hyper = std::move(t);
    } else {
      model.emplace_back(std::move(name), std::move(t));
    }
  }
  ck.params = assemble_params(model, "checkpoint");
  if (ck.params.layers().empty()) throw FormatError("checkpoint: no model parameters");
  if (ck.params.num_classes() != ck.num_classes) {
    throw FormatError("checkpoint: header num_classes " + std::to_string(ck.num_classes) +
                      " disagrees with conv1_1 input channels");
  }
  if (step || hyper || !moment1.empty() || !moment2.empty()) {
    if (!step || !hyper || hyper->size() != 4 || *step < 0) {
      throw FormatError("checkpoint: incomplete optimizer state");
    }
    AdamState<float> a;
    a.step = static_cast<std::uint64_t>(*step);
    a.hyper = {(*hyper)[0], (*hyper)[1], (*hyper)[2], (*hyper)[3]};
    a.m = assemble_params(moment1, "checkpoint optimizer state");
    a.v = assemble_params(moment2, "checkpoint optimizer state");
    ck.adam = std::move(a);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto os = open_out(path);
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  try {
    return read_checkpoint(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

// Reads a P5/P6 header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

struct NetpbmHeader {
  std::size_t w;
  std::size_t h;
};

NetpbmHeader read_netpbm_header(std::istream& is, const std::string& magic,
                                const std::filesystem::path& path) {
  const std::string m = header_token(is);
  if (m != magic) throw FormatError(path.string() + ": expected " + magic + " header");
  try {
    const std::size_t w = std::stoul(header_token(is));
    const std::size_t h = std::stoul(header_token(is));
    const std::size_t maxval = std::stoul(header_token(is));
    if (maxval != 255) throw FormatError(path.string() + ": maxval must be 255");
    return {w, h};
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed header");
  }
}

}  // namespace

void save_pgm(const std::filesystem::path& path, const LabelMap& labels) {
  if (labels.n != 1) throw ShapeError("save_pgm: expects a single label map");
  auto os = open_out(path);
  os << "P5\n" << labels.w << " " << labels.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(labels.labels.data()),
           static_cast<std::streamsize>(labels.labels.size()));
  if (!os) throw Error("write failed: " + path.string());
}

LabelMap load_pgm(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto hdr = read_netpbm_header(is, "P5", path);
  LabelMap out(1, hdr.h, hdr.w);
  is.read(reinterpret_cast<char*>(out.labels.data()),
          static_cast<std::streamsize>(out.labels.size()));
  if (static_cast<std::size_t>(is.gcount()) != out.labels.size()) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  char id[16];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(id, sizeof(id), "%05zu", i);
    save_tensor(dir / (std::string(id) + ".image.dtf"), samples[i].image);
    save_pgm(dir / (std::string(id) + ".gt.pgm"), samples[i].gt);
    save_tensor(dir / (std::string(id) + ".init.dtf"), samples[i].init);
  }
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t num_classes) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  constexpr std::string_view kSuffix = ".image.dtf";
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > kSuffix.size() && name.ends_with(kSuffix)) {
      ids.push_back(name.substr(0, name.size() - kSuffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto gt_path = dir / (id + ".gt.pgm");
    const auto init_path = dir / (id + ".init.dtf");
    if (!std::filesystem::exists(gt_path) || !std::filesystem::exists(init_path)) {
      throw DataError("sample " + id + " in " + dir.string() + " is incomplete");
    }
    Sample s{load_tensor(dir / (id + ".image.dtf")), load_tensor(init_path), load_pgm(gt_path)};
    if (s.image.n() != 1 || s.image.c() != 3 || s.init.n() != 1 || s.init.c() != num_classes ||
        s.image.h() != s.gt.h || s.image.w() != s.gt.w || s.init.h() != s.gt.h ||
        s.init.w() != s.gt.w) {
      throw DataError("sample " + id + " in " + dir.string() + " has inconsistent shapes");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_ppm(const std::filesystem::path& path, const RgbImage& image) {
  if (image.rgb.size() != image.h * image.w * 3) throw ShapeError("save_ppm: bad buffer size");
  auto os = open_out(path);
  os << "P6\n" << image.w << " " << image.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()),
           static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw Error("write failed: " + path.string());
}

RgbImage load_ppm(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto hdr = read_netpbm_header(is, "P6", path);
  RgbImage out{hdr.h, hdr.w, std::vector<std::uint8_t>(hdr.h * hdr.w * 3)};
  is.read(reinterpret_cast<char*>(out.rgb.data()), static_cast<std::streamsize>(out.rgb.size()));
  if (static_cast<std::size_t>(is.gcount()) != out.rgb.size()) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  return out;
}

const std::array<std::array<std::uint8_t, 3>, 256>& label_palette() {
  static const auto palette = [] {
    std::array<std::array<std::uint8_t, 3>, 256> p{};
    for (int i = 0; i < 256; ++i) {
      int c = i;
      int r = 0, g = 0, b = 0;
      for (int j = 0; j < 8; ++j) {
        r |= ((c >> 0) & 1) << (7 - j);
        g |= ((c >> 1) & 1) << (7 - j);
        b |= ((c >> 2) & 1) << (7 - j);
        c >>= 3;
      }
      p[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
              static_cast<std::uint8_t>(b)};
    }
    return p;
  }();
  return palette;
}

RgbImage colorize(const LabelMap& labels) {
  if (labels.n != 1) throw ShapeError("colorize: expects a single label map");
  RgbImage out{labels.h, labels.w, std::vector<std::uint8_t>(labels.size() * 3)};
  const auto& pal = label_palette();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int k = 0; k < 3; ++k) out.rgb[3 * i + k] = pal[labels.labels[i]][k];
  }
  return out;
}

RgbImage displacement_to_rgb(const Tensor& disp, double max_disp_px) {
  if (disp.n() != 1 || disp.c() != 2) throw ShapeError("displacement_to_rgb: expects (1, 2, h, w)");
  RgbImage out{disp.h(), disp.w(), std::vector<std::uint8_t>(disp.h() * disp.w() * 3)};
  const std::size_t plane = disp.h() * disp.w();
  for (std::size_t p = 0; p < plane; ++p) {
    const double dx = disp.plane(0, 0)[p];
    const double dy = disp.plane(0, 1)[p];
    const double mag = max_disp_px > 0 ? std::min(1.0, std::hypot(dx, dy) / max_disp_px) : 0.0;
    const double hue = (std::atan2(dy, dx) + std::numbers::pi) / (2.0 * std::numbers::pi) * 6.0;
    const int sector = static_cast<int>(hue) % 6;
    const double f = hue - std::floor(hue);
    const double v = mag;
    const double q = v * (1 - f);
    const double t = v * f;
    double r = 0, g = 0, b = 0;
    switch (sector) {
      case 0: r = v; g = t; b = 0; break;
      case 1: r = q; g = v; b = 0; break;
      case 2: r = 0; g = v; b = t; break;
      case 3: r = 0; g = q; b = v; break;
      case 4: r = t; g = 0; b = v; break;
      default: r = v; g = 0; b = q; break;
    }
    out.rgb[3 * p] = static_cast<std::uint8_t>(std::lround(255 * r));
    out.rgb[3 * p + 1] = static_cast<std::uint8_t>(std::lround(255 * g));
    out.rgb[3 * p + 2] = static_cast<std::uint8_t>(std::lround(255 * b));
  }
  return out;
}

}  // namespace segrefine
