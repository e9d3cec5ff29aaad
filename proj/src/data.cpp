// SPDX-License-Identifier: Apache-2.0
#include "mask3d/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mask3d/error.hpp"
#include "mask3d/netpbm.hpp"
#include "mask3d/rng.hpp"

namespace mask3d {

namespace fs = std::filesystem;

RgbdFrame make_frame(Tensor<float> color, Tensor<float> depth, std::string frame_id) {
  if (color.rank() != 3 || depth.rank() != 3 || color.dim(0) != 3 || depth.dim(0) != 1 ||
      color.dim(1) != depth.dim(1) || color.dim(2) != depth.dim(2)) {
    throw DimensionError("frame: color " + shape_str(color.shape()) + " and depth " + shape_str(depth.shape()) +
                         " disagree");
  }
  RgbdFrame f;
  const auto d = depth.data();
  f.valid.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) f.valid[i] = d[i] > 0.0f ? 1 : 0;
  f.color = std::move(color);
  f.depth = std::move(depth);
  f.frame_id = std::move(frame_id);
  return f;
}

namespace {

struct Hit {
  float z = 0;
  std::array<float, 3> normal{0, 0, -1};
};

std::array<float, 3> normalized(float x, float y, float z) {
  const float len = std::sqrt(x * x + y * y + z * z);
  return {x / len, y / len, z / len};
}

bool hit_object(const SceneObject& o, float x, float y, Hit& hit) {
  const float dx = x - o.cx, dy = y - o.cy;
  switch (o.kind) {
    case ObjectKind::kPlane: {
      if (std::abs(dx) > o.size || std::abs(dy) > o.size * o.aspect) return false;
      hit.z = o.cz + o.slope_x * dx + o.slope_y * dy;
      hit.normal = normalized(o.slope_x, o.slope_y, -1.0f);
      return true;
    }
    case ObjectKind::kSphere: {
      const float r2 = o.size * o.size, d2 = dx * dx + dy * dy;
      if (d2 >= r2) return false;
      const float dz = std::sqrt(r2 - d2);
      hit.z = o.cz - dz;
      hit.normal = {dx / o.size, dy / o.size, -dz / o.size};
      return true;
    }
    case ObjectKind::kBox: {
      if (std::abs(dy) > o.size * o.aspect) return false;
      // Square footprint in the x-z plane, rotated by yaw; the visible surface
      // is the nearest edge crossing the viewing ray.
      const float c = std::cos(o.yaw), s = std::sin(o.yaw);
      const float corners[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
      std::array<std::array<float, 2>, 4> v{};
      for (int k = 0; k < 4; ++k) {
        const float u = corners[k][0] * o.size, w = corners[k][1] * o.size;
        v[k] = {c * u - s * w, s * u + c * w};
      }
      bool found = false;
      for (int k = 0; k < 4; ++k) {
        const auto& a = v[k];
        const auto& b = v[(k + 1) % 4];
        const float lo = std::min(a[0], b[0]), hi = std::max(a[0], b[0]);
        if (hi - lo < 1e-6f || dx < lo || dx > hi) continue;
        const float t = (dx - a[0]) / (b[0] - a[0]);
        const float z = a[1] + t * (b[1] - a[1]);
        if (!found || z < hit.z) {
          found = true;
          hit.z = z;
          const float ex = b[0] - a[0], ez = b[1] - a[1];
          float nx = ez, nz = -ex;
          if (nz > 0) {
            nx = -nx;
            nz = -nz;
          }
          hit.normal = normalized(nx, 0.0f, nz);
        }
      }
      if (found) hit.z += o.cz;
      return found;
    }
  }
  return false;
}

struct Raster {
  std::vector<float> depth;
  std::vector<std::array<float, 3>> normal;
  std::vector<int> owner;  // object index, -1 = background
};

Raster rasterize(const SceneSpec& spec, std::size_t h, std::size_t w) {
  Raster r;
  r.depth.assign(h * w, spec.background_depth);
  r.normal.assign(h * w, normalized(spec.background_slope_x, spec.background_slope_y, -1.0f));
  r.owner.assign(h * w, -1);
  const float unit = static_cast<float>(h);
  const float mid_x = 0.5f * static_cast<float>(w) / unit, mid_y = 0.5f;
  for (std::size_t py = 0; py < h; ++py) {
    for (std::size_t px = 0; px < w; ++px) {
      const float x = (static_cast<float>(px) + 0.5f) / unit;
      const float y = (static_cast<float>(py) + 0.5f) / unit;
      const std::size_t i = py * w + px;
      r.depth[i] += spec.background_slope_x * (x - mid_x) + spec.background_slope_y * (y - mid_y);
      for (std::size_t k = 0; k < spec.objects.size(); ++k) {
        Hit hit;
        if (hit_object(spec.objects[k], x, y, hit) && hit.z < r.depth[i]) {
          r.depth[i] = hit.z;
          r.normal[i] = hit.normal;
          r.owner[i] = static_cast<int>(k);
        }
      }
      r.depth[i] = std::clamp(r.depth[i], kMinDepth, kMaxDepth);
    }
  }
  return r;
}

}  // namespace

SceneSpec random_scene(std::uint64_t seed, std::size_t max_holes) {
  auto rng = make_rng(seed, "scene");
  SceneSpec spec;
  spec.seed = seed;
  // Signed slopes bounded away from zero: exactly flat patches carry no
  // signal under per-patch standardization.
  auto slope = [&rng](double lo, double hi) {
    const double m = uniform(rng, lo, hi);
    return static_cast<float>(uniform01(rng) < 0.5 ? -m : m);
  };
  spec.background_depth = static_cast<float>(uniform(rng, 6.0, 8.0));
  spec.background_slope_x = slope(0.5, 1.5);
  spec.background_slope_y = slope(0.5, 1.5);
  for (auto& a : spec.background_albedo) a = static_cast<float>(uniform(rng, 0.3, 0.9));
  const auto n = 1 + uniform_index(rng, 8);
  for (std::uint64_t k = 0; k < n; ++k) {
    SceneObject o;
    o.kind = static_cast<ObjectKind>(uniform_index(rng, 3));
    for (auto& a : o.albedo) a = static_cast<float>(uniform(rng, 0.2, 1.0));
    o.cx = static_cast<float>(uniform(rng, 0.0, 4.0 / 3.0));
    o.cy = static_cast<float>(uniform(rng, 0.0, 1.0));
    o.cz = static_cast<float>(uniform(rng, 1.5, 4.0));
    o.aspect = static_cast<float>(uniform(rng, 0.6, 1.6));
    switch (o.kind) {
      case ObjectKind::kPlane:
        o.size = static_cast<float>(uniform(rng, 0.15, 0.45));
        o.slope_x = slope(0.3, 2.0);
        o.slope_y = slope(0.3, 2.0);
        break;
      case ObjectKind::kSphere:
        o.size = static_cast<float>(uniform(rng, 0.08, 0.25));
        break;
      case ObjectKind::kBox:
        o.size = static_cast<float>(uniform(rng, 0.08, 0.22));
        o.yaw = static_cast<float>(uniform(rng, 0.25, 1.32));
        break;
    }
    spec.objects.push_back(o);
  }
  spec.holes = max_holes == 0 ? 0 : static_cast<std::size_t>(uniform_index(rng, max_holes + 1));
  return spec;
}

RgbdFrame render_frame(const SceneSpec& spec, std::size_t h, std::size_t w) {
  const auto r = rasterize(spec, h, w);
  const auto light = normalized(-0.4f, -0.6f, -1.0f);
  auto noise = make_rng(spec.seed, "pixel-noise");
  std::vector<float> color(3 * h * w), depth(r.depth);
  for (std::size_t i = 0; i < h * w; ++i) {
    const float* albedo = r.owner[i] < 0 ? spec.background_albedo : spec.objects[r.owner[i]].albedo;
    const auto& n = r.normal[i];
    const float lambert = std::max(0.0f, n[0] * light[0] + n[1] * light[1] + n[2] * light[2]);
    const float shade = (0.25f + 0.75f * lambert) / (1.0f + 0.12f * (r.depth[i] - kMinDepth));
    for (std::size_t c = 0; c < 3; ++c) {
      const float jitter = spec.color_noise * static_cast<float>(uniform(noise, -1.0, 1.0));
      color[c * h * w + i] = std::clamp(albedo[c] * shade + jitter, 0.0f, 1.0f);
    }
  }
  if (spec.holes > 0) {
    auto rng = make_rng(spec.seed, "holes");
    for (std::size_t k = 0; k < spec.holes; ++k) {
      const auto hh = 2 + uniform_index(rng, 7), hw = 2 + uniform_index(rng, 7);
      const auto y0 = uniform_index(rng, h), x0 = uniform_index(rng, w);
      for (std::size_t y = y0; y < std::min<std::size_t>(h, y0 + hh); ++y)
        for (std::size_t x = x0; x < std::min<std::size_t>(w, x0 + hw); ++x) depth[y * w + x] = 0.0f;
    }
  }
  return make_frame(Tensor<float>::from({3, h, w}, std::move(color)),
                    Tensor<float>::from({1, h, w}, std::move(depth)), std::to_string(spec.seed));
}

std::vector<std::int32_t> render_classes(const SceneSpec& spec, std::size_t h, std::size_t w) {
  const auto r = rasterize(spec, h, w);
  std::vector<std::int32_t> out(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i)
    if (r.owner[i] >= 0) out[i] = class_of(spec.objects[r.owner[i]].kind);
  return out;
}

std::vector<std::int32_t> label_patches(const SceneSpec& spec, const PatchGrid& grid) {
  const auto classes = render_classes(spec, grid.image_h, grid.image_w);
  std::vector<std::int32_t> labels(grid.count(), 0);
  const std::size_t p = grid.patch, w = grid.image_w;
  for (std::size_t i = 0; i < grid.count(); ++i) {
    std::array<std::size_t, kNumClasses> votes{};
    const std::size_t y0 = (i / grid.cols()) * p, x0 = (i % grid.cols()) * p;
    for (std::size_t y = y0; y < y0 + p; ++y)
      for (std::size_t x = x0; x < x0 + p; ++x) ++votes[classes[y * w + x]];
    labels[i] = static_cast<std::int32_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return labels;
}

std::vector<RgbdFrame> synthesize_corpus(std::size_t count, std::uint64_t seed, const std::string& split,
                                         const PatchGrid& grid, std::size_t max_holes) {
  std::vector<RgbdFrame> frames;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto spec = random_scene(derive_seed(seed, "data/" + split, i), max_holes);
    auto frame = render_frame(spec, grid.image_h, grid.image_w);
    frame.frame_id = format_frame_id(i);
    frame.labels = label_patches(spec, grid);
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::string format_frame_id(std::size_t id) {
  std::string s = std::to_string(id);
  if (s.size() < 6) s.insert(0, 6 - s.size(), '0');
  return s;
}

void write_frame(const fs::path& dir, const RgbdFrame& frame) {
  const std::size_t h = frame.height(), w = frame.width();
  RgbImage8 rgb{w, h, std::vector<std::uint8_t>(3 * h * w)};
  const auto c = frame.color.data();
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t ch = 0; ch < 3; ++ch)
      rgb.pixels[3 * i + ch] =
          static_cast<std::uint8_t>(std::lround(std::clamp(c[ch * h * w + i], 0.0f, 1.0f) * 255.0f));
  GrayImage16 depth{w, h, std::vector<std::uint16_t>(h * w)};
  const auto d = frame.depth.data();
  for (std::size_t i = 0; i < h * w; ++i)
    depth.pixels[i] = static_cast<std::uint16_t>(std::clamp<long>(std::lround(d[i] * 1000.0f), 0, 65535));
  write_ppm(dir / (frame.frame_id + ".color.ppm"), rgb);
  write_pgm16(dir / (frame.frame_id + ".depth.pgm"), depth);
  if (!frame.labels.empty()) {
    std::ofstream out(dir / (frame.frame_id + ".labels.txt"));
    for (std::size_t i = 0; i < frame.labels.size(); ++i) out << (i ? " " : "") << frame.labels[i];
    out << '\n';
    if (!out) throw DataError("cannot write labels for frame " + frame.frame_id);
  }
}

namespace {

bool is_decimal(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

}  // namespace

FrameDirReader::FrameDirReader(const fs::path& dir, std::size_t stride) : dir_(dir) {
  if (stride == 0) throw ContractError("frame stride must be >= 1");
  if (!fs::is_directory(dir)) throw DataError("frame directory not found: " + dir.string());
  // id -> (has color, has depth)
  std::map<std::uint64_t, std::pair<std::string, std::array<bool, 2>>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    const auto dot = name.find('.');
    if (dot == std::string::npos) continue;
    const auto id = name.substr(0, dot), rest = name.substr(dot);
    int slot = rest == ".color.ppm" ? 0 : rest == ".depth.pgm" ? 1 : -1;
    if (slot < 0) continue;
    if (!is_decimal(id)) throw DataError("malformed frame id in " + entry.path().string());
    auto& rec = found[std::stoull(id)];
    rec.first = id;
    rec.second[slot] = true;
  }
  std::size_t k = 0;
  for (const auto& [num, rec] : found) {
    if (!rec.second[0] || !rec.second[1]) {
      throw DataError("unpaired frame: " + (dir / (rec.first + (rec.second[0] ? ".color.ppm" : ".depth.pgm"))).string() +
                      " has no " + (rec.second[0] ? "depth" : "color") + " counterpart");
    }
    if (k++ % stride == 0) ids_.push_back(rec.first);
  }
}

std::optional<RgbdFrame> FrameDirReader::next() {
  if (cursor_ >= ids_.size()) return std::nullopt;
  return load_frame(dir_, ids_[cursor_++]);
}

RgbdFrame load_frame(const fs::path& dir, const std::string& id) {
  const auto color_path = dir / (id + ".color.ppm");
  const auto depth_path = dir / (id + ".depth.pgm");
  const auto rgb = read_ppm(color_path);
  const auto depth = read_pgm16(depth_path);
  if (rgb.width != depth.width || rgb.height != depth.height) {
    throw DataError(depth_path.string() + ": size differs from " + color_path.string());
  }
  const std::size_t h = rgb.height, w = rgb.width;
  std::vector<float> color(3 * h * w), meters(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) color[ch * h * w + i] = static_cast<float>(rgb.pixels[3 * i + ch]) / 255.0f;
    meters[i] = static_cast<float>(depth.pixels[i]) / 1000.0f;
  }
  auto frame = make_frame(Tensor<float>::from({3, h, w}, std::move(color)),
                          Tensor<float>::from({1, h, w}, std::move(meters)), id);
  const auto label_path = dir / (id + ".labels.txt");
  if (fs::exists(label_path)) {
    std::ifstream in(label_path);
    std::string tok;
    while (in >> tok) {
      std::int32_t v = 0;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size() || v < 0)
        throw DataError(label_path.string() + ": malformed label '" + tok + "'");
      frame.labels.push_back(v);
    }
  }
  return frame;
}

std::vector<RgbdFrame> load_frame_dir(const fs::path& dir, std::size_t stride) {
  FrameDirReader reader(dir, stride);
  std::vector<RgbdFrame> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

}  // namespace mask3d
