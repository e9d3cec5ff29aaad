// SPDX-License-Identifier: Apache-2.0
//
// RGB-D frames: procedural orthographic scenes for desk-scale experiments and
// a reader/writer for on-disk frame directories.
//
// Directory format, ids zero-padded decimal:
//   <id>.color.ppm    binary P6, 8-bit
//   <id>.depth.pgm    binary P5, 16-bit big-endian millimeters (0 = invalid)
//   <id>.labels.txt   optional, one class id per patch, space-separated
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mask3d/masking.hpp"
#include "mask3d/tensor.hpp"

namespace mask3d {

struct RgbdFrame {
  Tensor<float> color;              // [3,h,w] in [0,1]
  Tensor<float> depth;              // [1,h,w] meters, 0 = invalid
  std::vector<std::uint8_t> valid;  // h*w, exactly depth > 0
  std::string frame_id;
  std::vector<std::int32_t> labels;  // per-patch class ids; empty if unknown

  std::size_t height() const { return depth.dim(1); }
  std::size_t width() const { return depth.dim(2); }
};

/// Builds a frame from color/depth, deriving the validity mask. Throws
/// DimensionError if the two disagree on size.
RgbdFrame make_frame(Tensor<float> color, Tensor<float> depth, std::string frame_id);

enum class ObjectKind : std::uint8_t { kPlane = 0, kSphere = 1, kBox = 2 };

/// Segmentation class of an object kind; background is 0.
inline std::int32_t class_of(ObjectKind kind) { return static_cast<std::int32_t>(kind) + 1; }
inline constexpr std::int32_t kNumClasses = 4;

/// Scene coordinates: x to the right and y downwards in units of the image
/// height, z is metric depth along the viewing axis.
struct SceneObject {
  ObjectKind kind = ObjectKind::kPlane;
  float albedo[3] = {0.5f, 0.5f, 0.5f};
  float cx = 0.5f, cy = 0.5f, cz = 4.0f;
  float size = 0.2f;        // sphere radius, box/plane half-extent
  float aspect = 1.0f;      // plane/box height over width
  float slope_x = 0.0f;     // plane depth gradient (m per unit x)
  float slope_y = 0.0f;
  float yaw = 0.0f;         // box rotation about the vertical axis (radians)
};

struct SceneSpec {
  std::uint64_t seed = 0;
  float background_depth = 8.0f;  // at the frame center
  float background_slope_x = 0.0f;  // meters per image-height unit
  float background_slope_y = 0.0f;
  float background_albedo[3] = {0.6f, 0.6f, 0.6f};
  std::vector<SceneObject> objects;
  std::size_t holes = 0;  // rectangular invalid-depth blobs
  float color_noise = 0.02f;
};

inline constexpr float kMinDepth = 0.5f;
inline constexpr float kMaxDepth = 10.0f;

/// Random scene with 1..8 objects drawn from the given seed.
SceneSpec random_scene(std::uint64_t seed, std::size_t max_holes = 0);

/// Orthographic z-buffer render. Color is albedo times a Lambertian term
/// times a depth falloff, so color carries depth information. Deterministic
/// per spec.seed.
RgbdFrame render_frame(const SceneSpec& spec, std::size_t h, std::size_t w);

/// Per-patch class by majority over pixels (ties to the lower class id).
std::vector<std::int32_t> label_patches(const SceneSpec& spec, const PatchGrid& grid);

/// Class id per pixel of the rendered scene.
std::vector<std::int32_t> render_classes(const SceneSpec& spec, std::size_t h, std::size_t w);

/// Rendered and labeled frames for seeds derive_seed(seed, split, i).
std::vector<RgbdFrame> synthesize_corpus(std::size_t count, std::uint64_t seed, const std::string& split,
                                         const PatchGrid& grid, std::size_t max_holes = 0);

std::string format_frame_id(std::size_t id);

/// Writes <id>.color.ppm, <id>.depth.pgm and, when labels are present,
/// <id>.labels.txt. Depth is rounded to millimeters.
void write_frame(const std::filesystem::path& dir, const RgbdFrame& frame);

/// Lazily yields every stride-th paired frame of a directory in id order.
/// Unpaired or malformed files throw DataError naming the file.
class FrameDirReader {
 public:
  FrameDirReader(const std::filesystem::path& dir, std::size_t stride = 1);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<RgbdFrame> next();

 private:
  std::filesystem::path dir_;
  std::vector<std::string> ids_;
  std::size_t cursor_ = 0;
};

RgbdFrame load_frame(const std::filesystem::path& dir, const std::string& id);
std::vector<RgbdFrame> load_frame_dir(const std::filesystem::path& dir, std::size_t stride = 1);

}  // namespace mask3d
