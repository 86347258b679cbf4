#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pm/gt.hpp"
#include "pm/tensor.hpp"

namespace pm {

// Depth-scene data supply: a toy articulated figure synthesizer, background
// fusion, sensor-noise simulation, augmentation, normalization, and file IO.
// Depth values are meters in [0, 8]; exactly 0 means "missing" (no return).

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // row-major meters

  static DepthImage create(int w, int h, float fill = 0.f);
  float at(int y, int x) const { return depth[static_cast<size_t>(y) * width + x]; }
  float& at(int y, int x) { return depth[static_cast<size_t>(y) * width + x]; }
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> on;  // row-major, 1 = silhouette pixel

  static Mask create(int w, int h);
  bool at(int y, int x) const { return on[static_cast<size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { on[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  int64_t count() const;
};

// ---- file formats ----
// Depth: magic "DIH1", u32 width, u32 height, then width*height little-endian
// 32-bit floats, row-major meters. Mask: magic "MSK1", u32 width, u32 height,
// then width*height bytes (0 or 1).
DepthImage load_depth(const std::string& path);
void save_depth(const std::string& path, const DepthImage& img);
Mask load_mask(const std::string& path);
void save_mask(const std::string& path, const Mask& mask);

/// Network input [1, H, W]: meters map linearly, 0 m -> -0.5 and 8 m -> +0.5,
/// so missing pixels coincide with zero depth.
TensorPtr normalize(const DepthImage& img);

/// Composite: foreground pixels (mask on) keep fg depth, the rest takes bg.
/// If the closest background pixel behind the silhouette leaves less than
/// `margin` meters of separation (min over mask of bg - fg), the whole
/// background is pushed back by a constant restoring the margin; missing
/// background pixels stay missing and are ignored by the margin computation.
/// Shifted values clamp at the 8 m range limit.
DepthImage fuse_background(const DepthImage& fg, const Mask& mask,
                           const DepthImage& bg, float margin = 0.5f);

/// Structured depth-sensor artifacts for the "real-like" domain: zero bands
/// 1-3 px wide on the far side of depth discontinuities (edge shadows), plus
/// salt dropout zeroing a `salt_frac` share of all pixels.
DepthImage apply_sensor_noise(const DepthImage& img, std::mt19937_64& rng,
                              float edge_threshold = 0.3f,
                              float salt_frac = 0.05f);

// ---- scene synthesis ----

/// Joint articulation half-ranges in radians (angles drawn uniformly).
struct PoseRanges {
  float lean = 0.25f;      // whole-torso tilt
  float shoulder = 0.9f;   // arm swing from straight down
  float elbow = 1.1f;      // forearm bend, one-sided
  float hip = 0.5f;        // leg swing from straight down
  float knee = 0.9f;       // shin bend, one-sided
};

struct SceneConfig {
  int width = 192;
  int height = 192;
  int min_persons = 1;
  int max_persons = 3;
  float min_distance_m = 2.f;  // camera distance of figure centers
  float max_distance_m = 7.f;
  PoseRanges ranges;
  bool edge_shadows = false;  // forward to apply_sensor_noise after rendering
  bool salt_dropout = false;
  uint64_t seed = 0;
  int max_retries = 64;  // placement attempts per person before giving up
};

struct Scene {
  DepthImage depth;                // figures over missing background
  SkeletonAnnotation ann;          // exact projected landmark positions
  Mask mask;                       // union silhouette
  std::vector<Mask> person_masks;  // per person, front-most pixels only
};

/// Renders capsule-limb stick figures through a pinhole camera with a
/// z-buffer. Landmark image positions are the exact projections of the 3D
/// joints; a landmark is visible when the front-most surface at its pixel
/// belongs to its own person (so only other persons or the frame edge hide
/// it). Figures are placed fully in frame, at least 0.9 m apart; placement
/// retries up to max_retries per person, then throws config_error. Same seed,
/// same scene, bit for bit.
Scene synth_scene(const SceneConfig& config);

/// Smooth tilted back wall with a few box-shaped obstacles in front of it.
/// Every pixel has a valid (nonzero) depth.
DepthImage synth_background(int width, int height, uint64_t seed);

// ---- augmentation ----

struct AugmentConfig {
  float rotate_prob = 0.8f;
  float max_angle_deg = 20.f;
  float crop_prob = 0.9f;
  int crop_w = 368;
  int crop_h = 368;
  float dropout_frac = 0.2f;
};

struct Sample {
  DepthImage img;
  SkeletonAnnotation ann;
  Mask mask;
};

/// Rotation about the image center (nearest-neighbor, depth never blended
/// across discontinuities), then a crop to crop_w x crop_h framing at least
/// one person (zero-padding where the window leaves the source), then pixel
/// dropout zeroing exactly round(dropout_frac * |mask|) silhouette pixels.
/// Annotations follow each transform; landmarks leaving the frame turn
/// invisible and persons with no visible landmark left are dropped.
Sample augment(const Sample& in, const AugmentConfig& cfg,
               std::mt19937_64& rng);

// ---- dataset manifests ----

struct ManifestEntry {
  std::string image;       // paths as stored in the manifest
  std::string annotation;
  std::string mask;        // optional, empty = absent
  int domain = 0;          // 0 = source, 1 = target
};

/// JSON: {"items": [{"image": ..., "annotation": ..., "mask": ..., "domain": 0}]}
/// (the "mask" key is omitted when empty). load_manifest keeps paths exactly
/// as stored; callers resolve them relative to the manifest's directory.
void save_manifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path);

/// Joins a manifest-relative path onto the directory of `manifest_path`.
std::string manifest_relative(const std::string& manifest_path,
                              const std::string& entry_path);

struct DatasetConfig {
  SceneConfig scene;
  bool fuse_bg = true;      // compose over a synthetic background
  bool sensor_noise = false;  // edge shadows + salt dropout after composition
  float margin = 0.5f;
  int count = 100;
  int domain = 0;
  uint64_t seed = 1;
};

/// Writes `count` samples (depth, annotation JSON, mask) named
/// <prefix>_00000.* into `dir` plus a "<prefix>_manifest.json" listing them,
/// and returns the manifest entries (paths relative to `dir`).
std::vector<ManifestEntry> generate_dataset(const std::string& dir,
                                            const std::string& prefix,
                                            const DatasetConfig& cfg);

}  // namespace pm
