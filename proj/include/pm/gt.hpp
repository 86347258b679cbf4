#pragma once

#include <array>
#include <string>
#include <vector>

#include "pm/skeleton.hpp"
#include "pm/tensor.hpp"

namespace pm {

// Ground-truth map rendering at the network's output resolution (1/8 of the
// input). Map cell (i,j) corresponds to the input pixel block centered at
// (j*8+4, i*8+4); both renderers and the decoder share this convention.

inline float map_from_input(float px) { return px / 8.f - 0.5f; }
inline float input_from_map(float mx) { return mx * 8.f + 4.f; }

struct Landmark {
  float x = 0.f;  // input-pixel coordinates
  float y = 0.f;
  bool visible = false;
};

struct PersonAnnotation {
  std::array<Landmark, kNumLandmarks> landmarks;
};

struct SkeletonAnnotation {
  int width = 0;   // input image extent the coordinates refer to
  int height = 0;
  std::vector<PersonAnnotation> persons;
};

/// Landmark confidence maps [kNumLandmarks, map_h, map_w]: per landmark a
/// Gaussian bump exp(-d^2 / sigma^2) around each visible instance, combined
/// across persons by per-cell maximum. sigma is in map cells.
TensorPtr render_heatmaps(const SkeletonAnnotation& ann, int map_h, int map_w,
                          float sigma);

/// Part-affinity fields [2*kNumLimbs, map_h, map_w]: channels (2c, 2c+1) hold
/// the x/y components of the limb-c direction on cells within limb_width
/// (map cells) of the parent->child segment, averaged across overlapping
/// persons. Limbs with an invisible endpoint contribute nothing.
TensorPtr render_pafs(const SkeletonAnnotation& ann, int map_h, int map_w,
                      float limb_width);

struct StageTarget {
  TensorPtr heatmaps;  // [J, h, w]
  TensorPtr pafs;      // [2C, h, w]
};

StageTarget render_target(const SkeletonAnnotation& ann, int map_h, int map_w,
                          float sigma, float limb_width);

// Annotation JSON schema:
// {"width": W, "height": H, "persons": [
//   {"landmarks": [{"name": "head", "x": 1.0, "y": 2.0, "visible": true}, ...]}]}
// Every person lists each of the 17 canonical names exactly once.
SkeletonAnnotation load_annotation(const std::string& path);
void save_annotation(const std::string& path, const SkeletonAnnotation& ann);
std::string annotation_to_json(const SkeletonAnnotation& ann);
SkeletonAnnotation annotation_from_json(const std::string& text);

}  // namespace pm
