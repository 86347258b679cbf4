#pragma once

#include <array>
#include <vector>

#include "pm/gt.hpp"
#include "pm/skeleton.hpp"
#include "pm/tensor.hpp"

namespace pm {

struct DecoderConfig {
  float peak_threshold = 0.1f;   // confidence floor for local maxima
  float duplicate_radius = 1.f;  // map cells; closer peaks collapse to the best
  int n_samples = 10;            // line-integral sample count (>= 2)
  float paf_threshold = 0.05f;   // floor for mean alignment and per-sample votes
  float sample_fraction = 0.8f;  // fraction of samples that must each pass
  int min_parts = 3;             // minimum landmarks for a pose to survive
};

struct Peak {
  float x = 0.f;  // map coordinates, sub-cell refined
  float y = 0.f;
  float score = 0.f;
};

struct PoseEstimate {
  std::array<Landmark, kNumLandmarks> landmarks;  // input-pixel coordinates
  std::array<float, kNumLandmarks> confidences{};
  float score = 0.f;
  int parts = 0;
};

/// Strict local maxima (4-neighborhood) above threshold, per channel, with
/// quadratic sub-cell refinement; peaks closer than duplicate_radius collapse
/// to the higher-scoring one. heatmaps: [kNumLandmarks, h, w].
std::vector<std::vector<Peak>> extract_peaks(const Tensor& heatmaps,
                                             float threshold,
                                             float duplicate_radius);

/// Mean over n_samples points (inclusive endpoints) of
/// dot(bilinear PAF at p_k, unit(b - a)) for limb channel `limb`.
/// Coincident endpoints score 0.
float score_connection(const Tensor& pafs, int limb, const Peak& a,
                       const Peak& b, int n_samples);

/// Full greedy assembly: peaks, per-limb candidate scoring, acceptance in
/// descending score order while both endpoints are free, union of accepted
/// limbs into poses. Landmarks come back in input pixels.
std::vector<PoseEstimate> decode(const Tensor& heatmaps, const Tensor& pafs,
                                 const DecoderConfig& cfg);

}  // namespace pm
