#pragma once

#include <string>
#include <vector>

#include "pm/decoder.hpp"
#include "pm/gt.hpp"

namespace pm {

// Keypoint evaluation. A ground-truth landmark of a person with bounding-box
// height h matches a prediction of the same type within distance t*h (input
// pixels). Matching is greedy on globally ascending pair distance, one match
// per point on either side. Box height spans all 17 landmark coordinates of
// the person, visibility-independent.

struct MatchConfig {
  std::vector<float> thresholds;  // relative-to-height tolerances t
  MatchConfig();                  // default: 0.05 to 0.15 in 11 steps
};

struct MatchCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

/// Match all landmarks of one type on one image at tolerance t.
MatchCounts match_type(const SkeletonAnnotation& gt,
                       const std::vector<PoseEstimate>& preds, int type,
                       float t);

struct EvalCell {
  float t = 0.f;
  int64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0;  // 0 when there are no detections
  double recall = 0.0;     // 0 when there is no ground truth
};

struct TypeResult {
  int type = 0;
  std::vector<EvalCell> cells;
};

struct EvalReport {
  std::vector<TypeResult> types;
  double ap = 0.0;  // mean precision over (type, threshold) cells
  double ar = 0.0;  // mean recall over (type, threshold) cells
  double f = 0.0;   // harmonic mean of ap/ar; 0 when both are 0
};

EvalReport evaluate(const std::vector<std::vector<PoseEstimate>>& preds,
                    const std::vector<SkeletonAnnotation>& gts,
                    const MatchConfig& cfg = MatchConfig());

std::string eval_report_json(const EvalReport& r);

/// Decoded maps for one image, as produced by the network.
struct ImageMaps {
  TensorPtr heatmaps;  // [J,h,w]
  TensorPtr pafs;      // [2C,h,w]
};

struct CurvePoint {
  float peak_threshold = 0.f;
  double ap = 0.0, ar = 0.0, f = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;
  int best = -1;  // index of the highest-F point
};

/// Sweep the decoder's peak threshold over `grid` and evaluate each setting.
Curve pr_curve(const std::vector<ImageMaps>& maps,
               const std::vector<SkeletonAnnotation>& gts,
               const DecoderConfig& base, const std::vector<float>& grid,
               const MatchConfig& mcfg = MatchConfig());

/// Fraction of misclassified domain predictions at the 0.5 operating point:
/// (false positives + false negatives) / total.
double confusion_rate(const std::vector<float>& probs,
                      const std::vector<float>& labels);

}  // namespace pm
