#include "pm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace pm {

MatchConfig::MatchConfig() {
  for (int i = 0; i <= 10; ++i)
    thresholds.push_back(0.05f + 0.01f * static_cast<float>(i));
}

namespace {

float person_height(const PersonAnnotation& p) {
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (const auto& lm : p.landmarks) {
    lo = std::min(lo, lm.y);
    hi = std::max(hi, lm.y);
  }
  return hi - lo;
}

struct GtPoint {
  float x, y, delta;
};

}  // namespace

MatchCounts match_type(const SkeletonAnnotation& gt,
                       const std::vector<PoseEstimate>& preds, int type,
                       float t) {
  if (type < 0 || type >= kNumLandmarks)
    throw config_error("landmark type out of range");
  std::vector<GtPoint> gts;
  for (const auto& person : gt.persons) {
    const Landmark& lm = person.landmarks[static_cast<std::size_t>(type)];
    if (!lm.visible) continue;
    gts.push_back(GtPoint{lm.x, lm.y, t * person_height(person)});
  }
  std::vector<std::pair<float, float>> dets;
  for (const auto& pose : preds) {
    const Landmark& lm = pose.landmarks[static_cast<std::size_t>(type)];
    if (lm.visible) dets.emplace_back(lm.x, lm.y);
  }

  struct Pair {
    double d;
    int gi, di;
  };
  std::vector<Pair> pairs;
  for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi) {
    for (int di = 0; di < static_cast<int>(dets.size()); ++di) {
      double dx = gts[static_cast<std::size_t>(gi)].x - dets[static_cast<std::size_t>(di)].first;
      double dy = gts[static_cast<std::size_t>(gi)].y - dets[static_cast<std::size_t>(di)].second;
      double d = std::sqrt(dx * dx + dy * dy);
      if (d <= gts[static_cast<std::size_t>(gi)].delta) pairs.push_back(Pair{d, gi, di});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.gi != b.gi) return a.gi < b.gi;
    return a.di < b.di;
  });
  std::vector<char> gt_used(gts.size(), 0), det_used(dets.size(), 0);
  MatchCounts out;
  for (const auto& p : pairs) {
    if (gt_used[static_cast<std::size_t>(p.gi)] || det_used[static_cast<std::size_t>(p.di)]) continue;
    gt_used[static_cast<std::size_t>(p.gi)] = 1;
    det_used[static_cast<std::size_t>(p.di)] = 1;
    ++out.tp;
  }
  out.fn = static_cast<int64_t>(gts.size()) - out.tp;
  out.fp = static_cast<int64_t>(dets.size()) - out.tp;
  return out;
}

EvalReport evaluate(const std::vector<std::vector<PoseEstimate>>& preds,
                    const std::vector<SkeletonAnnotation>& gts,
                    const MatchConfig& cfg) {
  if (preds.size() != gts.size())
    throw config_error("prediction and ground-truth counts differ");
  if (cfg.thresholds.empty()) throw config_error("no thresholds configured");
  EvalReport rep;
  double psum = 0.0, rsum = 0.0;
  int64_t cells = 0;
  for (int type = 0; type < kNumLandmarks; ++type) {
    TypeResult tr;
    tr.type = type;
    for (float t : cfg.thresholds) {
      EvalCell cell;
      cell.t = t;
      for (std::size_t i = 0; i < gts.size(); ++i) {
        MatchCounts m = match_type(gts[i], preds[i], type, t);
        cell.tp += m.tp;
        cell.fp += m.fp;
        cell.fn += m.fn;
      }
      cell.precision = (cell.tp + cell.fp) > 0
                           ? static_cast<double>(cell.tp) /
                                 static_cast<double>(cell.tp + cell.fp)
                           : 0.0;
      cell.recall = (cell.tp + cell.fn) > 0
                        ? static_cast<double>(cell.tp) /
                              static_cast<double>(cell.tp + cell.fn)
                        : 0.0;
      psum += cell.precision;
      rsum += cell.recall;
      ++cells;
      tr.cells.push_back(cell);
    }
    rep.types.push_back(std::move(tr));
  }
  rep.ap = psum / static_cast<double>(cells);
  rep.ar = rsum / static_cast<double>(cells);
  rep.f = (rep.ap + rep.ar) > 0.0 ? 2.0 * rep.ap * rep.ar / (rep.ap + rep.ar) : 0.0;
  return rep;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::json j;
  j["ap"] = r.ap;
  j["ar"] = r.ar;
  j["f"] = r.f;
  j["types"] = nlohmann::json::array();
  for (const auto& tr : r.types) {
    nlohmann::json tj;
    tj["type"] = tr.type;
    tj["name"] = std::string(kLandmarkNames[static_cast<std::size_t>(tr.type)]);
    tj["cells"] = nlohmann::json::array();
    for (const auto& c : tr.cells) {
      tj["cells"].push_back({{"t", c.t},
                             {"tp", c.tp},
                             {"fp", c.fp},
                             {"fn", c.fn},
                             {"precision", c.precision},
                             {"recall", c.recall}});
    }
    j["types"].push_back(tj);
  }
  return j.dump(2);
}

Curve pr_curve(const std::vector<ImageMaps>& maps,
               const std::vector<SkeletonAnnotation>& gts,
               const DecoderConfig& base, const std::vector<float>& grid,
               const MatchConfig& mcfg) {
  if (maps.size() != gts.size())
    throw config_error("map and ground-truth counts differ");
  if (grid.empty()) throw config_error("empty threshold grid");
  Curve curve;
  for (float h : grid) {
    DecoderConfig cfg = base;
    cfg.peak_threshold = h;
    std::vector<std::vector<PoseEstimate>> preds;
    preds.reserve(maps.size());
    for (const auto& m : maps) preds.push_back(decode(*m.heatmaps, *m.pafs, cfg));
    EvalReport rep = evaluate(preds, gts, mcfg);
    CurvePoint pt;
    pt.peak_threshold = h;
    pt.ap = rep.ap;
    pt.ar = rep.ar;
    pt.f = rep.f;
    if (curve.best < 0 || pt.f > curve.points[static_cast<std::size_t>(curve.best)].f)
      curve.best = static_cast<int>(curve.points.size());
    curve.points.push_back(pt);
  }
  return curve;
}

double confusion_rate(const std::vector<float>& probs,
                      const std::vector<float>& labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw config_error("probs and labels must be same nonzero length");
  int64_t wrong = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    bool pred = probs[i] >= 0.5f;
    bool truth = labels[i] >= 0.5f;
    if (pred != truth) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(probs.size());
}

}  // namespace pm
