#include "pm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pm {
namespace {

void check_maps(const Tensor& heatmaps, const Tensor& pafs) {
  if (heatmaps.ndim() != 3 || heatmaps.shape[0] != kNumLandmarks)
    throw shape_error("heatmaps must be [" + std::to_string(kNumLandmarks) +
                      ",h,w], got " + shape_str(heatmaps.shape));
  if (pafs.ndim() != 3 || pafs.shape[0] != 2 * kNumLimbs ||
      pafs.shape[1] != heatmaps.shape[1] || pafs.shape[2] != heatmaps.shape[2])
    throw shape_error("pafs must be [" + std::to_string(2 * kNumLimbs) +
                      ",h,w] matching heatmaps, got " + shape_str(pafs.shape));
}

float quad_offset(float left, float center, float right) {
  float denom = left - 2.f * center + right;
  if (std::fabs(denom) < 1e-12f) return 0.f;
  float off = 0.5f * (left - right) / denom;
  return std::clamp(off, -0.5f, 0.5f);
}

float bilinear(const float* ch, int h, int w, float x, float y) {
  x = std::clamp(x, 0.f, static_cast<float>(w - 1));
  y = std::clamp(y, 0.f, static_cast<float>(h - 1));
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  int x1 = std::min(x0 + 1, w - 1);
  int y1 = std::min(y0 + 1, h - 1);
  float fx = x - static_cast<float>(x0);
  float fy = y - static_cast<float>(y0);
  float v00 = ch[y0 * w + x0], v01 = ch[y0 * w + x1];
  float v10 = ch[y1 * w + x0], v11 = ch[y1 * w + x1];
  return (1.f - fy) * ((1.f - fx) * v00 + fx * v01) +
         fy * ((1.f - fx) * v10 + fx * v11);
}

struct ScoredConnection {
  float mean = 0.f;
  int samples_above = 0;  // samples whose individual dot exceeds the threshold
};

ScoredConnection score_connection_detail(const Tensor& pafs, int limb,
                                         const Peak& a, const Peak& b,
                                         int n_samples, float vote_threshold) {
  int h = pafs.shape[1], w = pafs.shape[2];
  const float* chx =
      pafs.data.data() + static_cast<int64_t>(2 * limb) * h * w;
  const float* chy = chx + static_cast<int64_t>(h) * w;
  float dx = b.x - a.x, dy = b.y - a.y;
  float len = std::sqrt(dx * dx + dy * dy);
  ScoredConnection out;
  if (len < 1e-6f) return out;
  float ux = dx / len, uy = dy / len;
  double acc = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    float t = static_cast<float>(k) / static_cast<float>(n_samples - 1);
    float px = a.x + t * dx, py = a.y + t * dy;
    float d = bilinear(chx, h, w, px, py) * ux + bilinear(chy, h, w, px, py) * uy;
    acc += d;
    if (d > vote_threshold) ++out.samples_above;
  }
  out.mean = static_cast<float>(acc / n_samples);
  return out;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace

std::vector<std::vector<Peak>> extract_peaks(const Tensor& heatmaps,
                                             float threshold,
                                             float duplicate_radius) {
  if (heatmaps.ndim() != 3)
    throw shape_error("heatmaps must be rank 3, got " + shape_str(heatmaps.shape));
  int nch = heatmaps.shape[0], h = heatmaps.shape[1], w = heatmaps.shape[2];
  std::vector<std::vector<Peak>> out(static_cast<std::size_t>(nch));
  for (int c = 0; c < nch; ++c) {
    const float* ch = heatmaps.data.data() + static_cast<int64_t>(c) * h * w;
    std::vector<Peak> raw;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float v = ch[y * w + x];
        if (v <= threshold) continue;
        // Strictly above the down/right neighbors, at least equal to the
        // up/left ones: an equal-valued plateau (a Gaussian centered on a
        // cell boundary renders one) keeps exactly one representative cell
        // instead of vanishing, and the quadratic fit below then lands on
        // the plateau midpoint.
        if (x > 0 && ch[y * w + x - 1] > v) continue;
        if (x + 1 < w && ch[y * w + x + 1] >= v) continue;
        if (y > 0 && ch[(y - 1) * w + x] > v) continue;
        if (y + 1 < h && ch[(y + 1) * w + x] >= v) continue;
        Peak p;
        float ox = 0.f, oy = 0.f;
        if (x > 0 && x + 1 < w)
          ox = quad_offset(ch[y * w + x - 1], v, ch[y * w + x + 1]);
        if (y > 0 && y + 1 < h)
          oy = quad_offset(ch[(y - 1) * w + x], v, ch[(y + 1) * w + x]);
        p.x = static_cast<float>(x) + ox;
        p.y = static_cast<float>(y) + oy;
        p.score = v;
        raw.push_back(p);
      }
    }
    // Highest score wins inside the duplicate radius; ties break on scan
    // order so results are deterministic.
    std::stable_sort(raw.begin(), raw.end(),
                     [](const Peak& a, const Peak& b) { return a.score > b.score; });
    std::vector<Peak>& kept = out[static_cast<std::size_t>(c)];
    for (const Peak& p : raw) {
      bool dup = false;
      for (const Peak& q : kept) {
        float dx = p.x - q.x, dy = p.y - q.y;
        if (dx * dx + dy * dy < duplicate_radius * duplicate_radius) {
          dup = true;
          break;
        }
      }
      if (!dup) kept.push_back(p);
    }
  }
  return out;
}

float score_connection(const Tensor& pafs, int limb, const Peak& a,
                       const Peak& b, int n_samples) {
  if (limb < 0 || limb >= kNumLimbs)
    throw config_error("limb index out of range");
  if (n_samples < 2) throw config_error("n_samples must be at least 2");
  if (pafs.ndim() != 3 || pafs.shape[0] != 2 * kNumLimbs)
    throw shape_error("pafs must be [" + std::to_string(2 * kNumLimbs) +
                      ",h,w], got " + shape_str(pafs.shape));
  return score_connection_detail(pafs, limb, a, b, n_samples, 0.f).mean;
}

std::vector<PoseEstimate> decode(const Tensor& heatmaps, const Tensor& pafs,
                                 const DecoderConfig& cfg) {
  check_maps(heatmaps, pafs);
  if (cfg.n_samples < 2) throw config_error("n_samples must be at least 2");
  if (cfg.sample_fraction < 0.f || cfg.sample_fraction > 1.f)
    throw config_error("sample_fraction must be in [0,1]");
  if (cfg.min_parts < 1) throw config_error("min_parts must be at least 1");

  auto peaks = extract_peaks(heatmaps, cfg.peak_threshold, cfg.duplicate_radius);

  // Global peak ids for union-find.
  std::vector<int> base(kNumLandmarks + 1, 0);
  for (int t = 0; t < kNumLandmarks; ++t)
    base[static_cast<std::size_t>(t) + 1] =
        base[static_cast<std::size_t>(t)] +
        static_cast<int>(peaks[static_cast<std::size_t>(t)].size());
  int total = base[kNumLandmarks];
  UnionFind uf(total);

  struct Candidate {
    float score;
    int pi, ci;  // indices into the parent/child peak lists
  };
  std::vector<char> child_claimed(static_cast<std::size_t>(total), 0);
  std::vector<float> limb_score_of(static_cast<std::size_t>(total), 0.f);

  for (int c = 0; c < kNumLimbs; ++c) {
    int tp = kLimbs[static_cast<std::size_t>(c)].parent;
    int tc = kLimbs[static_cast<std::size_t>(c)].child;
    const auto& pp = peaks[static_cast<std::size_t>(tp)];
    const auto& pc = peaks[static_cast<std::size_t>(tc)];
    std::vector<Candidate> cands;
    for (int i = 0; i < static_cast<int>(pp.size()); ++i) {
      for (int j = 0; j < static_cast<int>(pc.size()); ++j) {
        auto sc = score_connection_detail(pafs, c, pp[static_cast<std::size_t>(i)],
                                          pc[static_cast<std::size_t>(j)],
                                          cfg.n_samples, cfg.paf_threshold);
        if (sc.mean <= cfg.paf_threshold) continue;
        if (static_cast<float>(sc.samples_above) <
            cfg.sample_fraction * static_cast<float>(cfg.n_samples) - 1e-6f)
          continue;
        cands.push_back(Candidate{sc.mean, i, j});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.pi != b.pi) return a.pi < b.pi;
      return a.ci < b.ci;
    });
    std::vector<char> parent_used(pp.size(), 0);
    for (const auto& cand : cands) {
      int pid = base[static_cast<std::size_t>(tp)] + cand.pi;
      int cid = base[static_cast<std::size_t>(tc)] + cand.ci;
      if (parent_used[static_cast<std::size_t>(cand.pi)] ||
          child_claimed[static_cast<std::size_t>(cid)])
        continue;
      if (uf.find(pid) == uf.find(cid)) continue;  // would close a cycle
      parent_used[static_cast<std::size_t>(cand.pi)] = 1;
      child_claimed[static_cast<std::size_t>(cid)] = 1;
      limb_score_of[static_cast<std::size_t>(cid)] = cand.score;
      uf.unite(cid, pid);
    }
  }

  // Collect components into poses.
  std::vector<int> comp_pose(static_cast<std::size_t>(total), -1);
  std::vector<PoseEstimate> poses;
  for (int t = 0; t < kNumLandmarks; ++t) {
    for (int i = 0; i < static_cast<int>(peaks[static_cast<std::size_t>(t)].size()); ++i) {
      int id = base[static_cast<std::size_t>(t)] + i;
      int root = uf.find(id);
      int pose_idx = comp_pose[static_cast<std::size_t>(root)];
      if (pose_idx < 0) {
        pose_idx = static_cast<int>(poses.size());
        comp_pose[static_cast<std::size_t>(root)] = pose_idx;
        poses.emplace_back();
      }
      PoseEstimate& pose = poses[static_cast<std::size_t>(pose_idx)];
      const Peak& p = peaks[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      Landmark& lm = pose.landmarks[static_cast<std::size_t>(t)];
      // One peak per landmark type per component by construction.
      lm.x = input_from_map(p.x);
      lm.y = input_from_map(p.y);
      lm.visible = true;
      pose.confidences[static_cast<std::size_t>(t)] = p.score;
      pose.score += p.score + limb_score_of[static_cast<std::size_t>(id)];
      pose.parts += 1;
    }
  }
  std::vector<PoseEstimate> kept;
  for (auto& pose : poses)
    if (pose.parts >= cfg.min_parts) kept.push_back(pose);
  return kept;
}

}  // namespace pm
