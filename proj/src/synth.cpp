#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "pm/data.hpp"
#include "pm/skeleton.hpp"

namespace pm {

namespace {

uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Vec2 {
  float x, y;
};
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator*(float s, Vec2 a) { return {s * a.x, s * a.y}; }

// A figure in person-local meters: x right, y down (so +y is toward the
// feet, matching image rows), z toward the camera axis as a small relief
// offset per part.
struct Figure {
  std::array<Vec2, kNumLandmarks> pt;
  std::array<float, kNumLandmarks> dz;
  float scale = 1.f;
};

struct Capsule {
  int a, b;
  float radius;  // meters, pre-scale
};

constexpr std::array<Capsule, 16> kCapsules = {{
    {kHead, kHead, 0.11f},  // cranium, degenerate capsule = sphere
    {kHead, kNeck, 0.05f},
    {kNeck, kMidHip, 0.13f},  // torso
    {kNeck, kLShoulder, 0.055f},
    {kLShoulder, kLElbow, 0.05f},
    {kLElbow, kLWrist, 0.045f},
    {kNeck, kRShoulder, 0.055f},
    {kRShoulder, kRElbow, 0.05f},
    {kRElbow, kRWrist, 0.045f},
    {kMidHip, kLHip, 0.065f},
    {kLHip, kLKnee, 0.075f},
    {kLKnee, kLAnkle, 0.055f},
    {kMidHip, kRHip, 0.065f},
    {kRHip, kRKnee, 0.075f},
    {kRKnee, kRAnkle, 0.055f},
    {kHead, kHead, 0.f},  // placeholder keeps the array size fixed
}};
constexpr int kNumRendered = 15;  // eyes are face features, not geometry

Figure build_figure(std::mt19937_64& rng, const PoseRanges& r, float scale) {
  auto sym = [&](float amp) {
    std::uniform_real_distribution<float> d(-amp, amp);
    return d(rng);
  };
  auto pos = [&](float amp) {
    std::uniform_real_distribution<float> d(0.f, amp);
    return d(rng);
  };
  float lean = sym(r.lean);
  Vec2 up{std::sin(lean), -std::cos(lean)};
  Vec2 down{-up.x, -up.y};
  Vec2 right{-up.y, up.x};
  // swing rotates the straight-down direction within the figure plane
  auto swing = [&](float a) {
    return Vec2{down.x * std::cos(a) - down.y * std::sin(a),
                down.x * std::sin(a) + down.y * std::cos(a)};
  };

  Figure f;
  f.scale = scale;
  f.dz.fill(0.f);
  auto& p = f.pt;
  p[kMidHip] = {0.f, 0.f};
  p[kNeck] = 0.50f * up;
  p[kHead] = 0.63f * up;
  p[kLEye] = p[kHead] + 0.035f * up + (-0.05f) * right;
  p[kREye] = p[kHead] + 0.035f * up + 0.05f * right;
  f.dz[kLEye] = f.dz[kREye] = -0.07f;
  p[kLShoulder] = p[kNeck] + (-0.20f) * right;
  p[kRShoulder] = p[kNeck] + 0.20f * right;
  p[kLHip] = (-0.11f) * right;
  p[kRHip] = 0.11f * right;

  auto arm = [&](int sh, int el, int wr, float side) {
    float a = sym(r.shoulder);
    float bend = pos(r.elbow);
    p[el] = p[sh] + 0.28f * swing(a);
    p[wr] = p[el] + 0.26f * swing(a + side * bend);
  };
  arm(kLShoulder, kLElbow, kLWrist, -1.f);
  arm(kRShoulder, kRElbow, kRWrist, 1.f);
  // one arm slightly in front of the torso plane, the other behind, so
  // self-overlap exercises the z-buffer without hiding the person's parts
  f.dz[kLElbow] = f.dz[kLWrist] = -0.06f;
  f.dz[kRElbow] = f.dz[kRWrist] = 0.06f;

  auto leg = [&](int hip, int knee, int ankle, float side) {
    float a = sym(r.hip);
    float bend = pos(r.knee);
    p[knee] = p[hip] + 0.42f * swing(a);
    p[ankle] = p[knee] + 0.42f * swing(a - side * bend);
  };
  leg(kLHip, kLKnee, kLAnkle, -1.f);
  leg(kRHip, kRKnee, kRAnkle, 1.f);

  for (auto& q : p) q = scale * q;
  for (auto& z : f.dz) z *= scale;
  return f;
}

struct Placement {
  Figure fig;
  float x_mid, y_mid, z_mid;  // world offset of the figure origin (mid hip)
};

}  // namespace

Scene synth_scene(const SceneConfig& config) {
  if (config.width <= 0 || config.height <= 0)
    throw config_error("synth_scene: dimensions must be positive");
  if (config.min_persons < 1 || config.max_persons > 3 ||
      config.min_persons > config.max_persons)
    throw config_error("synth_scene: person count must lie in 1..3");
  if (!(config.min_distance_m > 0.f) || config.max_distance_m > 8.f ||
      config.min_distance_m > config.max_distance_m)
    throw config_error("synth_scene: camera distance range must sit in (0, 8]");
  if (config.max_retries < 1)
    throw config_error("synth_scene: max_retries must be positive");

  const int W = config.width, H = config.height;
  const float f = 1.1f * static_cast<float>(std::min(W, H));
  const float cx = (W - 1) * 0.5f, cy = (H - 1) * 0.5f;
  const float pad = 2.f;

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> np(config.min_persons,
                                        config.max_persons);
  int n_persons = np(rng);

  std::vector<Placement> placed;
  for (int pi = 0; pi < n_persons; ++pi) {
    bool ok = false;
    for (int attempt = 0; attempt < config.max_retries && !ok; ++attempt) {
      std::uniform_real_distribution<float> us(0.92f, 1.08f);
      std::uniform_real_distribution<float> uz(config.min_distance_m,
                                               config.max_distance_m);
      float scale = us(rng);
      float z_mid = uz(rng);
      Figure fig = build_figure(rng, config.ranges, scale);

      // figure extent in local meters, padded by the fattest capsule
      float xlo = 1e9f, xhi = -1e9f, ylo = 1e9f, yhi = -1e9f;
      for (const auto& q : fig.pt) {
        xlo = std::min(xlo, q.x);
        xhi = std::max(xhi, q.x);
        ylo = std::min(ylo, q.y);
        yhi = std::max(yhi, q.y);
      }
      float slack = 0.15f * scale;
      xlo -= slack;
      xhi += slack;
      ylo -= slack;
      yhi += slack;

      // world offsets keeping the whole projected figure inside the frame
      float x_min = (pad - cx) * z_mid / f - xlo;
      float x_max = (W - 1 - pad - cx) * z_mid / f - xhi;
      float y_min = (pad - cy) * z_mid / f - ylo;
      float y_max = (H - 1 - pad - cy) * z_mid / f - yhi;
      if (x_min > x_max || y_min > y_max) continue;  // too close to fit
      std::uniform_real_distribution<float> ux(x_min, x_max);
      std::uniform_real_distribution<float> uy(y_min, y_max);
      float x_mid = ux(rng);
      float y_mid = uy(rng);

      bool collides = false;
      for (const auto& other : placed) {
        float dx = other.x_mid - x_mid, dz = other.z_mid - z_mid;
        if (std::sqrt(dx * dx + dz * dz) < 0.9f) collides = true;
      }
      if (collides) continue;

      placed.push_back({fig, x_mid, y_mid, z_mid});
      ok = true;
    }
    if (!ok)
      throw config_error(
          "synth_scene: could not place figure " + std::to_string(pi) +
          " within " + std::to_string(config.max_retries) + " attempts");
  }

  std::vector<float> zbuf(static_cast<size_t>(W) * H,
                          std::numeric_limits<float>::infinity());
  std::vector<int8_t> winner(static_cast<size_t>(W) * H, -1);

  for (size_t pi = 0; pi < placed.size(); ++pi) {
    const auto& pl = placed[pi];
    for (int ci = 0; ci < kNumRendered; ++ci) {
      const auto& cap = kCapsules[ci];
      float r = cap.radius * pl.fig.scale;
      float ax = pl.fig.pt[cap.a].x + pl.x_mid;
      float ay = pl.fig.pt[cap.a].y + pl.y_mid;
      float az = pl.z_mid + pl.fig.dz[cap.a];
      float bx = pl.fig.pt[cap.b].x + pl.x_mid;
      float by = pl.fig.pt[cap.b].y + pl.y_mid;
      float bz = pl.z_mid + pl.fig.dz[cap.b];
      float ua = cx + f * ax / az, va = cy + f * ay / az;
      float ub = cx + f * bx / bz, vb = cy + f * by / bz;
      float r_px_max = f * r / std::min(az, bz);
      int x0 = std::max(0, static_cast<int>(std::floor(std::min(ua, ub) - r_px_max - 1)));
      int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max(ua, ub) + r_px_max + 1)));
      int y0 = std::max(0, static_cast<int>(std::floor(std::min(va, vb) - r_px_max - 1)));
      int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max(va, vb) + r_px_max + 1)));
      float ex = ub - ua, ey = vb - va;
      float len2 = ex * ex + ey * ey;
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          float dx = x - ua, dy = y - va;
          float t = 0.f;
          if (len2 > 1e-9f)
            t = std::clamp((dx * ex + dy * ey) / len2, 0.f, 1.f);
          float qx = ua + t * ex - x, qy = va + t * ey - y;
          float d2 = qx * qx + qy * qy;
          float zt = az + t * (bz - az);
          float r_px = f * r / zt;
          if (d2 > r_px * r_px || r_px <= 0.f) continue;
          float frac2 = d2 / (r_px * r_px);
          float depth = zt - r * std::sqrt(std::max(0.f, 1.f - frac2));
          size_t k = static_cast<size_t>(y) * W + x;
          if (depth < zbuf[k]) {
            zbuf[k] = depth;
            winner[k] = static_cast<int8_t>(pi);
          }
        }
    }
  }

  Scene scene;
  scene.depth = DepthImage::create(W, H);
  scene.mask = Mask::create(W, H);
  scene.person_masks.assign(placed.size(), Mask::create(W, H));
  for (size_t k = 0; k < zbuf.size(); ++k) {
    if (winner[k] < 0) continue;
    scene.depth.depth[k] = std::clamp(zbuf[k], 0.05f, 8.f);
    scene.mask.on[k] = 1;
    scene.person_masks[winner[k]].on[k] = 1;
  }

  scene.ann.width = W;
  scene.ann.height = H;
  for (size_t pi = 0; pi < placed.size(); ++pi) {
    const auto& pl = placed[pi];
    PersonAnnotation person;
    for (int j = 0; j < kNumLandmarks; ++j) {
      float z = pl.z_mid + pl.fig.dz[j];
      Landmark lm;
      lm.x = cx + f * (pl.fig.pt[j].x + pl.x_mid) / z;
      lm.y = cy + f * (pl.fig.pt[j].y + pl.y_mid) / z;
      long ix = std::lround(lm.x), iy = std::lround(lm.y);
      lm.visible = ix >= 0 && ix < W && iy >= 0 && iy < H &&
                   winner[static_cast<size_t>(iy) * W + ix] ==
                       static_cast<int8_t>(pi);
      person.landmarks[j] = lm;
    }
    scene.ann.persons.push_back(person);
  }

  if (config.edge_shadows || config.salt_dropout) {
    std::mt19937_64 noise_rng(mix64(config.seed ^ 0x5e250aull));
    scene.depth = apply_sensor_noise(
        scene.depth, noise_rng,
        config.edge_shadows ? 0.3f : std::numeric_limits<float>::infinity(),
        config.salt_dropout ? 0.05f : 0.f);
  }
  return scene;
}

DepthImage synth_background(int width, int height, uint64_t seed) {
  if (width <= 0 || height <= 0)
    throw config_error("synth_background: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> ub(3.5f, 7.f);
  std::uniform_real_distribution<float> ugx(-1.f, 1.f);
  std::uniform_real_distribution<float> ugy(-0.5f, 0.5f);
  float b0 = ub(rng), gx = ugx(rng), gy = ugy(rng);
  float wd = static_cast<float>(std::max(width - 1, 1));
  float hd = static_cast<float>(std::max(height - 1, 1));
  DepthImage bg = DepthImage::create(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      bg.at(y, x) = b0 + gx * (x / wd - 0.5f) + gy * (y / hd - 0.5f);
  std::uniform_int_distribution<int> nb(1, 4);
  int boxes = nb(rng);
  for (int b = 0; b < boxes; ++b) {
    std::uniform_real_distribution<float> ufrac(0.15f, 0.45f);
    int bw = std::max(1, static_cast<int>(ufrac(rng) * width));
    int bh = std::max(1, static_cast<int>(ufrac(rng) * height));
    std::uniform_int_distribution<int> uox(0, std::max(0, width - bw));
    std::uniform_int_distribution<int> uoy(0, std::max(0, height - bh));
    int ox = uox(rng), oy = uoy(rng);
    std::uniform_real_distribution<float> uoff(0.4f, 1.8f);
    float off = uoff(rng);
    for (int y = oy; y < oy + bh && y < height; ++y)
      for (int x = ox; x < ox + bw && x < width; ++x)
        bg.at(y, x) = std::min(bg.at(y, x), b0 - off);
  }
  for (auto& v : bg.depth) v = std::clamp(v, 0.3f, 8.f);
  return bg;
}

std::vector<ManifestEntry> generate_dataset(const std::string& dir,
                                            const std::string& prefix,
                                            const DatasetConfig& cfg) {
  if (cfg.count < 1) throw config_error("generate_dataset: count must be positive");
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < cfg.count; ++i) {
    SceneConfig sc = cfg.scene;
    sc.seed = mix64(cfg.seed + 0x9E3779B97F4A7C15ull * static_cast<uint64_t>(i));
    Scene scene = synth_scene(sc);
    DepthImage img = std::move(scene.depth);
    if (cfg.fuse_bg) {
      DepthImage bg =
          synth_background(sc.width, sc.height, mix64(sc.seed ^ 0xb6ull));
      img = fuse_background(img, scene.mask, bg, cfg.margin);
    }
    if (cfg.sensor_noise) {
      std::mt19937_64 nrng(mix64(sc.seed ^ 0x15eull));
      img = apply_sensor_noise(img, nrng);
    }
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%s_%05d", prefix.c_str(), i);
    ManifestEntry e;
    e.image = std::string(stem) + ".dih";
    e.annotation = std::string(stem) + ".json";
    e.mask = std::string(stem) + ".msk";
    e.domain = cfg.domain;
    save_depth((std::filesystem::path(dir) / e.image).string(), img);
    save_annotation((std::filesystem::path(dir) / e.annotation).string(),
                    scene.ann);
    save_mask((std::filesystem::path(dir) / e.mask).string(), scene.mask);
    entries.push_back(std::move(e));
  }
  save_manifest(
      (std::filesystem::path(dir) / (prefix + "_manifest.json")).string(),
      entries);
  return entries;
}

}  // namespace pm
