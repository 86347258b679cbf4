#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "pm/data.hpp"
#include "pm/decoder.hpp"
#include "pm/gt.hpp"

using namespace pm;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

DepthImage random_depth(std::mt19937_64& rng, int w, int h, float lo = 0.5f,
                        float hi = 7.5f) {
  DepthImage img = DepthImage::create(w, h);
  std::uniform_real_distribution<float> d(lo, hi);
  for (auto& v : img.depth) v = d(rng);
  return img;
}

}  // namespace

TEST_CASE("depth and mask files round-trip bit-exactly") {
  std::mt19937_64 rng(41);
  DepthImage img = random_depth(rng, 13, 7);
  img.at(0, 0) = 0.f;   // missing
  img.at(6, 12) = 8.f;  // range limit
  auto path = tmp_path("pm_data_rt.dih");
  save_depth(path, img);
  DepthImage back = load_depth(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.depth == img.depth);

  Mask m = Mask::create(13, 7);
  m.set(2, 3, true);
  m.set(6, 12, true);
  auto mpath = tmp_path("pm_data_rt.msk");
  save_mask(mpath, m);
  Mask mb = load_mask(mpath);
  CHECK(mb.on == m.on);
  CHECK(mb.count() == 2);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_depth(tmp_path("pm_data_nope.dih")), io_error);
  }
  SUBCASE("bad magic") {
    auto bad = tmp_path("pm_data_bad.dih");
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE1234567890";
    os.close();
    CHECK_THROWS_AS(load_depth(bad), io_error);
  }
  SUBCASE("truncated payload") {
    auto trunc = tmp_path("pm_data_trunc.dih");
    {
      std::ifstream is(path, std::ios::binary);
      std::string all((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
      std::ofstream os(trunc, std::ios::binary);
      os.write(all.data(), static_cast<std::streamsize>(all.size() - 9));
    }
    CHECK_THROWS_AS(load_depth(trunc), io_error);
  }
  SUBCASE("out-of-range value") {
    DepthImage hot = DepthImage::create(2, 2, 9.5f);
    auto hpath = tmp_path("pm_data_hot.dih");
    std::ofstream os(hpath, std::ios::binary);
    os.write("DIH1", 4);
    auto u32 = [&](uint32_t v) {
      os.write(reinterpret_cast<const char*>(&v), 4);
    };
    u32(2);
    u32(2);
    os.write(reinterpret_cast<const char*>(hot.depth.data()), 16);
    os.close();
    CHECK_THROWS_AS(load_depth(hpath), io_error);
  }
}

TEST_CASE("normalize maps meters linearly onto [-0.5, 0.5]") {
  DepthImage img = DepthImage::create(3, 1);
  img.at(0, 0) = 0.f;
  img.at(0, 1) = 4.f;
  img.at(0, 2) = 8.f;
  auto t = normalize(img);
  REQUIRE(t->shape == std::vector<int>{1, 1, 3});
  CHECK(t->data[0] == -0.5f);
  CHECK(t->data[1] == 0.0f);
  CHECK(t->data[2] == 0.5f);

  // affine: n(a) + n(b) - 2 n((a+b)/2) = 0
  std::mt19937_64 rng(7);
  DepthImage a = random_depth(rng, 9, 5), b = random_depth(rng, 9, 5);
  DepthImage mid = DepthImage::create(9, 5);
  for (size_t i = 0; i < mid.depth.size(); ++i)
    mid.depth[i] = 0.5f * (a.depth[i] + b.depth[i]);
  auto na = normalize(a), nb = normalize(b), nm = normalize(mid);
  for (size_t i = 0; i < na->data.size(); ++i)
    CHECK(std::fabs(na->data[i] + nb->data[i] - 2.f * nm->data[i]) < 1e-6f);
}

TEST_CASE("background fusion keeps the foreground and restores the margin") {
  const int W = 8, H = 6;
  DepthImage fg = DepthImage::create(W, H, 3.f);
  Mask mask = Mask::create(W, H);
  for (int y = 1; y < 4; ++y)
    for (int x = 2; x < 6; ++x) mask.set(y, x, true);

  SUBCASE("empty mask copies the background") {
    Mask none = Mask::create(W, H);
    std::mt19937_64 rng(3);
    DepthImage bg = random_depth(rng, W, H);
    bg.at(5, 5) = 0.f;  // missing stays missing
    DepthImage out = fuse_background(fg, none, bg);
    CHECK(out.depth == bg.depth);
  }
  SUBCASE("deep background is untouched") {
    DepthImage bg = DepthImage::create(W, H, 3.6f);
    DepthImage out = fuse_background(fg, mask, bg, 0.5f);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        CHECK(out.at(y, x) == (mask.at(y, x) ? 3.f : 3.6f));
  }
  SUBCASE("shallow background shifts by exactly deficit plus margin") {
    DepthImage bg = DepthImage::create(W, H);
    for (size_t i = 0; i < bg.depth.size(); ++i)
      bg.depth[i] = 2.8f + 0.01f * static_cast<float>(i % 5);
    // min over mask of (bg - fg) = 2.8 - 3.0 = -0.2, so the background
    // moves back by 0.5 - (-0.2) = 0.7 everywhere
    DepthImage out = fuse_background(fg, mask, bg, 0.5f);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (mask.at(y, x))
          CHECK(out.at(y, x) == 3.f);  // foreground never altered
        else
          CHECK(out.at(y, x) == doctest::Approx(bg.at(y, x) + 0.7f).epsilon(1e-6));
      }
  }
  SUBCASE("shifted background clamps at the range limit") {
    DepthImage bg = DepthImage::create(W, H, 7.9f);
    bg.at(2, 3) = 2.9f;  // one shallow pixel under the mask forces a shift
    DepthImage out = fuse_background(fg, mask, bg, 0.5f);
    CHECK(out.at(0, 0) == 8.f);
  }
  SUBCASE("mismatched dimensions") {
    DepthImage bg = DepthImage::create(W + 1, H);
    CHECK_THROWS_AS(fuse_background(fg, mask, bg), shape_error);
  }
}

TEST_CASE("sensor noise zeroes edge bands and a fixed share of pixels") {
  SUBCASE("flat image grows no shadow bands") {
    DepthImage img = DepthImage::create(20, 20, 4.f);
    std::mt19937_64 rng(5);
    DepthImage out = apply_sensor_noise(img, rng, 0.3f, 0.f);
    CHECK(out.depth == img.depth);
  }
  SUBCASE("a depth step shadows its deeper side") {
    const int W = 24, H = 10;
    DepthImage img = DepthImage::create(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) img.at(y, x) = x < 12 ? 2.f : 4.f;
    std::mt19937_64 rng(6);
    DepthImage out = apply_sensor_noise(img, rng, 0.3f, 0.f);
    for (int y = 0; y < H; ++y) {
      // shallow side intact
      for (int x = 0; x < 12; ++x) CHECK(out.at(y, x) == 2.f);
      // deeper side: a band of 1-3 zeros starting at the boundary
      int zeros = 0;
      while (12 + zeros < W && out.at(y, 12 + zeros) == 0.f) ++zeros;
      CHECK(zeros >= 1);
      CHECK(zeros <= 3);
      for (int x = 12 + zeros; x < W; ++x) CHECK(out.at(y, x) == 4.f);
    }
  }
  SUBCASE("salt dropout hits an exact pixel count") {
    DepthImage img = DepthImage::create(32, 16, 5.f);
    std::mt19937_64 rng(7);
    DepthImage out = apply_sensor_noise(img, rng, 1e9f, 0.05f);
    int64_t zeros = 0;
    for (float v : out.depth) zeros += v == 0.f;
    CHECK(zeros == std::lround(0.05 * 32 * 16));
  }
}

TEST_CASE("scene synthesis is deterministic in the seed") {
  SceneConfig cfg;
  cfg.width = 96;
  cfg.height = 96;
  cfg.min_persons = 2;
  cfg.max_persons = 2;
  cfg.seed = 11;
  Scene a = synth_scene(cfg);
  Scene b = synth_scene(cfg);
  CHECK(a.depth.depth == b.depth.depth);
  CHECK(a.mask.on == b.mask.on);
  REQUIRE(a.ann.persons.size() == b.ann.persons.size());
  for (size_t p = 0; p < a.ann.persons.size(); ++p)
    for (int j = 0; j < kNumLandmarks; ++j) {
      CHECK(a.ann.persons[p].landmarks[j].x == b.ann.persons[p].landmarks[j].x);
      CHECK(a.ann.persons[p].landmarks[j].y == b.ann.persons[p].landmarks[j].y);
    }
  cfg.seed = 12;
  Scene c = synth_scene(cfg);
  CHECK(a.depth.depth != c.depth.depth);
}

TEST_CASE("a lone frontal figure shows all seventeen landmarks") {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    SceneConfig cfg;
    cfg.width = 160;
    cfg.height = 160;
    cfg.min_persons = 1;
    cfg.max_persons = 1;
    cfg.min_distance_m = 2.5f;
    cfg.max_distance_m = 4.f;
    cfg.seed = seed;
    Scene scene = synth_scene(cfg);
    REQUIRE(scene.ann.persons.size() == 1);
    int visible = 0;
    for (const auto& lm : scene.ann.persons[0].landmarks) visible += lm.visible;
    CHECK(visible == kNumLandmarks);
    CHECK(scene.mask.count() > 0);
    CHECK(scene.person_masks.size() == 1);
  }
}

TEST_CASE("per-person masks partition the silhouette") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    SceneConfig cfg;
    cfg.width = 128;
    cfg.height = 128;
    cfg.min_persons = 2;
    cfg.max_persons = 2;
    cfg.seed = seed;
    Scene scene = synth_scene(cfg);
    REQUIRE(scene.person_masks.size() == 2);
    int64_t overlap = 0, join = 0;
    for (size_t i = 0; i < scene.mask.on.size(); ++i) {
      overlap += scene.person_masks[0].on[i] && scene.person_masks[1].on[i];
      uint8_t u = scene.person_masks[0].on[i] | scene.person_masks[1].on[i];
      join += u;
      CHECK(u == scene.mask.on[i]);
    }
    CHECK(overlap == 0);
    CHECK(scene.person_masks[0].count() > 0);
    CHECK(scene.person_masks[1].count() > 0);
    CHECK(join == scene.mask.count());
  }
}

TEST_CASE("scene depth values respect the sensor range") {
  SceneConfig cfg;
  cfg.width = 128;
  cfg.height = 128;
  cfg.max_persons = 3;
  cfg.seed = 33;
  Scene scene = synth_scene(cfg);
  for (size_t i = 0; i < scene.depth.depth.size(); ++i) {
    float v = scene.depth.depth[i];
    if (scene.mask.on[i]) {
      CHECK(v > 0.f);
      CHECK(v <= 8.f);
    } else {
      CHECK(v == 0.f);
    }
  }
}

TEST_CASE("scene synthesis rejects bad configurations") {
  SceneConfig cfg;
  SUBCASE("person count") {
    cfg.min_persons = 0;
    CHECK_THROWS_AS(synth_scene(cfg), config_error);
  }
  SUBCASE("distance beyond range") {
    cfg.max_distance_m = 9.f;
    CHECK_THROWS_AS(synth_scene(cfg), config_error);
  }
  SUBCASE("frame too small to ever fit a figure") {
    cfg.width = 4;
    cfg.height = 4;
    cfg.min_distance_m = 2.f;
    cfg.max_distance_m = 2.f;
    cfg.max_retries = 8;
    CHECK_THROWS_AS(synth_scene(cfg), config_error);
  }
}

TEST_CASE("scene noise toggles inject dropouts") {
  SceneConfig cfg;
  cfg.width = 96;
  cfg.height = 96;
  cfg.seed = 44;
  Scene clean = synth_scene(cfg);
  cfg.edge_shadows = true;
  cfg.salt_dropout = true;
  Scene noisy = synth_scene(cfg);
  auto zeros = [](const DepthImage& img) {
    int64_t n = 0;
    for (float v : img.depth) n += v == 0.f;
    return n;
  };
  CHECK(zeros(noisy.depth) > zeros(clean.depth));
  // annotations are untouched by sensor noise
  REQUIRE(clean.ann.persons.size() == noisy.ann.persons.size());
  for (size_t p = 0; p < clean.ann.persons.size(); ++p)
    for (int j = 0; j < kNumLandmarks; ++j)
      CHECK(clean.ann.persons[p].landmarks[j].x ==
            noisy.ann.persons[p].landmarks[j].x);
}

TEST_CASE("synthetic backgrounds cover the frame with valid depth") {
  DepthImage a = synth_background(80, 60, 9);
  DepthImage b = synth_background(80, 60, 9);
  CHECK(a.depth == b.depth);
  for (float v : a.depth) {
    CHECK(v >= 0.3f);
    CHECK(v <= 8.f);
  }
  DepthImage c = synth_background(80, 60, 10);
  CHECK(a.depth != c.depth);
}

TEST_CASE("augmentation with probabilities at zero is the identity") {
  SceneConfig cfg;
  cfg.width = 96;
  cfg.height = 96;
  cfg.seed = 55;
  Scene scene = synth_scene(cfg);
  Sample in{scene.depth, scene.ann, scene.mask};
  AugmentConfig acfg;
  acfg.rotate_prob = 0.f;
  acfg.crop_prob = 0.f;
  acfg.dropout_frac = 0.f;
  std::mt19937_64 rng(1);
  Sample out = augment(in, acfg, rng);
  CHECK(out.img.depth == in.img.depth);
  CHECK(out.mask.on == in.mask.on);
  REQUIRE(out.ann.persons.size() == in.ann.persons.size());
  for (size_t p = 0; p < in.ann.persons.size(); ++p)
    for (int j = 0; j < kNumLandmarks; ++j) {
      CHECK(out.ann.persons[p].landmarks[j].x ==
            in.ann.persons[p].landmarks[j].x);
      CHECK(out.ann.persons[p].landmarks[j].y ==
            in.ann.persons[p].landmarks[j].y);
    }
}

TEST_CASE("rotation by zero degrees changes nothing") {
  SceneConfig cfg;
  cfg.width = 96;
  cfg.height = 96;
  cfg.seed = 56;
  Scene scene = synth_scene(cfg);
  Sample in{scene.depth, scene.ann, scene.mask};
  AugmentConfig acfg;
  acfg.rotate_prob = 1.f;
  acfg.max_angle_deg = 0.f;
  acfg.crop_prob = 0.f;
  acfg.dropout_frac = 0.f;
  std::mt19937_64 rng(2);
  Sample out = augment(in, acfg, rng);
  CHECK(out.img.depth == in.img.depth);
  for (size_t p = 0; p < in.ann.persons.size(); ++p)
    for (int j = 0; j < kNumLandmarks; ++j) {
      CHECK(out.ann.persons[p].landmarks[j].x ==
            in.ann.persons[p].landmarks[j].x);
      CHECK(out.ann.persons[p].landmarks[j].y ==
            in.ann.persons[p].landmarks[j].y);
    }
}

TEST_CASE("pixel dropout zeroes exactly the configured silhouette share") {
  SceneConfig cfg;
  cfg.width = 128;
  cfg.height = 128;
  cfg.seed = 57;
  Scene scene = synth_scene(cfg);
  Sample in{scene.depth, scene.ann, scene.mask};
  AugmentConfig acfg;
  acfg.rotate_prob = 0.f;
  acfg.crop_prob = 0.f;
  acfg.dropout_frac = 0.2f;
  std::mt19937_64 rng(3);
  Sample out = augment(in, acfg, rng);
  int64_t expected = std::lround(0.2 * static_cast<double>(in.mask.count()));
  int64_t zeroed = 0;
  for (size_t i = 0; i < out.img.depth.size(); ++i) {
    if (in.mask.on[i] && out.img.depth[i] == 0.f) ++zeroed;
    if (!in.mask.on[i]) CHECK(out.img.depth[i] == in.img.depth[i]);
  }
  CHECK(zeroed == expected);
  CHECK(out.mask.on == in.mask.on);  // geometry unchanged, only values

  // same seed, same pixels
  std::mt19937_64 rng2(3);
  Sample again = augment(in, acfg, rng2);
  CHECK(again.img.depth == out.img.depth);
}

TEST_CASE("cropping reframes the annotation and keeps a person") {
  SceneConfig cfg;
  cfg.width = 192;
  cfg.height = 192;
  cfg.min_persons = 2;
  cfg.max_persons = 2;
  cfg.seed = 58;
  Scene scene = synth_scene(cfg);
  Sample in{scene.depth, scene.ann, scene.mask};
  AugmentConfig acfg;
  acfg.rotate_prob = 0.f;
  acfg.crop_prob = 1.f;
  acfg.crop_w = 96;
  acfg.crop_h = 80;
  acfg.dropout_frac = 0.f;
  for (uint64_t s = 0; s < 6; ++s) {
    std::mt19937_64 rng(100 + s);
    Sample out = augment(in, acfg, rng);
    CHECK(out.img.width == 96);
    CHECK(out.img.height == 80);
    CHECK(out.ann.width == 96);
    CHECK(out.ann.height == 80);
    CHECK(!out.ann.persons.empty());
    int visible = 0;
    for (const auto& p : out.ann.persons)
      for (const auto& lm : p.landmarks)
        if (lm.visible) {
          ++visible;
          CHECK(lm.x >= -0.5f);
          CHECK(lm.x <= 95.5f);
          CHECK(lm.y >= -0.5f);
          CHECK(lm.y <= 79.5f);
        }
    CHECK(visible > 0);
  }
}

TEST_CASE("padding fills crops larger than the source") {
  SceneConfig cfg;
  cfg.width = 64;
  cfg.height = 64;
  cfg.seed = 59;
  Scene scene = synth_scene(cfg);
  Sample in{scene.depth, scene.ann, scene.mask};
  AugmentConfig acfg;
  acfg.rotate_prob = 0.f;
  acfg.crop_prob = 1.f;
  acfg.crop_w = 96;
  acfg.crop_h = 96;
  acfg.dropout_frac = 0.f;
  std::mt19937_64 rng(4);
  Sample out = augment(in, acfg, rng);
  CHECK(out.img.width == 96);
  CHECK(out.img.height == 96);
  // every nonzero output pixel must come from the 64x64 source, so at most
  // that many can be lit
  int64_t lit = 0;
  for (float v : out.img.depth) lit += v != 0.f;
  CHECK(lit <= 64 * 64);
  CHECK(!out.ann.persons.empty());
}

TEST_CASE("augmented annotations still round-trip through render and decode") {
  SceneConfig cfg;
  cfg.width = 192;
  cfg.height = 192;
  cfg.min_persons = 1;
  cfg.max_persons = 1;
  cfg.min_distance_m = 2.5f;
  cfg.max_distance_m = 3.5f;
  cfg.seed = 60;
  Scene scene = synth_scene(cfg);
  Sample in{scene.depth, scene.ann, scene.mask};
  AugmentConfig acfg;
  acfg.rotate_prob = 1.f;
  acfg.max_angle_deg = 15.f;
  acfg.crop_prob = 1.f;
  acfg.crop_w = 128;
  acfg.crop_h = 128;
  acfg.dropout_frac = 0.f;
  std::mt19937_64 rng(5);
  Sample out = augment(in, acfg, rng);
  REQUIRE(out.ann.persons.size() == 1);

  auto target = render_target(out.ann, 16, 16, 1.5f, 1.f);
  DecoderConfig dcfg;
  auto poses = decode(*target.heatmaps, *target.pafs, dcfg);
  REQUIRE(poses.size() == 1);
  const auto& gt = out.ann.persons[0];
  for (int j = 0; j < kNumLandmarks; ++j) {
    if (!gt.landmarks[j].visible) continue;
    REQUIRE(poses[0].landmarks[j].visible);
    float dx = poses[0].landmarks[j].x - gt.landmarks[j].x;
    float dy = poses[0].landmarks[j].y - gt.landmarks[j].y;
    CHECK(std::sqrt(dx * dx + dy * dy) <= 8.f);  // within one map cell
  }
}

TEST_CASE("manifests round-trip and resolve relative paths") {
  std::vector<ManifestEntry> entries{
      {"a.dih", "a.json", "a.msk", 0},
      {"b.dih", "b.json", "", 1},
  };
  auto path = tmp_path("pm_manifest.json");
  save_manifest(path, entries);
  auto back = load_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image == "a.dih");
  CHECK(back[0].mask == "a.msk");
  CHECK(back[0].domain == 0);
  CHECK(back[1].mask.empty());
  CHECK(back[1].domain == 1);
  auto joined = manifest_relative(path, back[0].image);
  CHECK(joined == tmp_path("a.dih"));
  CHECK(manifest_relative(path, "/abs/x.dih") == "/abs/x.dih");
  CHECK_THROWS_AS(load_manifest(tmp_path("pm_manifest_nope.json")), io_error);
}

TEST_CASE("dataset generation writes loadable, reproducible samples") {
  DatasetConfig cfg;
  cfg.scene.width = 64;
  cfg.scene.height = 64;
  cfg.scene.max_persons = 2;
  cfg.count = 3;
  cfg.domain = 1;
  cfg.seed = 77;
  auto dir_a = tmp_path("pm_ds_a");
  auto dir_b = tmp_path("pm_ds_b");
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  auto entries = generate_dataset(dir_a, "train", cfg);
  REQUIRE(entries.size() == 3);
  auto manifest = dir_a + "/train_manifest.json";
  auto listed = load_manifest(manifest);
  REQUIRE(listed.size() == 3);
  for (const auto& e : listed) {
    CHECK(e.domain == 1);
    DepthImage img = load_depth(manifest_relative(manifest, e.image));
    CHECK(img.width == 64);
    SkeletonAnnotation ann =
        load_annotation(manifest_relative(manifest, e.annotation));
    CHECK(!ann.persons.empty());
    Mask m = load_mask(manifest_relative(manifest, e.mask));
    CHECK(m.count() > 0);
  }
  // fused background: off-silhouette pixels carry valid depth
  DepthImage first = load_depth(manifest_relative(manifest, listed[0].image));
  Mask first_mask = load_mask(manifest_relative(manifest, listed[0].mask));
  int64_t missing_off_mask = 0;
  for (size_t i = 0; i < first.depth.size(); ++i)
    if (!first_mask.on[i] && first.depth[i] == 0.f) ++missing_off_mask;
  CHECK(missing_off_mask == 0);

  generate_dataset(dir_b, "train", cfg);
  DepthImage other = load_depth(dir_b + "/train_00000.dih");
  CHECK(other.depth == first.depth);

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}
