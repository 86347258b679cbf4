#include "pm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace pm {

namespace {

constexpr float kMaxDepth = 8.f;

void check_dims(int w, int h, const char* what) {
  if (w <= 0 || h <= 0)
    throw config_error(std::string(what) + ": dimensions must be positive");
}

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

std::pair<int, int> read_header(std::istream& is, const char* magic,
                                const std::string& path) {
  char got[4];
  is.read(got, 4);
  if (!is || std::memcmp(got, magic, 4) != 0)
    throw io_error("bad magic in '" + path + "'");
  uint32_t w = read_u32(is), h = read_u32(is);
  if (!is || w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20) ||
      static_cast<uint64_t>(w) * h > (1u << 28))
    throw io_error("bad dimensions in '" + path + "'");
  return {static_cast<int>(w), static_cast<int>(h)};
}

}  // namespace

DepthImage DepthImage::create(int w, int h, float fill) {
  check_dims(w, h, "depth image");
  DepthImage img;
  img.width = w;
  img.height = h;
  img.depth.assign(static_cast<size_t>(w) * h, fill);
  return img;
}

Mask Mask::create(int w, int h) {
  check_dims(w, h, "mask");
  Mask m;
  m.width = w;
  m.height = h;
  m.on.assign(static_cast<size_t>(w) * h, 0);
  return m;
}

int64_t Mask::count() const {
  int64_t n = 0;
  for (uint8_t v : on) n += v != 0;
  return n;
}

DepthImage load_depth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open '" + path + "'");
  auto [w, h] = read_header(is, "DIH1", path);
  DepthImage img = DepthImage::create(w, h);
  is.read(reinterpret_cast<char*>(img.depth.data()),
          static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
  if (!is) throw io_error("truncated depth data in '" + path + "'");
  for (float v : img.depth)
    if (!std::isfinite(v) || v < 0.f || v > kMaxDepth + 1e-4f)
      throw io_error("depth value out of range in '" + path + "'");
  return img;
}

void save_depth(const std::string& path, const DepthImage& img) {
  check_dims(img.width, img.height, "depth image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write '" + path + "'");
  os.write("DIH1", 4);
  write_u32(os, static_cast<uint32_t>(img.width));
  write_u32(os, static_cast<uint32_t>(img.height));
  os.write(reinterpret_cast<const char*>(img.depth.data()),
           static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
  if (!os) throw io_error("short write to '" + path + "'");
}

Mask load_mask(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open '" + path + "'");
  auto [w, h] = read_header(is, "MSK1", path);
  Mask m = Mask::create(w, h);
  is.read(reinterpret_cast<char*>(m.on.data()),
          static_cast<std::streamsize>(m.on.size()));
  if (!is) throw io_error("truncated mask data in '" + path + "'");
  for (uint8_t v : m.on)
    if (v > 1) throw io_error("mask byte not 0/1 in '" + path + "'");
  return m;
}

void save_mask(const std::string& path, const Mask& mask) {
  check_dims(mask.width, mask.height, "mask");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write '" + path + "'");
  os.write("MSK1", 4);
  write_u32(os, static_cast<uint32_t>(mask.width));
  write_u32(os, static_cast<uint32_t>(mask.height));
  os.write(reinterpret_cast<const char*>(mask.on.data()),
           static_cast<std::streamsize>(mask.on.size()));
  if (!os) throw io_error("short write to '" + path + "'");
}

TensorPtr normalize(const DepthImage& img) {
  check_dims(img.width, img.height, "depth image");
  auto t = Tensor::create({1, img.height, img.width});
  for (size_t i = 0; i < img.depth.size(); ++i)
    t->data[i] = img.depth[i] / kMaxDepth - 0.5f;
  return t;
}

DepthImage fuse_background(const DepthImage& fg, const Mask& mask,
                           const DepthImage& bg, float margin) {
  if (fg.width != bg.width || fg.height != bg.height ||
      fg.width != mask.width || fg.height != mask.height)
    throw shape_error("fuse_background: mismatched dimensions");
  float min_diff = std::numeric_limits<float>::infinity();
  for (size_t i = 0; i < fg.depth.size(); ++i)
    if (mask.on[i] && bg.depth[i] > 0.f)
      min_diff = std::min(min_diff, bg.depth[i] - fg.depth[i]);
  float shift = 0.f;
  if (std::isfinite(min_diff) && min_diff < margin) shift = margin - min_diff;
  DepthImage out = DepthImage::create(fg.width, fg.height);
  for (size_t i = 0; i < out.depth.size(); ++i) {
    if (mask.on[i])
      out.depth[i] = fg.depth[i];
    else if (bg.depth[i] > 0.f)
      out.depth[i] = std::min(bg.depth[i] + shift, kMaxDepth);
    else
      out.depth[i] = 0.f;
  }
  return out;
}

DepthImage apply_sensor_noise(const DepthImage& img, std::mt19937_64& rng,
                              float edge_threshold, float salt_frac) {
  if (salt_frac < 0.f || salt_frac > 1.f)
    throw config_error("apply_sensor_noise: salt_frac outside [0, 1]");
  DepthImage out = img;
  const int w = img.width, h = img.height;
  std::uniform_int_distribution<int> band(1, 3);
  // Shadow bands grow from a discontinuity into its deeper side, the way a
  // structured-light sensor loses returns just past an occlusion boundary.
  auto shadow = [&](int y, int x, int dy, int dx) {
    int n = band(rng);
    for (int k = 0; k < n; ++k, y += dy, x += dx) {
      if (y < 0 || y >= h || x < 0 || x >= w) break;
      out.depth[static_cast<size_t>(y) * w + x] = 0.f;
    }
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = img.at(y, x);
      if (x + 1 < w) {
        float r = img.at(y, x + 1);
        if (std::fabs(v - r) > edge_threshold) {
          if (v < r)
            shadow(y, x + 1, 0, 1);
          else if (v > 0.f)
            shadow(y, x, 0, -1);
        }
      }
      if (y + 1 < h) {
        float d = img.at(y + 1, x);
        if (std::fabs(v - d) > edge_threshold) {
          if (v < d)
            shadow(y + 1, x, 1, 0);
          else if (v > 0.f)
            shadow(y, x, -1, 0);
        }
      }
    }
  int64_t total = static_cast<int64_t>(w) * h;
  int64_t n_salt = std::lround(static_cast<double>(salt_frac) * total);
  if (n_salt > 0) {
    std::vector<int64_t> idx(total);
    for (int64_t i = 0; i < total; ++i) idx[i] = i;
    for (int64_t i = 0; i < n_salt; ++i) {
      std::uniform_int_distribution<int64_t> pick(i, total - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.depth[idx[i]] = 0.f;
    }
  }
  return out;
}

namespace {

bool landmark_in_frame(const Landmark& lm, int w, int h) {
  long ix = std::lround(lm.x), iy = std::lround(lm.y);
  return ix >= 0 && ix < w && iy >= 0 && iy < h;
}

void prune_invisible_persons(SkeletonAnnotation& ann) {
  std::erase_if(ann.persons, [](const PersonAnnotation& p) {
    return std::none_of(p.landmarks.begin(), p.landmarks.end(),
                        [](const Landmark& lm) { return lm.visible; });
  });
}

}  // namespace

Sample augment(const Sample& in, const AugmentConfig& cfg,
               std::mt19937_64& rng) {
  if (cfg.rotate_prob < 0.f || cfg.rotate_prob > 1.f || cfg.crop_prob < 0.f ||
      cfg.crop_prob > 1.f)
    throw config_error("augment: probabilities outside [0, 1]");
  if (cfg.dropout_frac < 0.f || cfg.dropout_frac > 1.f)
    throw config_error("augment: dropout_frac outside [0, 1]");
  if (cfg.max_angle_deg < 0.f || cfg.max_angle_deg > 180.f)
    throw config_error("augment: max_angle_deg outside [0, 180]");
  if (cfg.crop_w <= 0 || cfg.crop_h <= 0)
    throw config_error("augment: crop size must be positive");
  if (in.img.width != in.mask.width || in.img.height != in.mask.height)
    throw shape_error("augment: image/mask dimensions differ");

  std::uniform_real_distribution<float> u01(0.f, 1.f);
  Sample out = in;

  if (u01(rng) < cfg.rotate_prob) {
    std::uniform_real_distribution<float> ua(-cfg.max_angle_deg,
                                             cfg.max_angle_deg);
    float th = ua(rng) * 3.14159265358979323846f / 180.f;
    float c = std::cos(th), s = std::sin(th);
    const int w = out.img.width, h = out.img.height;
    float cx = (w - 1) * 0.5f, cy = (h - 1) * 0.5f;
    DepthImage rimg = DepthImage::create(w, h);
    Mask rmask = Mask::create(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // inverse rotation fetches the source pixel; nearest neighbor keeps
        // depth values unblended across discontinuities
        float dx = x - cx, dy = y - cy;
        long sx = std::lround(cx + c * dx + s * dy);
        long sy = std::lround(cy - s * dx + c * dy);
        if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
        rimg.at(y, x) = out.img.at(static_cast<int>(sy), static_cast<int>(sx));
        rmask.set(y, x, out.mask.at(static_cast<int>(sy), static_cast<int>(sx)));
      }
    out.img = std::move(rimg);
    out.mask = std::move(rmask);
    for (auto& person : out.ann.persons)
      for (auto& lm : person.landmarks) {
        float dx = lm.x - cx, dy = lm.y - cy;
        lm.x = cx + c * dx - s * dy;
        lm.y = cy + s * dx + c * dy;
        if (lm.visible) lm.visible = landmark_in_frame(lm, w, h);
      }
  }

  if (u01(rng) < cfg.crop_prob) {
    // anchor the window on the visible-landmark centroid of a random person
    // so the crop always frames somebody
    std::vector<int> candidates;
    for (size_t i = 0; i < out.ann.persons.size(); ++i)
      for (const auto& lm : out.ann.persons[i].landmarks)
        if (lm.visible) {
          candidates.push_back(static_cast<int>(i));
          break;
        }
    if (!candidates.empty()) {
      std::uniform_int_distribution<size_t> pickp(0, candidates.size() - 1);
      const auto& person = out.ann.persons[candidates[pickp(rng)]];
      float ax = 0.f, ay = 0.f;
      int nv = 0;
      for (const auto& lm : person.landmarks)
        if (lm.visible) {
          ax += lm.x;
          ay += lm.y;
          ++nv;
        }
      ax /= nv;
      ay /= nv;
      // keep the anchor inside the middle half of the window
      long ox = std::lround(ax - (0.25f + 0.5f * u01(rng)) * cfg.crop_w);
      long oy = std::lround(ay - (0.25f + 0.5f * u01(rng)) * cfg.crop_h);
      DepthImage cimg = DepthImage::create(cfg.crop_w, cfg.crop_h);
      Mask cmask = Mask::create(cfg.crop_w, cfg.crop_h);
      for (int y = 0; y < cfg.crop_h; ++y)
        for (int x = 0; x < cfg.crop_w; ++x) {
          long sx = ox + x, sy = oy + y;
          if (sx < 0 || sx >= out.img.width || sy < 0 || sy >= out.img.height)
            continue;
          cimg.at(y, x) = out.img.at(static_cast<int>(sy), static_cast<int>(sx));
          cmask.set(y, x,
                    out.mask.at(static_cast<int>(sy), static_cast<int>(sx)));
        }
      out.img = std::move(cimg);
      out.mask = std::move(cmask);
      out.ann.width = cfg.crop_w;
      out.ann.height = cfg.crop_h;
      for (auto& p : out.ann.persons)
        for (auto& lm : p.landmarks) {
          lm.x -= ox;
          lm.y -= oy;
          if (lm.visible)
            lm.visible = landmark_in_frame(lm, cfg.crop_w, cfg.crop_h);
        }
    }
  }

  prune_invisible_persons(out.ann);

  int64_t on_count = out.mask.count();
  int64_t n_drop =
      std::lround(static_cast<double>(cfg.dropout_frac) * on_count);
  if (n_drop > 0) {
    std::vector<int64_t> on_idx;
    on_idx.reserve(on_count);
    for (size_t i = 0; i < out.mask.on.size(); ++i)
      if (out.mask.on[i]) on_idx.push_back(static_cast<int64_t>(i));
    for (int64_t i = 0; i < n_drop; ++i) {
      std::uniform_int_distribution<int64_t> pick(
          i, static_cast<int64_t>(on_idx.size()) - 1);
      std::swap(on_idx[i], on_idx[pick(rng)]);
      out.img.depth[on_idx[i]] = 0.f;
    }
  }
  return out;
}

void save_manifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j{{"image", e.image},
                     {"annotation", e.annotation},
                     {"domain", e.domain}};
    if (!e.mask.empty()) j["mask"] = e.mask;
    items.push_back(std::move(j));
  }
  nlohmann::json root{{"items", std::move(items)}};
  std::ofstream os(path);
  if (!os) throw io_error("cannot write '" + path + "'");
  os << root.dump(2) << "\n";
  if (!os) throw io_error("short write to '" + path + "'");
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  std::vector<ManifestEntry> entries;
  try {
    auto root = nlohmann::json::parse(text);
    for (const auto& j : root.at("items")) {
      ManifestEntry e;
      e.image = j.at("image").get<std::string>();
      e.annotation = j.at("annotation").get<std::string>();
      e.domain = j.at("domain").get<int>();
      if (j.contains("mask")) e.mask = j.at("mask").get<std::string>();
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw io_error("bad manifest JSON in '" + path + "': " + ex.what());
  }
  return entries;
}

std::string manifest_relative(const std::string& manifest_path,
                              const std::string& entry_path) {
  std::filesystem::path p(entry_path);
  if (p.is_absolute()) return entry_path;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

}  // namespace pm
