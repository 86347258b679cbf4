#include "pm/gt.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pm {

TensorPtr render_heatmaps(const SkeletonAnnotation& ann, int map_h, int map_w,
                          float sigma) {
  if (map_h <= 0 || map_w <= 0)
    throw config_error("heatmap size must be positive");
  if (!(sigma > 0.f)) throw config_error("sigma must be positive");
  auto out = Tensor::create({kNumLandmarks, map_h, map_w});
  float inv = 1.f / (sigma * sigma);
  for (const auto& person : ann.persons) {
    for (int j = 0; j < kNumLandmarks; ++j) {
      const Landmark& lm = person.landmarks[static_cast<std::size_t>(j)];
      if (!lm.visible) continue;
      float mx = map_from_input(lm.x);
      float my = map_from_input(lm.y);
      float* ch = out->data.data() + static_cast<int64_t>(j) * map_h * map_w;
      for (int cy = 0; cy < map_h; ++cy) {
        float dy = static_cast<float>(cy) - my;
        float* row = ch + static_cast<int64_t>(cy) * map_w;
        for (int cx = 0; cx < map_w; ++cx) {
          float dx = static_cast<float>(cx) - mx;
          float v = std::exp(-(dx * dx + dy * dy) * inv);
          if (v > row[cx]) row[cx] = v;
        }
      }
    }
  }
  return out;
}

TensorPtr render_pafs(const SkeletonAnnotation& ann, int map_h, int map_w,
                      float limb_width) {
  if (map_h <= 0 || map_w <= 0) throw config_error("paf size must be positive");
  if (!(limb_width > 0.f)) throw config_error("limb_width must be positive");
  auto out = Tensor::create({2 * kNumLimbs, map_h, map_w});
  std::vector<int> count(static_cast<std::size_t>(map_h) * map_w);
  int64_t hw = static_cast<int64_t>(map_h) * map_w;
  for (int c = 0; c < kNumLimbs; ++c) {
    std::fill(count.begin(), count.end(), 0);
    float* chx = out->data.data() + static_cast<int64_t>(2 * c) * hw;
    float* chy = chx + hw;
    for (const auto& person : ann.persons) {
      const Landmark& pa = person.landmarks[static_cast<std::size_t>(kLimbs[static_cast<std::size_t>(c)].parent)];
      const Landmark& ch = person.landmarks[static_cast<std::size_t>(kLimbs[static_cast<std::size_t>(c)].child)];
      if (!pa.visible || !ch.visible) continue;
      float ax = map_from_input(pa.x), ay = map_from_input(pa.y);
      float bx = map_from_input(ch.x), by = map_from_input(ch.y);
      float dx = bx - ax, dy = by - ay;
      float len = std::sqrt(dx * dx + dy * dy);
      if (len < 1e-6f) continue;  // degenerate limb: no direction
      float ux = dx / len, uy = dy / len;
      for (int cy = 0; cy < map_h; ++cy) {
        for (int cx = 0; cx < map_w; ++cx) {
          float px = static_cast<float>(cx) - ax;
          float py = static_cast<float>(cy) - ay;
          float along = px * ux + py * uy;
          float across = std::fabs(px * uy - py * ux);
          if (along < 0.f || along > len || across > limb_width) continue;
          int64_t idx = static_cast<int64_t>(cy) * map_w + cx;
          chx[idx] += ux;
          chy[idx] += uy;
          ++count[static_cast<std::size_t>(idx)];
        }
      }
    }
    for (int64_t i = 0; i < hw; ++i) {
      if (count[static_cast<std::size_t>(i)] > 1) {
        float inv = 1.f / static_cast<float>(count[static_cast<std::size_t>(i)]);
        chx[i] *= inv;
        chy[i] *= inv;
      }
    }
  }
  return out;
}

StageTarget render_target(const SkeletonAnnotation& ann, int map_h, int map_w,
                          float sigma, float limb_width) {
  return StageTarget{render_heatmaps(ann, map_h, map_w, sigma),
                     render_pafs(ann, map_h, map_w, limb_width)};
}

namespace {

nlohmann::json person_to_json(const PersonAnnotation& p) {
  nlohmann::json lms = nlohmann::json::array();
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Landmark& lm = p.landmarks[static_cast<std::size_t>(j)];
    lms.push_back({{"name", std::string(kLandmarkNames[static_cast<std::size_t>(j)])},
                   {"x", lm.x},
                   {"y", lm.y},
                   {"visible", lm.visible}});
  }
  return {{"landmarks", lms}};
}

PersonAnnotation person_from_json(const nlohmann::json& j) {
  if (!j.contains("landmarks") || !j["landmarks"].is_array())
    throw io_error("annotation person missing landmark list");
  PersonAnnotation p;
  std::array<bool, kNumLandmarks> seen{};
  for (const auto& lj : j["landmarks"]) {
    std::string name = lj.at("name").get<std::string>();
    int idx = landmark_index(name);
    if (idx < 0) throw io_error("unknown landmark name '" + name + "'");
    if (seen[static_cast<std::size_t>(idx)])
      throw io_error("duplicate landmark '" + name + "'");
    seen[static_cast<std::size_t>(idx)] = true;
    Landmark& lm = p.landmarks[static_cast<std::size_t>(idx)];
    lm.x = lj.at("x").get<float>();
    lm.y = lj.at("y").get<float>();
    lm.visible = lj.at("visible").get<bool>();
  }
  for (int j2 = 0; j2 < kNumLandmarks; ++j2)
    if (!seen[static_cast<std::size_t>(j2)])
      throw io_error("missing landmark '" +
                     std::string(kLandmarkNames[static_cast<std::size_t>(j2)]) + "'");
  return p;
}

}  // namespace

std::string annotation_to_json(const SkeletonAnnotation& ann) {
  nlohmann::json j;
  j["width"] = ann.width;
  j["height"] = ann.height;
  j["persons"] = nlohmann::json::array();
  for (const auto& p : ann.persons) j["persons"].push_back(person_to_json(p));
  return j.dump(2);
}

SkeletonAnnotation annotation_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("bad annotation JSON: ") + e.what());
  }
  SkeletonAnnotation ann;
  try {
    ann.width = j.at("width").get<int>();
    ann.height = j.at("height").get<int>();
    for (const auto& pj : j.at("persons")) ann.persons.push_back(person_from_json(pj));
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("bad annotation JSON: ") + e.what());
  }
  return ann;
}

SkeletonAnnotation load_annotation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open annotation file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return annotation_from_json(ss.str());
}

void save_annotation(const std::string& path, const SkeletonAnnotation& ann) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write annotation file '" + path + "'");
  out << annotation_to_json(ann) << '\n';
  if (!out) throw io_error("failed writing annotation file '" + path + "'");
}

}  // namespace pm
