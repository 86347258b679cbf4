#include "pm/pose_net.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pm {

std::string family_name(Family f) {
  switch (f) {
    case Family::RPM: return "RPM";
    case Family::SPM: return "SPM";
    case Family::MPM: return "MPM";
    case Family::TEACHER: return "TEACHER";
  }
  throw config_error("unknown family value");
}

Family family_from_name(const std::string& name) {
  if (name == "RPM") return Family::RPM;
  if (name == "SPM") return Family::SPM;
  if (name == "MPM") return Family::MPM;
  if (name == "TEACHER") return Family::TEACHER;
  throw config_error("unknown family '" + name + "'");
}

ModelSpec default_spec(Family family, int num_stages) {
  ModelSpec spec;
  spec.family = family;
  spec.num_stages = num_stages;
  spec.feature_width = family == Family::TEACHER ? 128 : 64;
  return spec;
}

std::string spec_to_json(const ModelSpec& spec) {
  nlohmann::json j{{"family", family_name(spec.family)},
                   {"num_stages", spec.num_stages},
                   {"feature_width", spec.feature_width},
                   {"num_landmarks", spec.num_landmarks},
                   {"num_limbs", spec.num_limbs},
                   {"input_w", spec.input_w},
                   {"input_h", spec.input_h}};
  return j.dump();
}

ModelSpec spec_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    ModelSpec spec;
    spec.family = family_from_name(j.at("family").get<std::string>());
    spec.num_stages = j.at("num_stages").get<int>();
    if (j.contains("feature_width"))
      spec.feature_width = j.at("feature_width").get<int>();
    else
      spec.feature_width = spec.family == Family::TEACHER ? 128 : 64;
    if (j.contains("num_landmarks"))
      spec.num_landmarks = j.at("num_landmarks").get<int>();
    if (j.contains("num_limbs")) spec.num_limbs = j.at("num_limbs").get<int>();
    if (j.contains("input_w")) spec.input_w = j.at("input_w").get<int>();
    if (j.contains("input_h")) spec.input_h = j.at("input_h").get<int>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("bad model spec JSON: ") + e.what());
  }
}

namespace {

// Branch tails shared by every family: a 1x1 conv+norm+relu projection and a
// linear 1x1 prediction layer.
void push_branch_tail(Seq& seq, ParamStore& ps, const std::string& name,
                      int width, int out, std::mt19937_64& rng) {
  seq.push(std::make_unique<ConvBlock>(ps, name + ".proj", width, width, 1, 1,
                                       0, true, true, rng));
  seq.push(std::make_unique<ConvBlock>(ps, name + ".pred", width, out, 1, 1, 0,
                                       false, false, rng));
}

BlockPtr rpm_branch(ParamStore& ps, const std::string& name, int cin,
                    int width, int out, int n_convs, int k,
                    std::mt19937_64& rng) {
  auto seq = std::make_unique<Seq>();
  for (int i = 0; i < n_convs; ++i)
    seq->push(std::make_unique<ConvBlock>(ps, name + ".c" + std::to_string(i + 1),
                                          i == 0 ? cin : width, width, k, 1,
                                          k / 2, true, true, rng));
  push_branch_tail(*seq, ps, name, width, out, rng);
  return seq;
}

BlockPtr mpm_branch(ParamStore& ps, const std::string& name, int cin,
                    int width, int out, std::mt19937_64& rng) {
  auto seq = std::make_unique<Seq>();
  for (int i = 0; i < 5; ++i)
    seq->push(std::make_unique<DepthPoint>(ps, name + ".d" + std::to_string(i + 1),
                                           i == 0 ? cin : width, width, 1, rng));
  push_branch_tail(*seq, ps, name, width, out, rng);
  return seq;
}

BlockPtr spm_branch(ParamStore& ps, const std::string& name, int cin, int out,
                    std::mt19937_64& rng) {
  auto seq = std::make_unique<Seq>();
  seq->push(std::make_unique<FireModule>(ps, name + ".f1", cin, 16, 32, 32, rng));
  seq->push(std::make_unique<FireModule>(ps, name + ".f2", 64, 16, 32, 32, rng));
  seq->push(std::make_unique<FireModule>(ps, name + ".f3", 64, 24, 48, 48, rng));
  seq->push(std::make_unique<FireModule>(ps, name + ".f4", 96, 24, 48, 48, rng));
  seq->push(std::make_unique<FireModule>(ps, name + ".f5", 96, 32, 64, 64, rng));
  seq->push(std::make_unique<ConvBlock>(ps, name + ".proj", 128, 64, 1, 1, 0,
                                        true, true, rng));
  seq->push(std::make_unique<ConvBlock>(ps, name + ".pred", 64, out, 1, 1, 0,
                                        false, false, rng));
  return seq;
}

}  // namespace

PoseModel::PoseModel(const ModelSpec& spec, uint64_t seed) : spec_(spec) {
  if (spec_.num_stages < 1)
    throw config_error("pose model needs at least one stage");
  if (spec_.num_landmarks < 1 || spec_.num_limbs < 1)
    throw config_error("pose model needs positive landmark and limb counts");
  if (spec_.feature_width < 2)
    throw config_error("feature width too small");
  std::mt19937_64 rng(seed);
  build(rng);
}

void PoseModel::build(std::mt19937_64& rng) {
  const int nw = spec_.feature_width;
  const int J = spec_.num_landmarks;
  const int L = 2 * spec_.num_limbs;
  const int cascade_in = nw + J + L;

  switch (spec_.family) {
    case Family::RPM:
    case Family::TEACHER: {
      auto ext = std::make_unique<Seq>();
      ext->push(std::make_unique<ConvBlock>(params_, "extractor.stem", 1, nw, 3,
                                            1, 1, true, true, rng));
      for (int r = 1; r <= 3; ++r) {
        ext->push(std::make_unique<AvgPoolBlock>("extractor.pool" + std::to_string(r)));
        ext->push(std::make_unique<ResidualBlock>(
            params_, "extractor.res" + std::to_string(r), nw, rng));
      }
      extractor_ = std::move(ext);
      bool teacher = spec_.family == Family::TEACHER;
      for (int s = 1; s <= spec_.num_stages; ++s) {
        std::string base = "stage" + std::to_string(s);
        int cin = s == 1 ? nw : cascade_in;
        // the first stage of the compact variant uses three 3x3 layers; all
        // other stages (and every teacher stage) use five 7x7 layers
        int n_convs = (s == 1 && !teacher) ? 3 : 5;
        int k = (s == 1 && !teacher) ? 3 : 7;
        stages_.push_back(
            {rpm_branch(params_, base + ".s_branch", cin, nw, J, n_convs, k, rng),
             rpm_branch(params_, base + ".l_branch", cin, nw, L, n_convs, k, rng)});
      }
      break;
    }
    case Family::MPM: {
      if (nw % 2 != 0)
        throw config_error("MPM needs an even feature width");
      auto ext = std::make_unique<Seq>();
      const int half = nw / 2;
      struct LayerPlan {
        int cin, cout, stride;
        bool wrap;
      };
      const LayerPlan plan[8] = {
          {1, half, 2, false},   {half, half, 1, true}, {half, nw, 2, false},
          {nw, nw, 1, true},     {nw, nw, 2, false},    {nw, nw, 1, true},
          {nw, nw, 1, false},    {nw, nw, 1, false},
      };
      for (int i = 0; i < 8; ++i) {
        std::string nm = "extractor.l" + std::to_string(i + 1);
        auto dp = std::make_unique<DepthPoint>(params_, nm, plan[i].cin,
                                               plan[i].cout, plan[i].stride, rng);
        if (plan[i].wrap)
          ext->push(std::make_unique<ResidualWrap>(nm, std::move(dp)));
        else
          ext->push(std::move(dp));
      }
      extractor_ = std::move(ext);
      for (int s = 1; s <= spec_.num_stages; ++s) {
        std::string base = "stage" + std::to_string(s);
        int cin = s == 1 ? nw : cascade_in;
        stages_.push_back(
            {mpm_branch(params_, base + ".s_branch", cin, nw, J, rng),
             mpm_branch(params_, base + ".l_branch", cin, nw, L, rng)});
      }
      break;
    }
    case Family::SPM: {
      if (nw != 64)
        throw config_error("SPM architecture is fixed at feature width 64");
      auto ext = std::make_unique<Seq>();
      ext->push(std::make_unique<FireModule>(params_, "extractor.f1", 1, 8, 16,
                                             16, rng));
      ext->push(std::make_unique<AvgPoolBlock>("extractor.pool1"));
      ext->push(std::make_unique<FireModule>(params_, "extractor.f2", 32, 16,
                                             32, 32, rng));
      ext->push(std::make_unique<ResidualWrap>(
          "extractor.f3", std::make_unique<FireModule>(params_, "extractor.f3",
                                                       64, 16, 32, 32, rng)));
      ext->push(std::make_unique<AvgPoolBlock>("extractor.pool2"));
      ext->push(std::make_unique<FireModule>(params_, "extractor.f4", 64, 32,
                                             64, 64, rng));
      ext->push(std::make_unique<ResidualWrap>(
          "extractor.f5", std::make_unique<FireModule>(params_, "extractor.f5",
                                                       128, 32, 64, 64, rng)));
      ext->push(std::make_unique<AvgPoolBlock>("extractor.pool3"));
      ext->push(std::make_unique<FireModule>(params_, "extractor.f6", 128, 48,
                                             96, 96, rng));
      ext->push(std::make_unique<ResidualWrap>(
          "extractor.f7", std::make_unique<FireModule>(params_, "extractor.f7",
                                                       192, 48, 96, 96, rng)));
      ext->push(std::make_unique<ConvBlock>(params_, "extractor.p1", 192, 96, 1,
                                            1, 0, true, true, rng));
      ext->push(std::make_unique<ConvBlock>(params_, "extractor.p2", 96, 64, 1,
                                            1, 0, true, true, rng));
      extractor_ = std::move(ext);
      for (int s = 1; s <= spec_.num_stages; ++s) {
        std::string base = "stage" + std::to_string(s);
        int cin = s == 1 ? nw : cascade_in;
        stages_.push_back(
            {spm_branch(params_, base + ".s_branch", cin, J, rng),
             spm_branch(params_, base + ".l_branch", cin, L, rng)});
      }
      break;
    }
  }
}

TensorPtr PoseModel::features(Graph& g, const TensorPtr& x, bool training) {
  if (x->shape.size() != 4 || x->shape[1] != 1)
    throw shape_error("pose model input must be [N,1,H,W]");
  if (x->shape[2] <= 0 || x->shape[3] <= 0 || x->shape[2] % 8 != 0 ||
      x->shape[3] % 8 != 0)
    throw shape_error("pose model input extents must be positive multiples of 8");
  return extractor_->forward(g, x, training);
}

std::vector<StageOutput> PoseModel::run_stages(Graph& g,
                                               const TensorPtr& features,
                                               bool training,
                                               int first_stages) {
  if (features->shape.size() != 4 || features->shape[1] != spec_.feature_width)
    throw shape_error("stage input must be [N,feature_width,h,w]");
  int upto = first_stages < 0 ? spec_.num_stages : first_stages;
  if (upto < 1 || upto > spec_.num_stages)
    throw config_error("stage count out of range");
  std::vector<StageOutput> outs;
  TensorPtr input = features;
  for (int s = 0; s < upto; ++s) {
    if (s > 0)
      input = concat_channels(
          g, {features, outs.back().heatmaps, outs.back().pafs},
          "stage" + std::to_string(s + 1) + ".in");
    StageOutput out;
    out.heatmaps = stages_[s].s_branch->forward(g, input, training);
    out.pafs = stages_[s].l_branch->forward(g, input, training);
    outs.push_back(std::move(out));
  }
  return outs;
}

CascadeResult PoseModel::forward_with_features(Graph& g, const TensorPtr& x,
                                               bool training) {
  CascadeResult res;
  res.features = features(g, x, training);
  res.stages = run_stages(g, res.features, training);
  return res;
}

std::vector<StageOutput> PoseModel::run_cascade(Graph& g, const TensorPtr& x,
                                                bool training) {
  return forward_with_features(g, x, training).stages;
}

DomainHead::DomainHead(ParamStore& ps, const std::string& name, int channels,
                       int feat_h, int feat_w, std::mt19937_64& rng)
    : name_(name), channels_(channels), feat_h_(feat_h), feat_w_(feat_w) {
  if (channels < 1 || feat_h < 4 || feat_w < 4)
    throw config_error("domain head needs features at least 4x4");
  mid_ = std::make_unique<ConvBlock>(ps, name + ".mid", channels, 32, 1, 1, 0,
                                     true, true, rng);
  int ph = feat_h / 2 / 2, pw = feat_w / 2 / 2;
  int flat = 32 * ph * pw;
  fc1_w_ = ps.add(name + ".fc1.w", Tensor::create({64, flat}));
  fc1_b_ = ps.add(name + ".fc1.b", Tensor::create({64}));
  fc2_w_ = ps.add(name + ".fc2.w", Tensor::create({1, 64}));
  fc2_b_ = ps.add(name + ".fc2.b", Tensor::create({1}));
  kaiming_fill(*fc1_w_, flat, rng);
  kaiming_fill(*fc2_w_, 64, rng);
}

TensorPtr DomainHead::forward(Graph& g, const TensorPtr& features,
                              bool training) {
  if (features->shape.size() != 4 || features->shape[1] != channels_ ||
      features->shape[2] != feat_h_ || features->shape[3] != feat_w_)
    throw shape_error("domain head feature shape mismatch");
  auto h = avg_pool2(g, features, name_ + ".pool1");
  h = mid_->forward(g, h, training);
  h = avg_pool2(g, h, name_ + ".pool2");
  h = fully_connected(g, h, fc1_w_, fc1_b_, name_ + ".fc1");
  h = relu(g, h, name_ + ".fc1.relu");
  h = fully_connected(g, h, fc2_w_, fc2_b_, name_ + ".fc2");
  return sigmoid(g, h, name_ + ".prob");
}

int64_t copy_matching_params(const ParamStore& src, ParamStore& dst) {
  int64_t copied = 0;
  for (const auto& e : dst.entries()) {
    TensorPtr from = src.find(e.name);
    if (!from) continue;
    if (from->shape != e.tensor->shape)
      throw shape_error("parameter '" + e.name + "' exists with a different shape");
    e.tensor->data = from->data;
    ++copied;
  }
  return copied;
}

void save_checkpoint(const std::string& path, const PoseModel& model) {
  nlohmann::json tensors = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& e : model.params().entries()) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.tensor->shape},
                       {"offset", offset},
                       {"trainable", e.trainable}});
    offset += e.tensor->numel();
  }
  nlohmann::json manifest{{"format", 1},
                          {"spec", nlohmann::json::parse(spec_to_json(model.spec()))},
                          {"tensors", std::move(tensors)},
                          {"total_floats", offset}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write '" + path + "'");
  std::string text = manifest.dump();
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.put('\0');
  for (const auto& e : model.params().entries())
    os.write(reinterpret_cast<const char*>(e.tensor->data.data()),
             static_cast<std::streamsize>(e.tensor->data.size() * sizeof(float)));
  if (!os) throw io_error("short write to '" + path + "'");
}

std::unique_ptr<PoseModel> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open '" + path + "'");
  std::string text;
  if (!std::getline(is, text, '\0'))
    throw io_error("missing manifest in '" + path + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("bad checkpoint manifest in '" + path + "': " + e.what());
  }
  try {
    if (manifest.at("format").get<int>() != 1)
      throw io_error("unsupported checkpoint format in '" + path + "'");
    ModelSpec spec = spec_from_json(manifest.at("spec").dump());
    auto model = std::make_unique<PoseModel>(spec, 0);
    int64_t total = manifest.at("total_floats").get<int64_t>();
    std::vector<float> blob(static_cast<size_t>(total));
    is.read(reinterpret_cast<char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!is) throw io_error("truncated parameter blob in '" + path + "'");
    for (const auto& tj : manifest.at("tensors")) {
      std::string name = tj.at("name").get<std::string>();
      std::vector<int> shape = tj.at("shape").get<std::vector<int>>();
      int64_t offset = tj.at("offset").get<int64_t>();
      TensorPtr dst = model->params().find(name);
      if (!dst) throw io_error("checkpoint tensor '" + name + "' has no slot");
      if (dst->shape != shape)
        throw io_error("checkpoint tensor '" + name + "' shape mismatch");
      if (offset < 0 || offset + dst->numel() > total)
        throw io_error("checkpoint tensor '" + name + "' offset out of range");
      std::memcpy(dst->data.data(), blob.data() + offset,
                  dst->data.size() * sizeof(float));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("bad checkpoint manifest in '" + path + "': " + e.what());
  }
}

}  // namespace pm
