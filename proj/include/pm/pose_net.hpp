#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pm/nn.hpp"
#include "pm/skeleton.hpp"

namespace pm {

// Pose machines: a feature extractor F producing feature_width channels at
// 1/8 input resolution, then num_stages cascade stages. Every stage carries
// two branches predicting landmark confidence maps [J, h, w] and limb
// direction fields [2C, h, w]; stages past the first consume the channel
// concatenation (F, previous heatmaps, previous fields).

enum class Family { RPM, SPM, MPM, TEACHER };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

struct ModelSpec {
  Family family = Family::MPM;
  int num_stages = 2;
  int feature_width = 64;
  int num_landmarks = kNumLandmarks;
  int num_limbs = kNumLimbs;
  int input_w = 368;
  int input_h = 368;
};

/// Family defaults: TEACHER widens the feature extractor to 128 channels.
ModelSpec default_spec(Family family, int num_stages);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);

struct StageOutput {
  TensorPtr heatmaps;  // [N, J, h, w]
  TensorPtr pafs;      // [N, 2C, h, w]
};

struct CascadeResult {
  TensorPtr features;  // [N, feature_width, h, w]
  std::vector<StageOutput> stages;
};

class PoseModel {
 public:
  /// Builds and initializes all parameters from the seed; throws config_error
  /// for an unsupported spec (stages < 1, or widths a family cannot realize).
  PoseModel(const ModelSpec& spec, uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  /// Trainable parameter count (optimizer-visible tensors only).
  int64_t count_params() const { return params_.trainable_count(); }

  /// Extractor only: [N,1,H,W] -> [N, feature_width, H/8, W/8].
  /// H and W must be positive multiples of 8.
  TensorPtr features(Graph& g, const TensorPtr& x, bool training);

  /// Runs stages 1..first_stages on precomputed features (first_stages < 0
  /// means all). Stage s>=2 consumes concat(features, heatmaps, pafs) of the
  /// previous stage, in that channel order.
  std::vector<StageOutput> run_stages(Graph& g, const TensorPtr& features,
                                      bool training, int first_stages = -1);

  CascadeResult forward_with_features(Graph& g, const TensorPtr& x,
                                      bool training);
  std::vector<StageOutput> run_cascade(Graph& g, const TensorPtr& x,
                                       bool training);

 private:
  struct Stage {
    BlockPtr s_branch;
    BlockPtr l_branch;
  };
  void build(std::mt19937_64& rng);

  ModelSpec spec_;
  ParamStore params_;
  BlockPtr extractor_;
  std::vector<Stage> stages_;
};

/// Domain classifier head over extractor features: average pool, 1x1
/// convolution, average pool, then two fully connected layers and a sigmoid.
/// Bound to a fixed feature shape [channels, feat_h, feat_w] at construction;
/// forward returns per-sample probabilities [N, 1]. By convention the head is
/// trained toward 1 on real-style input and 0 on synthetic input. Place a
/// grad_reverse op in front of the head for adversarial feature training.
class DomainHead {
 public:
  DomainHead(ParamStore& ps, const std::string& name, int channels, int feat_h,
             int feat_w, std::mt19937_64& rng);
  TensorPtr forward(Graph& g, const TensorPtr& features, bool training);

 private:
  std::string name_;
  int channels_, feat_h_, feat_w_;
  std::unique_ptr<ConvBlock> mid_;
  TensorPtr fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

/// Copies every destination parameter whose name also exists in `src`
/// (shapes must agree; a name collision with a different shape throws
/// shape_error). Returns the number of tensors copied. Cascade growth uses
/// this: a model with one more stage inherits the extractor and all earlier
/// stages bit for bit, leaving only the new stage freshly initialized.
int64_t copy_matching_params(const ParamStore& src, ParamStore& dst);

// Checkpoint container: UTF-8 JSON manifest, one zero byte, then every
// parameter and buffer as raw little-endian 32-bit floats at the offsets the
// manifest records. Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const PoseModel& model);
std::unique_ptr<PoseModel> load_checkpoint(const std::string& path);

}  // namespace pm
