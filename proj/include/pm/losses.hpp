#pragma once

#include <vector>

#include "pm/gt.hpp"
#include "pm/pose_net.hpp"

namespace pm {

// Training objectives. All map losses are sums over pixels of squared
// differences (no averaging); the learning-rate configuration absorbs scale.
// Zero-coefficient terms are skipped entirely, so degenerate settings reduce
// to the simpler objective bit for bit.

struct LossBreakdown {
  std::vector<double> stage_heatmap;  // per-stage landmark-map loss
  std::vector<double> stage_paf;      // per-stage limb-field loss
  double pose = 0.0;                  // sum of all stage terms
  double domain = 0.0;
  double teacher = 0.0;
  double hints = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// Per-branch squared-difference sums between a stage prediction and its
/// target maps; shapes must match exactly.
std::pair<TensorPtr, TensorPtr> stage_loss(Graph& g, const StageOutput& pred,
                                           const TensorPtr& target_heatmaps,
                                           const TensorPtr& target_pafs,
                                           const std::string& name);

/// Sum over every stage of (heatmap loss + field loss) against one shared
/// target. Throws config_error on an empty stage list. Fills per-stage
/// entries of `bd` when given.
TensorPtr pose_loss(Graph& g, const std::vector<StageOutput>& stages,
                    const TensorPtr& target_heatmaps,
                    const TensorPtr& target_pafs, LossBreakdown* bd = nullptr);

/// Mean binary cross-entropy of domain probabilities against {0,1} labels
/// (1 = real-style domain). Labels outside {0,1} throw config_error.
TensorPtr domain_loss(Graph& g, const TensorPtr& probs,
                      const std::vector<float>& labels);

/// Adversarial trade-off weight: lambda_p = 2 Lambda / (1 + exp(-10 p)) - Lambda.
/// Rises smoothly from 0 at p=0 toward Lambda as training progresses.
double lambda_schedule(double p, double Lambda = 100.0);

/// Joint objective pose + lambda * domain. With the gradient-reversal layer
/// in front of the domain head this single minimization realizes the
/// feature-confusion min-max. lambda = 0 returns the pose node itself.
TensorPtr ada_objective(Graph& g, const TensorPtr& pose,
                        const TensorPtr& domain, float lambda);

struct DistillConfig {
  int tau = 1;          // how many final stages imitate the teacher
  float alpha = 0.5f;   // weight of the ground-truth term
  float gamma = 1.0f;   // weight of the feature-hint term
  bool use_hints = false;
};

/// (1-alpha) * sum over the tau last stages of squared distance to the
/// teacher's corresponding stage maps, + alpha * pose loss on ground truth,
/// + gamma * squared feature distance when hints are enabled. Teacher
/// activations act as constants: no gradient reaches them. Stages are
/// matched from the end (student stage T-s to teacher stage T'-s); tau must
/// not exceed either cascade. Hint shapes must match.
TensorPtr distill_loss(Graph& g, const std::vector<StageOutput>& student,
                       const std::vector<StageOutput>& teacher,
                       const TensorPtr& target_heatmaps,
                       const TensorPtr& target_pafs, const DistillConfig& cfg,
                       const TensorPtr& student_features = nullptr,
                       const TensorPtr& teacher_features = nullptr,
                       LossBreakdown* bd = nullptr);

/// Constant copy of a tensor: same shape and values, no gradient history.
TensorPtr detach(const TensorPtr& t);

}  // namespace pm
