#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pm/data.hpp"
#include "pm/losses.hpp"
#include "pm/pose_net.hpp"

namespace pm {

// Training loops. One loop owns its model exclusively; everything is driven
// by (seed, config, data), so a rerun with the same three reproduces the
// final parameters bit for bit.

/// An in-memory dataset: samples plus a parallel domain tag per sample
/// (0 = synthetic/source style, 1 = real/target style).
struct Dataset {
  std::vector<Sample> samples;
  std::vector<int> domains;

  std::size_t size() const { return samples.size(); }
  /// Reads every sample a manifest lists; relative paths resolve against the
  /// manifest's directory.
  static Dataset load(const std::string& manifest_path);
};

/// Deterministically shuffles and splits off a validation fraction
/// (rounded to the nearest count, clamped to [0, size]).
std::pair<Dataset, Dataset> split_dataset(const Dataset& d,
                                          double val_fraction, uint64_t seed);

/// A model-ready batch: inputs [N,1,H,W] and supervision at 1/8 resolution.
struct Batch {
  TensorPtr x;
  TensorPtr heat;  // [N, J, H/8, W/8]
  TensorPtr paf;   // [N, 2C, H/8, W/8]
};

/// Stacks the given samples. All must share dimensions, and those must be
/// positive multiples of 8.
Batch make_batch(const Dataset& d, const std::vector<int>& idx, float sigma,
                 float limb_width);

struct TrainConfig {
  int batch_size = 10;
  int epochs = 1;
  int iters_per_epoch = 0;  // 0: ceil(train size / batch size)
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;

  // Learning-rate drop on a settled validation loss: no relative improvement
  // over `plateau_window` consecutive evaluations better than `plateau_rel`.
  float lr_drop = 10.f;
  int plateau_window = 5;
  double plateau_rel = 0.01;
  int eval_every = 0;  // iterations between evaluations; 0: each epoch end

  float sigma = 1.5f;
  float limb_width = 1.f;
  uint64_t seed = 0;
  std::string mode = "plain";  // plain | finetune | distill | ada

  bool augment = false;
  AugmentConfig augment_cfg;

  DistillConfig distill;  // distill mode only

  double lambda_cap = 100.0;    // ada: the schedule's asymptote
  int64_t lambda_horizon = 0;   // ada: schedule length T; 0: planned iters
};

/// Named budgets. "toy" variants are desk-sized; the "full-*" presets record
/// the reference budgets (13 synthetic epochs, 100 finetune epochs, 10
/// distillation epochs, 200k adaptation iterations).
TrainConfig train_preset(const std::string& name);

struct HistoryRow {
  int64_t iter = 0;
  std::string split;  // "train" or "val"
  // domain holds the domain loss on training rows; on adaptation validation
  // rows it holds the confusion rate instead.
  double pose = 0.0, domain = 0.0, teacher = 0.0, hints = 0.0, total = 0.0;
  double lambda = 0.0, lr = 0.0;
};

std::string history_csv(const std::vector<HistoryRow>& rows);
void save_history_csv(const std::string& path,
                      const std::vector<HistoryRow>& rows);

struct TrainResult {
  std::vector<HistoryRow> history;
  int64_t iterations = 0;
  double best_val = 0.0;  // best per-sample validation pose loss seen
  int lr_drops = 0;
  float final_lr = 0.f;
};

/// Mean per-sample pose loss over a dataset in evaluation mode.
double eval_pose_loss(PoseModel& model, const Dataset& data,
                      const TrainConfig& cfg);

/// Standard multi-stage supervision (modes "plain" and "finetune").
/// Aborts with numeric_error naming the iteration if the loss goes
/// non-finite. An empty validation set disables evaluations.
TrainResult train(PoseModel& model, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg);

/// Rebuilds the spec with `num_stages` stages (freshly seeded), then copies
/// every parameter the trained model shares by name, bit for bit.
std::unique_ptr<PoseModel> grow_stage(const PoseModel& trained, int num_stages,
                                      uint64_t seed);

/// Distillation (mode "distill"): the teacher runs in evaluation mode on the
/// same batch the student sees and contributes constants only.
TrainResult train_distill(PoseModel& student, PoseModel& teacher,
                          const Dataset& train_set, const Dataset& val_set,
                          const TrainConfig& cfg);

struct AdaResult {
  TrainResult train;
  double final_confusion = 0.0;   // on held-out mixed batches, at the end
  double best_confusion = 0.0;    // best seen at any evaluation
  double best_pose_val = 0.0;     // best source-validation pose loss
  // Checkpoints for the two selection rules, written when out_dir is given.
  std::string best_pose_checkpoint;
  std::string best_confusion_checkpoint;
};

/// Adversarial adaptation (mode "ada"). Each iteration forwards a source
/// half for pose supervision and a mixed source/target batch through a
/// gradient-reversed domain head; lambda follows lambda_schedule(t/T).
/// Confusion is evaluated on source_val plus target_val (the target training
/// set stands in when target_val is empty).
AdaResult train_ada(PoseModel& model, const Dataset& source,
                    const Dataset& target, const Dataset& source_val,
                    const Dataset& target_val, const TrainConfig& cfg,
                    const std::string& out_dir = "");

}  // namespace pm
