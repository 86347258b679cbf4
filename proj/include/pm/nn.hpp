#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pm/graph.hpp"
#include "pm/ops.hpp"
#include "pm/tensor.hpp"

namespace pm {

/// Named parameter registry for a model. Trainable entries are weights the
/// optimizer updates; non-trainable entries are buffers (batch-norm running
/// statistics) that checkpoints persist but the optimizer ignores.
struct ParamEntry {
  std::string name;
  TensorPtr tensor;
  bool trainable = true;
};

class ParamStore {
 public:
  TensorPtr add(const std::string& name, TensorPtr t, bool trainable = true);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  TensorPtr find(const std::string& name) const;
  int64_t trainable_count() const;
  /// Registers every trainable entry on a graph's parameter registry.
  void attach(Graph& g) const;

 private:
  std::vector<ParamEntry> entries_;
};

struct SgdConfig {
  float lr = 1e-3f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
};

/// SGD with momentum and decoupled-from-nothing classic L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// step() zeroes gradients afterwards.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ParamEntry> params, SgdConfig cfg);
  void step();
  void set_lr(float lr) { cfg_.lr = lr; }
  float lr() const { return cfg_.lr; }

 private:
  std::vector<ParamEntry> params_;
  std::vector<std::vector<float>> velocity_;
  SgdConfig cfg_;
};

/// Kaiming-normal fill: stddev sqrt(2 / fan_in).
void kaiming_fill(Tensor& t, int fan_in, std::mt19937_64& rng);

// ---- composable forward blocks ----

struct Block {
  virtual ~Block() = default;
  virtual TensorPtr forward(Graph& g, const TensorPtr& x, bool training) = 0;
};

using BlockPtr = std::unique_ptr<Block>;

class Seq : public Block {
 public:
  void push(BlockPtr b) { blocks_.push_back(std::move(b)); }
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;
  std::size_t size() const { return blocks_.size(); }

 private:
  std::vector<BlockPtr> blocks_;
};

/// Convolution with optional batch norm and optional ReLU. The final
/// map-prediction layers use bn=false, act=false (plain linear conv).
class ConvBlock : public Block {
 public:
  ConvBlock(ParamStore& ps, const std::string& name, int cin, int cout, int k,
            int stride, int pad, bool bn, bool act, std::mt19937_64& rng);
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;

 private:
  std::string name_;
  TensorPtr w_, b_, bn_gamma_, bn_beta_, bn_mean_, bn_var_;
  int stride_, pad_;
  bool bn_, act_;
};

/// Two 3x3 conv+bn layers with an identity shortcut; ReLU after the sum.
class ResidualBlock : public Block {
 public:
  ResidualBlock(ParamStore& ps, const std::string& name, int channels,
                std::mt19937_64& rng);
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;

 private:
  std::string name_;
  std::unique_ptr<ConvBlock> c1_, c2_;
};

/// Wraps any same-shape block with an identity shortcut; ReLU after the sum.
class ResidualWrap : public Block {
 public:
  ResidualWrap(std::string name, BlockPtr inner)
      : name_(std::move(name)), inner_(std::move(inner)) {}
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;

 private:
  std::string name_;
  BlockPtr inner_;
};

/// Squeeze 1x1 -> parallel expand 1x1 / expand 3x3 -> channel concat.
/// Requires squeeze < e1 + e3.
class FireModule : public Block {
 public:
  FireModule(ParamStore& ps, const std::string& name, int cin, int squeeze,
             int e1, int e3, std::mt19937_64& rng);
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;
  int out_channels() const { return out_channels_; }

 private:
  std::string name_;
  std::unique_ptr<ConvBlock> squeeze_, e1_, e3_;
  int out_channels_;
};

/// Depthwise 3x3 (+bn+relu) followed by pointwise 1x1 (+bn+relu).
/// Stride applies to the depthwise stage.
class DepthPoint : public Block {
 public:
  DepthPoint(ParamStore& ps, const std::string& name, int cin, int cout,
             int stride, std::mt19937_64& rng);
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;

 private:
  std::string name_;
  TensorPtr dw_w_, dw_b_, dw_gamma_, dw_beta_, dw_mean_, dw_var_;
  std::unique_ptr<ConvBlock> pw_;
  int stride_;
};

class AvgPoolBlock : public Block {
 public:
  explicit AvgPoolBlock(std::string name) : name_(std::move(name)) {}
  TensorPtr forward(Graph& g, const TensorPtr& x, bool training) override;

 private:
  std::string name_;
};

}  // namespace pm
