#pragma once

#include <functional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pm/tensor.hpp"

namespace pm {

/// Dynamic reverse-mode tape. Ops execute eagerly and append one node each
/// (name, output tensor, backward closure). backward(loss):
///   * requires loss to be a scalar produced by a recorded op,
///   * zeroes the gradients of every recorded intermediate output,
///   * seeds d(loss)/d(loss) = 1 and replays closures newest-first.
/// Gradients of leaves/parameters are accumulated, never cleared here, so a
/// second backward over the same tape doubles them.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  void record(std::string name, TensorPtr output,
              std::function<void()> backward_fn);

  /// Registers a parameter (a leaf the optimizer owns). Names must be unique;
  /// re-adding the same tensor under the same name is a no-op.
  void add_parameter(const std::string& name, const TensorPtr& p);

  void backward(const TensorPtr& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::string name;
    TensorPtr output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, TensorPtr>> params_;
  std::unordered_set<const Tensor*> param_tensors_;
  bool recording_;
};

}  // namespace pm
