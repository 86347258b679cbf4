#include "pm/graph.hpp"

namespace pm {

void Graph::record(std::string name, TensorPtr output,
                   std::function<void()> backward_fn) {
  if (!recording_) return;
  nodes_.push_back(Node{std::move(name), std::move(output), std::move(backward_fn)});
}

void Graph::add_parameter(const std::string& name, const TensorPtr& p) {
  if (!p) throw config_error("null parameter '" + name + "'");
  for (const auto& [existing_name, existing] : params_) {
    if (existing_name == name) {
      if (existing.get() == p.get()) return;  // idempotent re-registration
      throw config_error("duplicate parameter name '" + name + "'");
    }
  }
  if (param_tensors_.count(p.get()))
    throw config_error("parameter registered twice under different names ('" +
                       name + "')");
  params_.emplace_back(name, p);
  param_tensors_.insert(p.get());
}

void Graph::backward(const TensorPtr& loss) {
  if (!loss) throw config_error("backward on null tensor");
  if (loss->numel() != 1)
    throw shape_error("backward requires a scalar loss, got shape " +
                      shape_str(loss->shape));
  if (nodes_.empty())
    throw config_error("backward called before any forward op was recorded");
  bool found = false;
  for (const auto& n : nodes_) {
    if (n.output.get() == loss.get()) {
      found = true;
      break;
    }
  }
  if (!found)
    throw config_error("backward target was not produced by this graph");

  // Intermediates restart from zero each backward pass; leaf/parameter
  // gradients accumulate across passes.
  for (auto& n : nodes_) {
    if (!param_tensors_.count(n.output.get())) {
      n.output->ensure_grad();
      n.output->zero_grad();
    }
  }
  loss->grad[0] = 1.f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward) it->backward();
  }
}

void Graph::clear() { nodes_.clear(); }

}  // namespace pm
