#pragma once

#include <string>
#include <vector>

#include "pm/graph.hpp"
#include "pm/tensor.hpp"

namespace pm {

// Differentiable op vocabulary. Every op validates input shapes (throwing
// shape_error naming the node), computes eagerly, checks the output for
// non-finite values, and records a backward closure when the graph is
// recording and some input tracks gradients.

// ---- elementwise / structural ----
TensorPtr identity(Graph& g, const TensorPtr& x, const std::string& name);
TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b,
              const std::string& name);
TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b,
              const std::string& name);
TensorPtr scale(Graph& g, const TensorPtr& x, float k, const std::string& name);
TensorPtr add_const(Graph& g, const TensorPtr& x, float c, const std::string& name);
TensorPtr relu(Graph& g, const TensorPtr& x, const std::string& name);
TensorPtr sigmoid(Graph& g, const TensorPtr& x, const std::string& name);

/// Identity forward; backward multiplies incoming gradient by -scale.
TensorPtr grad_reverse(Graph& g, const TensorPtr& x, float scale,
                       const std::string& name);

/// Concatenate [N,C_i,H,W] tensors along the channel axis.
TensorPtr concat_channels(Graph& g, const std::vector<TensorPtr>& xs,
                          const std::string& name);

/// y = x[n0:n1] along axis 0.
TensorPtr slice_batch(Graph& g, const TensorPtr& x, int n0, int n1,
                      const std::string& name);

// ---- reductions (float64 accumulation, result carries acc64) ----
TensorPtr sum(Graph& g, const TensorPtr& x, const std::string& name);
/// sum((a - b)^2) over all elements; shapes must match.
TensorPtr l2_sum(Graph& g, const TensorPtr& a, const TensorPtr& b,
                 const std::string& name);
/// Binary cross-entropy, mean over batch. probs shape [N] (or [N,1]),
/// labels in {0,1}. Probabilities are clamped to [1e-7, 1-1e-7].
TensorPtr bce_mean(Graph& g, const TensorPtr& probs,
                   const std::vector<float>& labels, const std::string& name);
/// Sum of scalar tensors (each numel 1).
TensorPtr sum_scalars(Graph& g, const std::vector<TensorPtr>& xs,
                      const std::string& name);

// ---- layers ----
/// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout] (may be null for no bias).
TensorPtr conv2d(Graph& g, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b, int stride, int pad, const std::string& name);

/// Depthwise 3x3: x [N,C,H,W], w [C,1,3,3], b [C] (may be null).
TensorPtr depthwise3x3(Graph& g, const TensorPtr& x, const TensorPtr& w,
                       const TensorPtr& b, int stride, int pad,
                       const std::string& name);

/// 2x2 average pooling, stride 2 (floor semantics on odd extents).
TensorPtr avg_pool2(Graph& g, const TensorPtr& x, const std::string& name);

/// Global average pool over H,W: [N,C,H,W] -> [N,C].
TensorPtr global_avg_pool(Graph& g, const TensorPtr& x, const std::string& name);

/// x [N,D] (higher-rank inputs are flattened to [N,D]); w [out,D], b [out].
TensorPtr fully_connected(Graph& g, const TensorPtr& x, const TensorPtr& w,
                          const TensorPtr& b, const std::string& name);

/// Batch normalization over [N,C,H,W] (per channel) or [N,D] (per feature).
/// training=true uses batch statistics and updates running_mean/var in place;
/// training=false applies the stored running statistics (pure affine map).
TensorPtr batch_norm(Graph& g, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, const TensorPtr& running_mean,
                     const TensorPtr& running_var, bool training, float momentum,
                     float eps, const std::string& name);

}  // namespace pm
