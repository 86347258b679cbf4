#include "pm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "pm/gemm.hpp"

namespace pm {
namespace {

bool want_grad(const Graph& g, std::initializer_list<TensorPtr> ins) {
  if (!g.recording()) return false;
  for (const auto& t : ins)
    if (t && t->requires_grad) return true;
  return false;
}

void require(bool cond, const std::string& node, const std::string& msg) {
  if (!cond) throw shape_error("node '" + node + "': " + msg);
}

void finish(Graph& g, const std::string& name, const TensorPtr& y, bool rec,
            std::function<void()> bw) {
  check_finite(*y, name);
  y->requires_grad = rec;
  if (rec) g.record(name, y, std::move(bw));
}

bool grads_into(const TensorPtr& t) {
  if (!t || !t->requires_grad) return false;
  t->ensure_grad();
  return true;
}

}  // namespace

TensorPtr identity(Graph& g, const TensorPtr& x, const std::string& name) {
  auto y = Tensor::create(x->shape);
  y->data = x->data;
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y] {
    if (!grads_into(x)) return;
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += y->grad[i];
  });
  return y;
}

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b,
              const std::string& name) {
  require(a->shape == b->shape, name,
          "shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto y = Tensor::create(a->shape);
  for (std::size_t i = 0; i < y->data.size(); ++i)
    y->data[i] = a->data[i] + b->data[i];
  if (a->numel() == 1 && (a->has_acc64 || b->has_acc64)) {
    y->acc64 = a->item64() + b->item64();
    y->has_acc64 = true;
  }
  bool rec = want_grad(g, {a, b});
  finish(g, name, y, rec, [a, b, y] {
    if (grads_into(a))
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += y->grad[i];
    if (grads_into(b))
      for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += y->grad[i];
  });
  return y;
}

TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b,
              const std::string& name) {
  require(a->shape == b->shape, name,
          "shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto y = Tensor::create(a->shape);
  for (std::size_t i = 0; i < y->data.size(); ++i)
    y->data[i] = a->data[i] * b->data[i];
  bool rec = want_grad(g, {a, b});
  finish(g, name, y, rec, [a, b, y] {
    if (grads_into(a))
      for (std::size_t i = 0; i < a->grad.size(); ++i)
        a->grad[i] += y->grad[i] * b->data[i];
    if (grads_into(b))
      for (std::size_t i = 0; i < b->grad.size(); ++i)
        b->grad[i] += y->grad[i] * a->data[i];
  });
  return y;
}

TensorPtr scale(Graph& g, const TensorPtr& x, float k, const std::string& name) {
  auto y = Tensor::create(x->shape);
  for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] = k * x->data[i];
  if (x->numel() == 1 && x->has_acc64) {
    y->acc64 = static_cast<double>(k) * x->acc64;
    y->has_acc64 = true;
  }
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y, k] {
    if (!grads_into(x)) return;
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += k * y->grad[i];
  });
  return y;
}

TensorPtr add_const(Graph& g, const TensorPtr& x, float c, const std::string& name) {
  auto y = Tensor::create(x->shape);
  for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] = x->data[i] + c;
  if (x->numel() == 1 && x->has_acc64) {
    y->acc64 = x->acc64 + static_cast<double>(c);
    y->has_acc64 = true;
  }
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y] {
    if (!grads_into(x)) return;
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += y->grad[i];
  });
  return y;
}

TensorPtr relu(Graph& g, const TensorPtr& x, const std::string& name) {
  auto y = Tensor::create(x->shape);
  for (std::size_t i = 0; i < y->data.size(); ++i)
    y->data[i] = x->data[i] > 0.f ? x->data[i] : 0.f;
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y] {
    if (!grads_into(x)) return;
    for (std::size_t i = 0; i < x->grad.size(); ++i)
      if (x->data[i] > 0.f) x->grad[i] += y->grad[i];
  });
  return y;
}

TensorPtr sigmoid(Graph& g, const TensorPtr& x, const std::string& name) {
  auto y = Tensor::create(x->shape);
  for (std::size_t i = 0; i < y->data.size(); ++i) {
    double v = x->data[i];
    double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
    y->data[i] = static_cast<float>(s);
  }
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y] {
    if (!grads_into(x)) return;
    for (std::size_t i = 0; i < x->grad.size(); ++i) {
      float s = y->data[i];
      x->grad[i] += y->grad[i] * s * (1.f - s);
    }
  });
  return y;
}

TensorPtr grad_reverse(Graph& g, const TensorPtr& x, float scale_,
                       const std::string& name) {
  auto y = Tensor::create(x->shape);
  y->data = x->data;
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y, scale_] {
    if (!grads_into(x)) return;
    for (std::size_t i = 0; i < x->grad.size(); ++i)
      x->grad[i] -= scale_ * y->grad[i];
  });
  return y;
}

TensorPtr concat_channels(Graph& g, const std::vector<TensorPtr>& xs,
                          const std::string& name) {
  require(!xs.empty(), name, "empty input list");
  const auto& first = xs.front();
  require(first->ndim() == 4, name,
          "expected rank-4 inputs, got " + shape_str(first->shape));
  int n = first->dim(0), h = first->dim(2), w = first->dim(3);
  int ctot = 0;
  for (const auto& x : xs) {
    require(x->ndim() == 4 && x->dim(0) == n && x->dim(2) == h && x->dim(3) == w,
            name, "incompatible input " + shape_str(x->shape));
    ctot += x->dim(1);
  }
  auto y = Tensor::create({n, ctot, h, w});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int bi = 0; bi < n; ++bi) {
    float* dst = y->data.data() + static_cast<int64_t>(bi) * ctot * hw;
    for (const auto& x : xs) {
      int64_t len = static_cast<int64_t>(x->dim(1)) * hw;
      const float* src = x->data.data() + static_cast<int64_t>(bi) * len;
      std::copy(src, src + len, dst);
      dst += len;
    }
  }
  bool rec = false;
  for (const auto& x : xs) rec = rec || want_grad(g, {x});
  finish(g, name, y, rec, [xs, y, n, ctot, hw] {
    for (int bi = 0; bi < n; ++bi) {
      const float* src = y->grad.data() + static_cast<int64_t>(bi) * ctot * hw;
      for (const auto& x : xs) {
        int64_t len = static_cast<int64_t>(x->shape[1]) * hw;
        if (grads_into(x)) {
          float* dst = x->grad.data() + static_cast<int64_t>(bi) * len;
          for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        src += len;
      }
    }
  });
  return y;
}

TensorPtr slice_batch(Graph& g, const TensorPtr& x, int n0, int n1,
                      const std::string& name) {
  require(x->ndim() >= 1, name, "rank-0 input");
  require(0 <= n0 && n0 < n1 && n1 <= x->dim(0), name,
          "invalid batch slice [" + std::to_string(n0) + "," + std::to_string(n1) +
              ") for " + shape_str(x->shape));
  std::vector<int> oshape = x->shape;
  oshape[0] = n1 - n0;
  int64_t row = x->numel() / x->dim(0);
  auto y = Tensor::create(oshape);
  std::copy(x->data.begin() + n0 * row, x->data.begin() + n1 * row,
            y->data.begin());
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y, n0, row] {
    if (!grads_into(x)) return;
    float* dst = x->grad.data() + n0 * row;
    for (std::size_t i = 0; i < y->grad.size(); ++i) dst[i] += y->grad[i];
  });
  return y;
}

namespace {

double lane_sum(const float* p, int64_t n, const float* q, bool squared_diff) {
  // q == nullptr: sum p; else sum (p-q)^2. Fixed 8-lane order.
  double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) {
      double v = squared_diff ? static_cast<double>(p[i + k]) - q[i + k]
                              : static_cast<double>(p[i + k]);
      lane[k] += squared_diff ? v * v : v;
    }
  }
  for (; i < n; ++i) {
    double v = squared_diff ? static_cast<double>(p[i]) - q[i]
                            : static_cast<double>(p[i]);
    lane[0] += squared_diff ? v * v : v;
  }
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

}  // namespace

TensorPtr sum(Graph& g, const TensorPtr& x, const std::string& name) {
  double s = lane_sum(x->data.data(), x->numel(), nullptr, false);
  auto y = Tensor::scalar(static_cast<float>(s));
  y->acc64 = s;
  y->has_acc64 = true;
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y] {
    if (!grads_into(x)) return;
    float gy = y->grad[0];
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += gy;
  });
  return y;
}

TensorPtr l2_sum(Graph& g, const TensorPtr& a, const TensorPtr& b,
                 const std::string& name) {
  require(a->shape == b->shape, name,
          "shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  double s = lane_sum(a->data.data(), a->numel(), b->data.data(), true);
  auto y = Tensor::scalar(static_cast<float>(s));
  y->acc64 = s;
  y->has_acc64 = true;
  bool rec = want_grad(g, {a, b});
  finish(g, name, y, rec, [a, b, y] {
    float gy = y->grad[0];
    if (grads_into(a))
      for (std::size_t i = 0; i < a->grad.size(); ++i)
        a->grad[i] += 2.f * (a->data[i] - b->data[i]) * gy;
    if (grads_into(b))
      for (std::size_t i = 0; i < b->grad.size(); ++i)
        b->grad[i] -= 2.f * (a->data[i] - b->data[i]) * gy;
  });
  return y;
}

TensorPtr bce_mean(Graph& g, const TensorPtr& probs,
                   const std::vector<float>& labels, const std::string& name) {
  int64_t n = probs->numel();
  require(probs->ndim() <= 2 && (probs->ndim() < 2 || probs->dim(1) == 1), name,
          "expected shape [N] or [N,1], got " + shape_str(probs->shape));
  require(n == static_cast<int64_t>(labels.size()), name,
          "label count does not match batch");
  for (float l : labels)
    require(l == 0.f || l == 1.f, name, "labels must be 0 or 1");
  constexpr double kEps = 1e-7;
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double p = std::clamp(static_cast<double>(probs->data[i]), kEps, 1.0 - kEps);
    double yl = labels[i];
    acc += -(yl * std::log(p) + (1.0 - yl) * std::log(1.0 - p));
  }
  acc /= static_cast<double>(n);
  auto y = Tensor::scalar(static_cast<float>(acc));
  y->acc64 = acc;
  y->has_acc64 = true;
  bool rec = want_grad(g, {probs});
  auto lab = labels;
  finish(g, name, y, rec, [probs, y, lab, n] {
    if (!grads_into(probs)) return;
    float gy = y->grad[0];
    for (int64_t i = 0; i < n; ++i) {
      double p = probs->data[i];
      if (p <= 1e-7 || p >= 1.0 - 1e-7) continue;  // clamped region: flat
      double d = (p - lab[i]) / (p * (1.0 - p)) / static_cast<double>(n);
      probs->grad[i] += gy * static_cast<float>(d);
    }
  });
  return y;
}

TensorPtr sum_scalars(Graph& g, const std::vector<TensorPtr>& xs,
                      const std::string& name) {
  require(!xs.empty(), name, "empty input list");
  double acc = 0.0;
  for (const auto& x : xs) {
    require(x->numel() == 1, name, "input not scalar: " + shape_str(x->shape));
    acc += x->item64();
  }
  auto y = Tensor::scalar(static_cast<float>(acc));
  y->acc64 = acc;
  y->has_acc64 = true;
  bool rec = false;
  for (const auto& x : xs) rec = rec || want_grad(g, {x});
  finish(g, name, y, rec, [xs, y] {
    for (const auto& x : xs)
      if (grads_into(x)) x->grad[0] += y->grad[0];
  });
  return y;
}

TensorPtr global_avg_pool(Graph& g, const TensorPtr& x, const std::string& name) {
  require(x->ndim() == 4, name, "expected rank-4 input, got " + shape_str(x->shape));
  int n = x->dim(0), c = x->dim(1);
  int64_t hw = static_cast<int64_t>(x->dim(2)) * x->dim(3);
  auto y = Tensor::create({n, c});
  for (int i = 0; i < n * c; ++i) {
    const float* p = x->data.data() + static_cast<int64_t>(i) * hw;
    double s = lane_sum(p, hw, nullptr, false);
    y->data[static_cast<std::size_t>(i)] =
        static_cast<float>(s / static_cast<double>(hw));
  }
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y, n, c, hw] {
    if (!grads_into(x)) return;
    float inv = 1.f / static_cast<float>(hw);
    for (int i = 0; i < n * c; ++i) {
      float gy = y->grad[static_cast<std::size_t>(i)] * inv;
      float* p = x->grad.data() + static_cast<int64_t>(i) * hw;
      for (int64_t j = 0; j < hw; ++j) p[j] += gy;
    }
  });
  return y;
}

TensorPtr fully_connected(Graph& g, const TensorPtr& x, const TensorPtr& w,
                          const TensorPtr& b, const std::string& name) {
  require(x->ndim() >= 2, name, "expected at least rank-2 input");
  int n = x->dim(0);
  int64_t d = x->numel() / n;
  require(w->ndim() == 2 && w->dim(1) == d, name,
          "weight shape " + shape_str(w->shape) + " does not match input width " +
              std::to_string(d));
  int out = w->dim(0);
  require(!b || (b->ndim() == 1 && b->dim(0) == out), name, "bad bias shape");
  auto y = Tensor::create({n, out});
  sgemm_nt(n, out, d, x->data.data(), w->data.data(), y->data.data(), false);
  if (b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) y->data[static_cast<std::size_t>(i) * out + j] += b->data[j];
  bool rec = want_grad(g, {x, w, b});
  finish(g, name, y, rec, [x, w, b, y, n, d, out] {
    if (grads_into(x))
      sgemm_nn(n, d, out, y->grad.data(), w->data.data(), x->grad.data(), true);
    if (grads_into(w)) {
      std::vector<float> gyt(static_cast<std::size_t>(n) * out);
      stranspose(n, out, y->grad.data(), gyt.data());
      sgemm_nn(out, d, n, gyt.data(), x->data.data(), w->grad.data(), true);
    }
    if (grads_into(b))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j)
          b->grad[j] += y->grad[static_cast<std::size_t>(i) * out + j];
  });
  return y;
}

}  // namespace pm
