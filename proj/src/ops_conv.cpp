#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "pm/gemm.hpp"
#include "pm/ops.hpp"

namespace pm {
namespace {

void require(bool cond, const std::string& node, const std::string& msg) {
  if (!cond) throw shape_error("node '" + node + "': " + msg);
}

void finish(Graph& g, const std::string& name, const TensorPtr& y, bool rec,
            std::function<void()> bw) {
  check_finite(*y, name);
  y->requires_grad = rec;
  if (rec) g.record(name, y, std::move(bw));
}

bool want_grad(const Graph& g, std::initializer_list<TensorPtr> ins) {
  if (!g.recording()) return false;
  for (const auto& t : ins)
    if (t && t->requires_grad) return true;
  return false;
}

bool grads_into(const TensorPtr& t) {
  if (!t || !t->requires_grad) return false;
  t->ensure_grad();
  return true;
}

int out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// col[(c*kh+ky)*kw+kx, oy*Wo+ox] = x[c, oy*s-p+ky, ox*s-p+kx] (0 outside).
void im2col(const float* x, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, float* col) {
  for (int c = 0; c < C; ++c) {
    const float* xc = x + static_cast<int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* row = col + (static_cast<int64_t>((c * kh + ky) * kw + kx)) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride - pad + ky;
          float* dst = row + static_cast<int64_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, sizeof(float) * static_cast<size_t>(Wo));
            continue;
          }
          const float* xrow = xc + static_cast<int64_t>(iy) * W;
          if (stride == 1) {
            int ix0 = -pad + kx;  // input x at ox=0
            int lo = std::max(0, -ix0);
            int hi = std::min(Wo, W - ix0);
            if (lo > 0) std::memset(dst, 0, sizeof(float) * static_cast<size_t>(lo));
            if (hi > lo)
              std::memcpy(dst + lo, xrow + ix0 + lo,
                          sizeof(float) * static_cast<size_t>(hi - lo));
            if (hi < Wo)
              std::memset(dst + std::max(hi, lo), 0,
                          sizeof(float) * static_cast<size_t>(Wo - std::max(hi, lo)));
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < W) ? xrow[ix] : 0.f;
            }
          }
        }
      }
    }
  }
}

// Scatter-add of a col buffer back to image layout (adjoint of im2col).
void col2im_add(const float* col, int C, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, float* dx) {
  for (int c = 0; c < C; ++c) {
    float* xc = dx + static_cast<int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* row =
            col + (static_cast<int64_t>((c * kh + ky) * kw + kx)) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const float* src = row + static_cast<int64_t>(oy) * Wo;
          float* xrow = xc + static_cast<int64_t>(iy) * W;
          if (stride == 1) {
            int ix0 = -pad + kx;
            int lo = std::max(0, -ix0);
            int hi = std::min(Wo, W - ix0);
            for (int ox = lo; ox < hi; ++ox) xrow[ix0 + ox] += src[ox];
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) xrow[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

TensorPtr conv2d(Graph& g, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b, int stride, int pad, const std::string& name) {
  require(x->ndim() == 4, name, "input must be [N,C,H,W], got " + shape_str(x->shape));
  require(w->ndim() == 4, name, "weight must be [Cout,Cin,kh,kw], got " +
                                    shape_str(w->shape));
  require(stride >= 1 && pad >= 0, name, "invalid stride/pad");
  int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  int Cout = w->dim(0), kh = w->dim(2), kw = w->dim(3);
  require(w->dim(1) == C, name,
          "input has " + std::to_string(C) + " channels, weight expects " +
              std::to_string(w->dim(1)));
  require(!b || (b->ndim() == 1 && b->dim(0) == Cout), name, "bad bias shape");
  int Ho = out_extent(H, kh, stride, pad), Wo = out_extent(W, kw, stride, pad);
  require(Ho > 0 && Wo > 0, name, "output spatial size must be positive");

  int64_t CK = static_cast<int64_t>(C) * kh * kw;
  int64_t P = static_cast<int64_t>(Ho) * Wo;
  auto y = Tensor::create({N, Cout, Ho, Wo});
  {
    std::vector<float> col(static_cast<size_t>(CK * P));
    for (int n = 0; n < N; ++n) {
      const float* xn = x->data.data() + static_cast<int64_t>(n) * C * H * W;
      float* yn = y->data.data() + static_cast<int64_t>(n) * Cout * P;
      im2col(xn, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
      sgemm_nn(Cout, P, CK, w->data.data(), col.data(), yn, false);
      if (b) {
        for (int co = 0; co < Cout; ++co) {
          float bv = b->data[static_cast<std::size_t>(co)];
          float* row = yn + static_cast<int64_t>(co) * P;
          for (int64_t i = 0; i < P; ++i) row[i] += bv;
        }
      }
    }
  }

  bool rec = want_grad(g, {x, w, b});
  finish(g, name, y, rec, [x, w, b, y, N, C, H, W, Cout, kh, kw, stride, pad, Ho,
                           Wo, CK, P] {
    // The col buffer is rebuilt per sample rather than cached from the
    // forward pass: for wide-kernel layers it dwarfs the activations.
    std::vector<float> col(static_cast<size_t>(CK * P));
    std::vector<float> wt;
    if (grads_into(x)) {
      wt.resize(static_cast<size_t>(CK) * Cout);
      stranspose(Cout, CK, w->data.data(), wt.data());
    }
    std::vector<float> dcol(grads_into(x) ? static_cast<size_t>(CK * P) : 0);
    for (int n = 0; n < N; ++n) {
      const float* xn = x->data.data() + static_cast<int64_t>(n) * C * H * W;
      const float* gyn = y->grad.data() + static_cast<int64_t>(n) * Cout * P;
      if (grads_into(w) || grads_into(x))
        im2col(xn, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
      if (grads_into(w))
        sgemm_nt(Cout, CK, P, gyn, col.data(), w->grad.data(), true);
      if (grads_into(b)) {
        for (int co = 0; co < Cout; ++co) {
          const float* row = gyn + static_cast<int64_t>(co) * P;
          float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
          int64_t i = 0;
          for (; i + 8 <= P; i += 8)
            for (int k = 0; k < 8; ++k) lanes[k] += row[i + k];
          for (; i < P; ++i) lanes[0] += row[i];
          b->grad[static_cast<std::size_t>(co)] +=
              ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
        }
      }
      if (grads_into(x)) {
        sgemm_nn(CK, P, Cout, wt.data(), gyn, dcol.data(), false);
        col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                   x->grad.data() + static_cast<int64_t>(n) * C * H * W);
      }
    }
  });
  return y;
}

TensorPtr depthwise3x3(Graph& g, const TensorPtr& x, const TensorPtr& w,
                       const TensorPtr& b, int stride, int pad,
                       const std::string& name) {
  require(x->ndim() == 4, name, "input must be [N,C,H,W], got " + shape_str(x->shape));
  int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  require(w->ndim() == 4 && w->dim(0) == C && w->dim(1) == 1 && w->dim(2) == 3 &&
              w->dim(3) == 3,
          name, "weight must be [C,1,3,3] with C=" + std::to_string(C) + ", got " +
                    shape_str(w->shape));
  require(!b || (b->ndim() == 1 && b->dim(0) == C), name, "bad bias shape");
  require(stride >= 1 && pad >= 0, name, "invalid stride/pad");
  int Ho = out_extent(H, 3, stride, pad), Wo = out_extent(W, 3, stride, pad);
  require(Ho > 0 && Wo > 0, name, "output spatial size must be positive");

  auto y = Tensor::create({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* xc =
          x->data.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      const float* wc = w->data.data() + static_cast<int64_t>(c) * 9;
      float* yc = y->data.data() + (static_cast<int64_t>(n) * C + c) * Ho * Wo;
      float bv = b ? b->data[static_cast<std::size_t>(c)] : 0.f;
      for (int oy = 0; oy < Ho; ++oy) {
        float* yrow = yc + static_cast<int64_t>(oy) * Wo;
        for (int ox = 0; ox < Wo; ++ox) yrow[ox] = bv;
        for (int ky = 0; ky < 3; ++ky) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const float* xrow = xc + static_cast<int64_t>(iy) * W;
          for (int kx = 0; kx < 3; ++kx) {
            float wk = wc[ky * 3 + kx];
            int off = kx - pad;
            if (stride == 1) {
              int lo = std::max(0, -off), hi = std::min(Wo, W - off);
              for (int ox = lo; ox < hi; ++ox) yrow[ox] += wk * xrow[ox + off];
            } else {
              for (int ox = 0; ox < Wo; ++ox) {
                int ix = ox * stride + off;
                if (ix >= 0 && ix < W) yrow[ox] += wk * xrow[ix];
              }
            }
          }
        }
      }
    }
  }

  bool rec = want_grad(g, {x, w, b});
  finish(g, name, y, rec, [x, w, b, y, N, C, H, W, stride, pad, Ho, Wo] {
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const float* xc =
            x->data.data() + (static_cast<int64_t>(n) * C + c) * H * W;
        const float* gyc =
            y->grad.data() + (static_cast<int64_t>(n) * C + c) * Ho * Wo;
        const float* wc = w->data.data() + static_cast<int64_t>(c) * 9;
        for (int oy = 0; oy < Ho; ++oy) {
          const float* gyrow = gyc + static_cast<int64_t>(oy) * Wo;
          for (int ky = 0; ky < 3; ++ky) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < 3; ++kx) {
              int off = kx - pad;
              if (grads_into(w)) {
                const float* xrow = xc + static_cast<int64_t>(iy) * W;
                float acc = 0.f;
                for (int ox = 0; ox < Wo; ++ox) {
                  int ix = ox * stride + off;
                  if (ix >= 0 && ix < W) acc += gyrow[ox] * xrow[ix];
                }
                w->grad[static_cast<std::size_t>(c) * 9 + ky * 3 + kx] += acc;
              }
              if (grads_into(x)) {
                float wk = wc[ky * 3 + kx];
                float* gxrow = x->grad.data() +
                               (static_cast<int64_t>(n) * C + c) * H * W +
                               static_cast<int64_t>(iy) * W;
                for (int ox = 0; ox < Wo; ++ox) {
                  int ix = ox * stride + off;
                  if (ix >= 0 && ix < W) gxrow[ix] += wk * gyrow[ox];
                }
              }
            }
          }
        }
        if (grads_into(b)) {
          float acc = 0.f;
          for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i)
            acc += gyc[i];
          b->grad[static_cast<std::size_t>(c)] += acc;
        }
      }
    }
  });
  return y;
}

TensorPtr avg_pool2(Graph& g, const TensorPtr& x, const std::string& name) {
  require(x->ndim() == 4, name, "input must be [N,C,H,W], got " + shape_str(x->shape));
  int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  int Ho = H / 2, Wo = W / 2;
  require(Ho > 0 && Wo > 0, name, "output spatial size must be positive");
  auto y = Tensor::create({N, C, Ho, Wo});
  for (int nc = 0; nc < N * C; ++nc) {
    const float* xc = x->data.data() + static_cast<int64_t>(nc) * H * W;
    float* yc = y->data.data() + static_cast<int64_t>(nc) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
      const float* r0 = xc + static_cast<int64_t>(2 * oy) * W;
      const float* r1 = r0 + W;
      float* yrow = yc + static_cast<int64_t>(oy) * Wo;
      for (int ox = 0; ox < Wo; ++ox)
        yrow[ox] = 0.25f * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
    }
  }
  bool rec = want_grad(g, {x});
  finish(g, name, y, rec, [x, y, N, C, H, W, Ho, Wo] {
    if (!grads_into(x)) return;
    for (int nc = 0; nc < N * C; ++nc) {
      float* gxc = x->grad.data() + static_cast<int64_t>(nc) * H * W;
      const float* gyc = y->grad.data() + static_cast<int64_t>(nc) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy) {
        float* r0 = gxc + static_cast<int64_t>(2 * oy) * W;
        float* r1 = r0 + W;
        const float* gyrow = gyc + static_cast<int64_t>(oy) * Wo;
        for (int ox = 0; ox < Wo; ++ox) {
          float v = 0.25f * gyrow[ox];
          r0[2 * ox] += v;
          r0[2 * ox + 1] += v;
          r1[2 * ox] += v;
          r1[2 * ox + 1] += v;
        }
      }
    }
  });
  return y;
}

TensorPtr batch_norm(Graph& g, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, const TensorPtr& running_mean,
                     const TensorPtr& running_var, bool training, float momentum,
                     float eps, const std::string& name) {
  require(x->ndim() == 4 || x->ndim() == 2, name,
          "input must be [N,C,H,W] or [N,C], got " + shape_str(x->shape));
  int N = x->dim(0), C = x->dim(1);
  int64_t hw = x->ndim() == 4 ? static_cast<int64_t>(x->dim(2)) * x->dim(3) : 1;
  for (const auto& t : {gamma, beta, running_mean, running_var})
    require(t && t->ndim() == 1 && t->dim(0) == C, name,
            "per-channel tensors must have shape [" + std::to_string(C) + "]");
  int64_t cnt = static_cast<int64_t>(N) * hw;
  require(cnt > 0, name, "empty batch");

  auto y = Tensor::create(x->shape);
  auto mean = std::make_shared<std::vector<float>>(static_cast<std::size_t>(C));
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(C));

  // Captures by value: the backward closure outlives this stack frame.
  auto plane = [C, hw](const std::vector<float>& buf, int n, int c) {
    return buf.data() + (static_cast<int64_t>(n) * C + c) * hw;
  };

  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* p = plane(x->data, n, c);
        for (int64_t i = 0; i < hw; ++i) s += p[i];
      }
      double m = s / static_cast<double>(cnt);
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* p = plane(x->data, n, c);
        for (int64_t i = 0; i < hw; ++i) {
          double d = p[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(cnt);
      (*mean)[static_cast<std::size_t>(c)] = static_cast<float>(m);
      (*inv_std)[static_cast<std::size_t>(c)] =
          static_cast<float>(1.0 / std::sqrt(v + static_cast<double>(eps)));
      double unbiased =
          cnt > 1 ? v * static_cast<double>(cnt) / static_cast<double>(cnt - 1) : v;
      auto& rm = running_mean->data[static_cast<std::size_t>(c)];
      auto& rv = running_var->data[static_cast<std::size_t>(c)];
      rm = (1.f - momentum) * rm + momentum * static_cast<float>(m);
      rv = (1.f - momentum) * rv + momentum * static_cast<float>(unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[static_cast<std::size_t>(c)] =
          running_mean->data[static_cast<std::size_t>(c)];
      (*inv_std)[static_cast<std::size_t>(c)] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(
                              running_var->data[static_cast<std::size_t>(c)]) +
                          static_cast<double>(eps)));
    }
  }

  for (int c = 0; c < C; ++c) {
    float m = (*mean)[static_cast<std::size_t>(c)];
    float is = (*inv_std)[static_cast<std::size_t>(c)];
    float ga = gamma->data[static_cast<std::size_t>(c)];
    float be = beta->data[static_cast<std::size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const float* p = plane(x->data, n, c);
      float* q = const_cast<float*>(plane(y->data, n, c));
      for (int64_t i = 0; i < hw; ++i) q[i] = ga * (p[i] - m) * is + be;
    }
  }

  bool rec = want_grad(g, {x, gamma, beta});
  finish(g, name, y, rec,
         [x, gamma, beta, y, mean, inv_std, training, N, C, hw, cnt, plane] {
           for (int c = 0; c < C; ++c) {
             float m = (*mean)[static_cast<std::size_t>(c)];
             float is = (*inv_std)[static_cast<std::size_t>(c)];
             float ga = gamma->data[static_cast<std::size_t>(c)];
             double s1 = 0.0, s2 = 0.0;
             for (int n = 0; n < N; ++n) {
               const float* gy = plane(y->grad, n, c);
               const float* px = plane(x->data, n, c);
               for (int64_t i = 0; i < hw; ++i) {
                 s1 += gy[i];
                 s2 += static_cast<double>(gy[i]) * ((px[i] - m) * is);
               }
             }
             if (grads_into(beta))
               beta->grad[static_cast<std::size_t>(c)] += static_cast<float>(s1);
             if (grads_into(gamma))
               gamma->grad[static_cast<std::size_t>(c)] += static_cast<float>(s2);
             if (grads_into(x)) {
               float k1 = training ? static_cast<float>(s1 / static_cast<double>(cnt)) : 0.f;
               float k2 = training ? static_cast<float>(s2 / static_cast<double>(cnt)) : 0.f;
               for (int n = 0; n < N; ++n) {
                 const float* gy = plane(y->grad, n, c);
                 const float* px = plane(x->data, n, c);
                 float* gx = const_cast<float*>(plane(x->grad, n, c));
                 for (int64_t i = 0; i < hw; ++i) {
                   float xh = (px[i] - m) * is;
                   gx[i] += ga * is * (gy[i] - k1 - xh * k2);
                 }
               }
             }
           }
         });
  return y;
}

}  // namespace pm
