#include "pm/gemm.hpp"

#include <algorithm>
#include <cstring>

// Single-threaded kernels tuned for one AVX core. Every accumulation order is
// fixed by the source (independent lanes, no reassociation), so results are
// bit-identical run to run.

namespace pm {
namespace {

constexpr int64_t kMR = 4;   // rows per register tile
constexpr int64_t kNR = 64;  // columns per register tile

// C tile [4, 64] (+)= A rows * B panel. B is addressed with leading dim ldb;
// the tile accumulator stays in registers across the whole K loop.
void kernel_4x64(int64_t K, const float* __restrict a0, const float* __restrict a1,
                 const float* __restrict a2, const float* __restrict a3,
                 const float* B, int64_t ldb, float* C, int64_t ldc,
                 bool accumulate) {
  float t0[kNR], t1[kNR], t2[kNR], t3[kNR];
  if (accumulate) {
    std::memcpy(t0, C, sizeof t0);
    std::memcpy(t1, C + ldc, sizeof t1);
    std::memcpy(t2, C + 2 * ldc, sizeof t2);
    std::memcpy(t3, C + 3 * ldc, sizeof t3);
  } else {
    std::memset(t0, 0, sizeof t0);
    std::memset(t1, 0, sizeof t1);
    std::memset(t2, 0, sizeof t2);
    std::memset(t3, 0, sizeof t3);
  }
  for (int64_t k = 0; k < K; ++k) {
    const float* __restrict b = B + k * ldb;
    float x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
    for (int64_t j = 0; j < kNR; ++j) {
      float bj = b[j];
      t0[j] += x0 * bj;
      t1[j] += x1 * bj;
      t2[j] += x2 * bj;
      t3[j] += x3 * bj;
    }
  }
  std::memcpy(C, t0, sizeof t0);
  std::memcpy(C + ldc, t1, sizeof t1);
  std::memcpy(C + 2 * ldc, t2, sizeof t2);
  std::memcpy(C + 3 * ldc, t3, sizeof t3);
}

void kernel_1x64(int64_t K, const float* __restrict a0, const float* B,
                 int64_t ldb, float* C, bool accumulate) {
  float t0[kNR];
  if (accumulate)
    std::memcpy(t0, C, sizeof t0);
  else
    std::memset(t0, 0, sizeof t0);
  for (int64_t k = 0; k < K; ++k) {
    const float* __restrict b = B + k * ldb;
    float x0 = a0[k];
    for (int64_t j = 0; j < kNR; ++j) t0[j] += x0 * b[j];
  }
  std::memcpy(C, t0, sizeof t0);
}

}  // namespace

void sgemm_nn(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
              float* C, bool accumulate) {
  int64_t j0 = 0;
  for (; j0 + kNR <= N; j0 += kNR) {
    int64_t i0 = 0;
    for (; i0 + kMR <= M; i0 += kMR) {
      kernel_4x64(K, A + i0 * K, A + (i0 + 1) * K, A + (i0 + 2) * K,
                  A + (i0 + 3) * K, B + j0, N, C + i0 * N + j0, N, accumulate);
    }
    for (; i0 < M; ++i0)
      kernel_1x64(K, A + i0 * K, B + j0, N, C + i0 * N + j0, accumulate);
  }
  if (j0 < N) {  // right edge, plain broadcast loop
    int64_t nr = N - j0;
    for (int64_t i = 0; i < M; ++i) {
      float* c = C + i * N + j0;
      if (!accumulate)
        for (int64_t j = 0; j < nr; ++j) c[j] = 0.f;
      const float* a = A + i * K;
      for (int64_t k = 0; k < K; ++k) {
        const float* b = B + k * N + j0;
        float x = a[k];
        for (int64_t j = 0; j < nr; ++j) c[j] += x * b[j];
      }
    }
  }
}

namespace {

constexpr int64_t kKB = 512;  // K block so A/B panels stay cache-resident
constexpr int64_t kNB = 8;    // B rows sharing one A vector load

// acc[n] += dot(A row m over this K block, B row n), eight B rows at a time.
// Dots run in 16 independent lanes, reduced pairwise at the end.
void dot_block_8(int64_t kb, const float* __restrict a, const float* const b[kNB],
                 float* __restrict out) {
  float lanes[kNB][16];
  std::memset(lanes, 0, sizeof lanes);
  int64_t k = 0;
  for (; k + 16 <= kb; k += 16) {
    for (int64_t n = 0; n < kNB; ++n) {
      const float* __restrict bn = b[n] + k;
      const float* __restrict ak = a + k;
      for (int l = 0; l < 16; ++l) lanes[n][l] += ak[l] * bn[l];
    }
  }
  for (; k < kb; ++k)
    for (int64_t n = 0; n < kNB; ++n) lanes[n][0] += a[k] * b[n][k];
  for (int64_t n = 0; n < kNB; ++n) {
    float* l = lanes[n];
    for (int w = 8; w >= 1; w /= 2)
      for (int i = 0; i < w; ++i) l[i] += l[i + w];
    out[n] += l[0];
  }
}

}  // namespace

void sgemm_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
              float* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, sizeof(float) * static_cast<size_t>(M * N));
  for (int64_t k0 = 0; k0 < K; k0 += kKB) {
    int64_t kb = std::min(kKB, K - k0);
    int64_t n0 = 0;
    for (; n0 + kNB <= N; n0 += kNB) {
      const float* b[kNB];
      for (int64_t n = 0; n < kNB; ++n) b[n] = B + (n0 + n) * K + k0;
      for (int64_t m = 0; m < M; ++m)
        dot_block_8(kb, A + m * K + k0, b, C + m * N + n0);
    }
    for (; n0 < N; ++n0) {  // trailing B rows
      const float* bn = B + n0 * K + k0;
      for (int64_t m = 0; m < M; ++m) {
        const float* a = A + m * K + k0;
        float lanes[16];
        std::memset(lanes, 0, sizeof lanes);
        int64_t k = 0;
        for (; k + 16 <= kb; k += 16)
          for (int l = 0; l < 16; ++l) lanes[l] += a[k + l] * bn[k + l];
        for (; k < kb; ++k) lanes[0] += a[k] * bn[k];
        for (int w = 8; w >= 1; w /= 2)
          for (int i = 0; i < w; ++i) lanes[i] += lanes[i + w];
        C[m * N + n0] += lanes[0];
      }
    }
  }
}

void stranspose(int64_t R, int64_t C, const float* src, float* dst) {
  constexpr int64_t kB = 32;
  for (int64_t r0 = 0; r0 < R; r0 += kB) {
    int64_t r1 = std::min(r0 + kB, R);
    for (int64_t c0 = 0; c0 < C; c0 += kB) {
      int64_t c1 = std::min(c0 + kB, C);
      for (int64_t r = r0; r < r1; ++r)
        for (int64_t c = c0; c < c1; ++c) dst[c * R + r] = src[r * C + c];
    }
  }
}

}  // namespace pm
