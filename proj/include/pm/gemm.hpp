#pragma once

#include <cstdint>

namespace pm {

/// C[M,N] (+)= A[M,K] * B[K,N]; row-major, contiguous.
void sgemm_nn(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
              float* C, bool accumulate);

/// C[M,N] (+)= A[M,K] * B[N,K]^T; row-major, contiguous.
void sgemm_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
              float* C, bool accumulate);

/// dst[C,R] = src[R,C]^T.
void stranspose(int64_t R, int64_t C, const float* src, float* dst);

}  // namespace pm
