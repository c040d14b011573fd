#pragma once
// Small single-precision GEMM kernels used by the convolution ops.
//
// All matrices are dense row-major. Every output element is accumulated over
// the reduction index in ascending order (lane-split for the NT kernel, then
// folded in a fixed order), so results depend only on the operands and the
// compiled binary, never on scheduling.

#include <algorithm>
#include <cstddef>

namespace drn::detail {

/// C[M][N] += A[M][K] * B[K][N]
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C) {
    constexpr std::size_t MR = 4;
    constexpr std::size_t NR = 64;
    std::size_t i = 0;
    for (; i + MR <= M; i += MR) {
        const float* a0 = A + (i + 0) * K;
        const float* a1 = A + (i + 1) * K;
        const float* a2 = A + (i + 2) * K;
        const float* a3 = A + (i + 3) * K;
        std::size_t j = 0;
        for (; j + NR <= N; j += NR) {
            float acc[MR][NR];
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t l = 0; l < NR; ++l) acc[r][l] = C[(i + r) * N + j + l];
            for (std::size_t k = 0; k < K; ++k) {
                const float* b = B + k * N + j;
                const float w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
                for (std::size_t l = 0; l < NR; ++l) {
                    const float bv = b[l];
                    acc[0][l] += w0 * bv;
                    acc[1][l] += w1 * bv;
                    acc[2][l] += w2 * bv;
                    acc[3][l] += w3 * bv;
                }
            }
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t l = 0; l < NR; ++l) C[(i + r) * N + j + l] = acc[r][l];
        }
        if (j < N) {
            const std::size_t rem = N - j;
            for (std::size_t k = 0; k < K; ++k) {
                const float* b = B + k * N + j;
                const float w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
                float* c0 = C + (i + 0) * N + j;
                float* c1 = C + (i + 1) * N + j;
                float* c2 = C + (i + 2) * N + j;
                float* c3 = C + (i + 3) * N + j;
                for (std::size_t l = 0; l < rem; ++l) {
                    const float bv = b[l];
                    c0[l] += w0 * bv;
                    c1[l] += w1 * bv;
                    c2[l] += w2 * bv;
                    c3[l] += w3 * bv;
                }
            }
        }
    }
    for (; i < M; ++i) {
        const float* a = A + i * K;
        float* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const float w = a[k];
            const float* b = B + k * N;
            for (std::size_t l = 0; l < N; ++l) c[l] += w * b[l];
        }
    }
}

/// C[M][N] += A[M][K] * B[N][K]^T
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C) {
    constexpr std::size_t MR = 4;
    constexpr std::size_t NR = 4;
    constexpr std::size_t L = 16;
    const std::size_t kv = K - K % L;

    auto block = [&](std::size_t i, std::size_t j, std::size_t mr, std::size_t nr) {
        float acc[MR][NR][L] = {};
        for (std::size_t k = 0; k < kv; k += L) {
            for (std::size_t r = 0; r < mr; ++r) {
                const float* a = A + (i + r) * K + k;
                for (std::size_t s = 0; s < nr; ++s) {
                    const float* b = B + (j + s) * K + k;
                    for (std::size_t l = 0; l < L; ++l) acc[r][s][l] += a[l] * b[l];
                }
            }
        }
        for (std::size_t r = 0; r < mr; ++r) {
            for (std::size_t s = 0; s < nr; ++s) {
                float sum = 0.0f;
                for (std::size_t l = 0; l < L; ++l) sum += acc[r][s][l];
                const float* a = A + (i + r) * K;
                const float* b = B + (j + s) * K;
                for (std::size_t k = kv; k < K; ++k) sum += a[k] * b[k];
                C[(i + r) * N + j + s] += sum;
            }
        }
    };

    // Full 4x4 tiles get a dedicated instantiation of the loop bounds.
    auto full_block = [&](std::size_t i, std::size_t j) {
        float acc[MR][NR][L] = {};
        const float* a0 = A + (i + 0) * K;
        const float* a1 = A + (i + 1) * K;
        const float* a2 = A + (i + 2) * K;
        const float* a3 = A + (i + 3) * K;
        const float* b0 = B + (j + 0) * K;
        const float* b1 = B + (j + 1) * K;
        const float* b2 = B + (j + 2) * K;
        const float* b3 = B + (j + 3) * K;
        for (std::size_t k = 0; k < kv; k += L) {
            for (std::size_t l = 0; l < L; ++l) {
                const float x0 = a0[k + l], x1 = a1[k + l], x2 = a2[k + l], x3 = a3[k + l];
                const float y0 = b0[k + l], y1 = b1[k + l], y2 = b2[k + l], y3 = b3[k + l];
                acc[0][0][l] += x0 * y0; acc[0][1][l] += x0 * y1; acc[0][2][l] += x0 * y2; acc[0][3][l] += x0 * y3;
                acc[1][0][l] += x1 * y0; acc[1][1][l] += x1 * y1; acc[1][2][l] += x1 * y2; acc[1][3][l] += x1 * y3;
                acc[2][0][l] += x2 * y0; acc[2][1][l] += x2 * y1; acc[2][2][l] += x2 * y2; acc[2][3][l] += x2 * y3;
                acc[3][0][l] += x3 * y0; acc[3][1][l] += x3 * y1; acc[3][2][l] += x3 * y2; acc[3][3][l] += x3 * y3;
            }
        }
        for (std::size_t r = 0; r < MR; ++r) {
            for (std::size_t s = 0; s < NR; ++s) {
                float sum = 0.0f;
                for (std::size_t l = 0; l < L; ++l) sum += acc[r][s][l];
                const float* a = A + (i + r) * K;
                const float* b = B + (j + s) * K;
                for (std::size_t k = kv; k < K; ++k) sum += a[k] * b[k];
                C[(i + r) * N + j + s] += sum;
            }
        }
    };

    for (std::size_t i = 0; i < M; i += MR) {
        const std::size_t mr = std::min(MR, M - i);
        for (std::size_t j = 0; j < N; j += NR) {
            const std::size_t nr = std::min(NR, N - j);
            if (mr == MR && nr == NR)
                full_block(i, j);
            else
                block(i, j, mr, nr);
        }
    }
}

}  // namespace drn::detail
