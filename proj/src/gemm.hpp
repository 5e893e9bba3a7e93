#pragma once

// Small dense matrix kernels used by convolution and dense layers.
// Row-major; every output element of gemm_nn accumulates over k in
// ascending order regardless of blocking, which keeps results independent
// of how a computation is split into calls.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace seqcnn::detail {

template <class T>
inline constexpr std::size_t kLaneCount = 64 / sizeof(T);

template <class T>
struct Vec {
  typedef T type __attribute__((vector_size(64)));
};

// Register tile: MR rows by two vectors of columns of C in accumulators.
template <class T, std::size_t MR>
inline void tile_nn(std::size_t k, const T* __restrict a, std::size_t lda, const T* __restrict b,
                    std::size_t ldb, T* __restrict c, std::size_t ldc, bool accumulate) {
  using V = typename Vec<T>::type;
  constexpr std::size_t L = kLaneCount<T>;
  V acc[MR][2];
  for (std::size_t r = 0; r < MR; ++r) {
    if (accumulate) {
      __builtin_memcpy(&acc[r][0], c + r * ldc, sizeof(V));
      __builtin_memcpy(&acc[r][1], c + r * ldc + L, sizeof(V));
    } else {
      acc[r][0] = V{};
      acc[r][1] = V{};
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    V b0, b1;
    __builtin_memcpy(&b0, b + p * ldb, sizeof(V));
    __builtin_memcpy(&b1, b + p * ldb + L, sizeof(V));
    for (std::size_t r = 0; r < MR; ++r) {
      const T av = a[r * lda + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    __builtin_memcpy(c + r * ldc, &acc[r][0], sizeof(V));
    __builtin_memcpy(c + r * ldc + L, &acc[r][1], sizeof(V));
  }
}

// Edge tile with a runtime column count below NR.
template <class T, std::size_t MR>
inline void tile_nn_edge(std::size_t nr, std::size_t k, const T* a, std::size_t lda, const T* b,
                         std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  constexpr std::size_t kMax = 2 * kLaneCount<T>;
  T acc[MR][kMax];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < nr; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : T(0);
  for (std::size_t p = 0; p < k; ++p) {
    const T* bp = b + p * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const T av = a[r * lda + p];
      for (std::size_t j = 0; j < nr; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] = acc[r][j];
}

template <class T, std::size_t MR>
inline void row_block_nn(std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
                         std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  constexpr std::size_t NR = 2 * kLaneCount<T>;
  std::size_t j = 0;
  for (; j + NR <= n; j += NR) tile_nn<T, MR>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  if (j < n) tile_nn_edge<T, MR>(n - j, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
}

// C[M x N] (+)= A[M x K] * B[K x N]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  // Column panels keep the streamed slice of B cache-resident across row blocks.
  constexpr std::size_t kPanel = 256;
  for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
    const std::size_t jn = std::min(kPanel, n - j0);
    std::size_t i = 0;
    for (; i + 8 <= m; i += 8) {
      row_block_nn<T, 8>(jn, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate);
    }
    for (; i + 4 <= m; i += 4) {
      row_block_nn<T, 4>(jn, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate);
    }
    for (; i < m; ++i) {
      row_block_nn<T, 1>(jn, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate);
    }
  }
}

// dst[cols x rows] = src[rows x cols]^T
template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t lds, T* dst, std::size_t ldd) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t ie = std::min(rows, i0 + kBlock), je = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < ie; ++i)
        for (std::size_t j = j0; j < je; ++j) dst[j * ldd + i] = src[i * lds + j];
    }
  }
}

// 4x4 block of dot products with vector accumulators over k.
template <class T, std::size_t MR, std::size_t NR>
inline void tile_nt(std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                    std::size_t ldc, bool accumulate) {
  using V = typename Vec<T>::type;
  constexpr std::size_t L = kLaneCount<T>;
  V acc[MR][NR] = {};
  std::size_t p = 0;
  for (; p + L <= k; p += L) {
    V av[MR], bv[NR];
    for (std::size_t r = 0; r < MR; ++r) __builtin_memcpy(&av[r], a + r * lda + p, sizeof(V));
    for (std::size_t s = 0; s < NR; ++s) __builtin_memcpy(&bv[s], b + s * ldb + p, sizeof(V));
    for (std::size_t r = 0; r < MR; ++r)
      for (std::size_t s = 0; s < NR; ++s) acc[r][s] += av[r] * bv[s];
  }
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t s = 0; s < NR; ++s) {
      T v = 0;
      for (std::size_t l = 0; l < L; ++l) v += acc[r][s][l];
      for (std::size_t q = p; q < k; ++q) v += a[r * lda + q] * b[s * ldb + q];
      c[r * ldc + s] = accumulate ? c[r * ldc + s] + v : v;
    }
  }
}

// C[M x N] (+)= A[M x K] * B[N x K]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (k < 4 * kLaneCount<T> && m >= 4 && n >= 8) {
    std::vector<T> bt(k * n);
    transpose(n, k, b, ldb, bt.data(), n);
    gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc, accumulate);
    return;
  }
  // Slices of k keep the touched rows of A and B cache-resident.
  constexpr std::size_t kSlice = 512;
  for (std::size_t p0 = 0; p0 < k; p0 += kSlice) {
    const std::size_t kc = std::min(kSlice, k - p0);
    const bool acc = accumulate || p0 > 0;
    const T* ap = a + p0;
    const T* bp = b + p0;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4)
        tile_nt<T, 4, 4>(kc, ap + i * lda, lda, bp + j * ldb, ldb, c + i * ldc + j, ldc, acc);
      for (; j < n; ++j) tile_nt<T, 4, 1>(kc, ap + i * lda, lda, bp + j * ldb, ldb, c + i * ldc + j, ldc, acc);
    }
    for (; i < m; ++i) {
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4)
        tile_nt<T, 1, 4>(kc, ap + i * lda, lda, bp + j * ldb, ldb, c + i * ldc + j, ldc, acc);
      for (; j < n; ++j) tile_nt<T, 1, 1>(kc, ap + i * lda, lda, bp + j * ldb, ldb, c + i * ldc + j, ldc, acc);
    }
  }
}

// C[M x N] (+)= A[K x M]^T * B[K x N]
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  std::vector<T> at(m * k);
  transpose(k, m, a, lda, at.data(), k);
  gemm_nn(m, n, k, at.data(), k, b, ldb, c, ldc, accumulate);
}

}  // namespace seqcnn::detail
