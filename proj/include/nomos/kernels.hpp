#pragma once

#include <cstddef>

namespace nomos::kernels {

// Dense row-major matrix products. With `accumulate` false the output is
// overwritten, otherwise added to.
//
//   gemm_nn: C[M,N] (+)= A[M,K]   * B[K,N]
//   gemm_nt: C[M,N] (+)= A[M,K]   * B[N,K]^T
//   gemm_tn: C[M,N] (+)= A[K,M]^T * B[K,N]
//
// Every output element is accumulated over k in ascending order by the same
// inner routine in both variants, so serial and OpenMP results are
// bit-identical for any thread count.

namespace serial {
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
}  // namespace serial

namespace omp {
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
}  // namespace omp

/// Kernels used by the model. Route to the OpenMP variants.
template <class T>
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                    bool accumulate = false) {
    omp::gemm_nn(m, n, k, a, b, c, accumulate);
}
template <class T>
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                    bool accumulate = false) {
    omp::gemm_nt(m, n, k, a, b, c, accumulate);
}
template <class T>
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                    bool accumulate = false) {
    omp::gemm_tn(m, n, k, a, b, c, accumulate);
}

namespace detail {

/// Fixed-order dot product with eight partial sums.
template <class T>
inline T dot(const T* a, const T* b, std::size_t n) noexcept {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int u = 0; u < 8; ++u) acc[u] += a[i + u] * b[i + u];
    }
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail
}  // namespace nomos::kernels
