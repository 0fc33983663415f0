#include <algorithm>

#include "nomos/kernels.hpp"

namespace nomos::kernels::serial {

using detail::axpy;
using detail::dot;

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + p * n, c + i * n, n);
    }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const T v = dot(a + i * k, b + j * k, k);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) axpy(a[p * m + i], b + p * n, c + i * n, n);
    }
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                             float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                              double*, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                             float*, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                              double*, bool);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                             float*, bool);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                              double*, bool);

}  // namespace nomos::kernels::serial
