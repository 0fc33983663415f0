#include <algorithm>
#include <cstddef>

#include "nomos/kernels.hpp"

namespace nomos::kernels::omp {

using detail::axpy;
using detail::dot;

namespace {
// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelThreshold = 1u << 15;
}

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        T* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, T(0));
        for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + p * n, ci, n);
    }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const T v = dot(a + i * k, b + j * k, k);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        T* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, T(0));
        for (std::size_t p = 0; p < k; ++p) axpy(a[p * m + i], b + p * n, ci, n);
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

}  // namespace nomos::kernels::omp
