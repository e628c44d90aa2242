#include "kernels.hpp"

#include <cstring>
#include <vector>

namespace sws::kernels {

namespace {

// 16-byte vectors; each lane is an independent output element, so the
// per-element accumulation order is the plain ascending-k loop.
template <class T>
struct Lanes;
template <>
struct Lanes<float> {
    typedef float type __attribute__((vector_size(16)));
};
template <>
struct Lanes<double> {
    typedef double type __attribute__((vector_size(16)));
};

constexpr std::size_t kRows = 4;

template <class T>
using vec_t = typename Lanes<T>::type;

template <class T>
constexpr std::size_t kLanes = sizeof(vec_t<T>) / sizeof(T);

template <class T>
inline vec_t<T> load(const T* p) {
    vec_t<T> v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <class T>
inline void store(T* p, vec_t<T> v) {
    std::memcpy(p, &v, sizeof v);
}

// R rows by two vectors of columns.
template <class T, std::size_t R>
inline void tile(std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
    constexpr std::size_t L = kLanes<T>;
    vec_t<T> acc0[R], acc1[R];
    for (std::size_t r = 0; r < R; ++r) {
        acc0[r] = vec_t<T>{};
        acc1[r] = vec_t<T>{};
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
        const vec_t<T> b0 = load(b + kk * n), b1 = load(b + kk * n + L);
        for (std::size_t r = 0; r < R; ++r) {
            const T av = a[r * k + kk];
            acc0[r] += b0 * av;
            acc1[r] += b1 * av;
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        T* crow = c + r * n;
        if (accumulate) {
            acc0[r] = load(crow) + acc0[r];
            acc1[r] = load(crow + L) + acc1[r];
        }
        store(crow, acc0[r]);
        store(crow + L, acc1[r]);
    }
}

template <class T, std::size_t R>
inline void row_block(std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
    constexpr std::size_t W = 2 * kLanes<T>;
    std::size_t j = 0;
    for (; j + W <= n; j += W) tile<T, R>(k, n, a, b + j, c + j, accumulate);
    for (; j < n; ++j) {
        for (std::size_t r = 0; r < R; ++r) {
            T s = T(0);
            for (std::size_t kk = 0; kk < k; ++kk) s += a[r * k + kk] * b[kk * n + j];
            c[r * n + j] = accumulate ? c[r * n + j] + s : s;
        }
    }
}

template <class T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src) {
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t q = 0; q < cols; ++q) out[q * rows + r] = src[r * cols + q];
    return out;
}

}  // namespace

template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
    std::size_t i = 0;
    for (; i + kRows <= m; i += kRows) row_block<T, kRows>(k, n, a + i * k, b, c + i * n, accumulate);
    for (; i < m; ++i) row_block<T, 1>(k, n, a + i * k, b, c + i * n, accumulate);
}

template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
    const auto bt = transpose(n, k, b);
    gemm_nn(m, k, n, a, bt.data(), c, accumulate);
}

template <class T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* d, T* c) {
    const auto at = transpose(m, k, a);
    gemm_nn(k, m, n, at.data(), d, c, true);
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_tn_acc<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn_acc<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

}  // namespace sws::kernels
