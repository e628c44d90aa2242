#pragma once

#include <cstddef>

namespace sws::kernels {

// Every output element is accumulated over k in ascending order starting
// from zero, independent of its row or column position. A sample's result
// therefore does not depend on what else is in the batch.

/// c (+)= a[m x k] * b[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate);

/// c (+)= a[m x k] * b[n x k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate);

/// c[k x n] += a[m x k]^T * d[m x n]
template <class T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* d, T* c);

}  // namespace sws::kernels
