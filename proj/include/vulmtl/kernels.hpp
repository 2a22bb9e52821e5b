#pragma once

#include <cstddef>

namespace vulmtl::kernels {

// Row-major dense matrix products. Each has a serial reference version and an
// OpenMP version partitioned over independent output rows; within a row the
// accumulation order is identical, so the two paths agree bit-for-bit and the
// parallel path stays deterministic under any thread count.
//
//   matmul    c[m x n] = a[m x k] * b[k x n]
//   matmul_nt c[m x n] = a[m x k] * b[n x k]^T
//   matmul_tn c[m x n] = a[k x m]^T * b[k x n]
//
// accumulate=true adds into c instead of overwriting it.

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

void matmul_serial(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate = false);
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate = false);

// Runtime switch for the OpenMP path (products below the flop threshold run
// serially anyway; spawning a team costs more than the multiply).
bool parallel_enabled();
void set_parallel(bool on);
std::size_t parallel_threshold();
int max_threads();

}  // namespace vulmtl::kernels
