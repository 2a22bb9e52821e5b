#include "vulmtl/kernels.hpp"

#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vulmtl::kernels {

namespace {

std::atomic<bool> g_parallel{true};

constexpr std::size_t kParallelThreshold = 16384;  // m*k*n flops

bool use_parallel(std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) &&
         m * k * n >= kParallelThreshold && omp_get_max_threads() > 1;
#else
  (void)m;
  (void)k;
  (void)n;
  return false;
#endif
}

// One output row of c = a * b: c_row = sum_k a[row,k] * b[k,:].
inline void row_mm(const double* a, const double* b, double* c, std::size_t i,
                   std::size_t k, std::size_t n, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::memset(crow, 0, n * sizeof(double));
  const double* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    if (av == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// One output row of c = a * b^T: c[i,j] = dot(a_row_i, b_row_j).
inline void row_mm_nt(const double* a, const double* b, double* c,
                      std::size_t i, std::size_t k, std::size_t n,
                      bool accumulate) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    crow[j] = accumulate ? crow[j] + acc : acc;
  }
}

// One output row of c = a^T * b, a is [k x m]: c[i,j] = sum_p a[p,i]*b[p,j].
inline void row_mm_tn(const double* a, const double* b, double* c,
                      std::size_t i, std::size_t k, std::size_t m,
                      std::size_t n, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::memset(crow, 0, n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    if (av == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_mm(a, b, c, i, k, n, accumulate);
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_mm_nt(a, b, c, i, k, n, accumulate);
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_mm_tn(a, b, c, i, k, m, n, accumulate);
}

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m, k, n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
      row_mm(a, b, c, static_cast<std::size_t>(i), k, n, accumulate);
#endif
    return;
  }
  matmul_serial(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m, k, n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
      row_mm_nt(a, b, c, static_cast<std::size_t>(i), k, n, accumulate);
#endif
    return;
  }
  matmul_nt_serial(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m, k, n)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
      row_mm_tn(a, b, c, static_cast<std::size_t>(i), k, m, n, accumulate);
#endif
    return;
  }
  matmul_tn_serial(a, b, c, m, k, n, accumulate);
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

std::size_t parallel_threshold() { return kParallelThreshold; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace vulmtl::kernels
