// Times the serial reference kernels against the OpenMP versions and checks
// that both produce identical bits. Square and skinny shapes cover the
// attention and projection products the encoder actually issues.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "vulmtl/kernels.hpp"
#include "vulmtl/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Case {
  const char* name;
  std::size_t m, k, n;
};

void fill(std::vector<double>& v, vulmtl::DetRng& rng) {
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::max(1, std::atoi(argv[1]));

  const Case cases[] = {
      {"attn scores 512x64 * 64x512", 512, 64, 512},
      {"attn mix    512x512 * 512x64", 512, 512, 64},
      {"ffn up      512x64 * 64x256", 512, 64, 256},
      {"ffn down    512x256 * 256x64", 512, 256, 64},
      {"square      384x384 * 384x384", 384, 384, 384},
  };

  std::printf("threads available: %d, parallel threshold: %zu flops\n\n",
              vulmtl::kernels::max_threads(),
              vulmtl::kernels::parallel_threshold());
  std::printf("%-32s %10s %10s %8s %s\n", "case", "serial ms", "openmp ms",
              "speedup", "bit-equal");

  vulmtl::DetRng rng(12345);
  bool all_equal = true;
  for (const Case& c : cases) {
    std::vector<double> a(c.m * c.k), b(c.k * c.n);
    std::vector<double> out_serial(c.m * c.n), out_parallel(c.m * c.n);
    fill(a, rng);
    fill(b, rng);

    vulmtl::kernels::set_parallel(false);
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r)
      vulmtl::kernels::matmul(a.data(), b.data(), out_serial.data(), c.m, c.k,
                              c.n);
    const double serial_ms = seconds_since(t0) * 1000.0 / reps;

    vulmtl::kernels::set_parallel(true);
    t0 = Clock::now();
    for (int r = 0; r < reps; ++r)
      vulmtl::kernels::matmul(a.data(), b.data(), out_parallel.data(), c.m,
                              c.k, c.n);
    const double parallel_ms = seconds_since(t0) * 1000.0 / reps;

    const bool equal = std::memcmp(out_serial.data(), out_parallel.data(),
                                   out_serial.size() * sizeof(double)) == 0;
    all_equal = all_equal && equal;

    std::printf("%-32s %10.3f %10.3f %7.2fx %s\n", c.name, serial_ms,
                parallel_ms, serial_ms / parallel_ms, equal ? "yes" : "NO");
  }

  if (!all_equal) {
    std::printf("\nserial and parallel kernels disagree\n");
    return 1;
  }
  return 0;
}
