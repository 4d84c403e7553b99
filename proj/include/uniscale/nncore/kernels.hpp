// Dense kernels, serial and OpenMP variants. The OpenMP variants split only
// the independent outer loop, so results are bit-identical to the serial
// reference for any thread count. The serial paths are kept both as the
// reference for the equivalence tests and as the small-problem fast path.
#pragma once

#include <cstddef>

namespace uniscale::nncore {

// Process-wide thread setting (1 = serial). Set once at startup from the CLI.
void set_threads(int threads);
int threads();

// C[m,n] = A[m,k] * B[k,n]. Row-major. Accumulation order over k is fixed.
void matmul_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
void matmul_omp(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
// Dispatches on the process-wide thread setting.
void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);

}  // namespace uniscale::nncore
