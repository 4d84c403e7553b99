#include "uniscale/nncore/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uniscale::nncore {

namespace {
int g_threads = 1;
}

void set_threads(int t) {
    g_threads = t < 1 ? 1 : t;
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

int threads() { return g_threads; }

void matmul_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_omp(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const size_t i = static_cast<size_t>(ii);
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    // Tiny matrices dominate this workload; threading them costs more than it saves.
    if (g_threads > 1 && m >= 64 && k * n >= 4096) {
        matmul_omp(a, b, c, m, k, n);
    } else {
        matmul_serial(a, b, c, m, k, n);
    }
}

}  // namespace uniscale::nncore
