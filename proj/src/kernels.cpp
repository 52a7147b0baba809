#include "stylerl/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stylerl::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

#ifdef _OPENMP
std::atomic<bool> g_parallel{true};
#else
std::atomic<bool> g_parallel{false};
#endif

inline void softmax_row(std::size_t n, const double* in, double* out) {
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j)
        mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        total += out[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j)
        out[j] *= inv;
}

} // namespace

namespace serial {

void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
            const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        const double* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* g, std::size_t ldg, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        const double* grow = g + i * ldg;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * ldc;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += av * grow[j];
        }
    }
}

void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, std::size_t ldg,
               const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * ldg;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * ldb;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += grow[j] * brow[j];
            c[i * ldc + p] += s;
        }
    }
}

void softmax_rows(std::size_t m, std::size_t n, const double* in, double* out) {
    for (std::size_t i = 0; i < m; ++i)
        softmax_row(n, in + i * n, out + i * n);
}

} // namespace serial

namespace parallel {

void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
            const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    const bool big = m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * ldc;
        const double* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

// Rows of C are owned by one thread each; every element still sums over i
// in ascending order, matching the serial loop.
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* g, std::size_t ldg, double* c, std::size_t ldc) {
    const bool big = m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(k); ++pp) {
        const auto p = static_cast<std::size_t>(pp);
        double* crow = c + p * ldc;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[i * lda + p];
            const double* grow = g + i * ldg;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += av * grow[j];
        }
    }
}

void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, std::size_t ldg,
               const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    const bool big = m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* grow = g + i * ldg;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * ldb;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += grow[j] * brow[j];
            c[i * ldc + p] += s;
        }
    }
}

void softmax_rows(std::size_t m, std::size_t n, const double* in, double* out) {
    const bool big = m * n >= kParallelWork / 8;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        softmax_row(n, in + i * n, out + i * n);
    }
}

} // namespace parallel

void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
            const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    if (parallel_enabled())
        parallel::matmul(m, n, k, a, lda, b, ldb, c, ldc);
    else
        serial::matmul(m, n, k, a, lda, b, ldb, c, ldc);
}

void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* g, std::size_t ldg, double* c, std::size_t ldc) {
    if (parallel_enabled())
        parallel::matmul_tn(m, n, k, a, lda, g, ldg, c, ldc);
    else
        serial::matmul_tn(m, n, k, a, lda, g, ldg, c, ldc);
}

void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, std::size_t ldg,
               const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    if (parallel_enabled())
        parallel::matmul_nt(m, n, k, g, ldg, b, ldb, c, ldc);
    else
        serial::matmul_nt(m, n, k, g, ldg, b, ldb, c, ldc);
}

void softmax_rows(std::size_t m, std::size_t n, const double* in, double* out) {
    if (parallel_enabled())
        parallel::softmax_rows(m, n, in, out);
    else
        serial::softmax_rows(m, n, in, out);
}

} // namespace stylerl::kernels
