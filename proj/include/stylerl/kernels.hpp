#pragma once

// Dense row-major kernels behind the tensor ops.
//
// Each kernel exists twice: a plain serial loop nest kept as the reference,
// and an OpenMP version that splits the outermost independent dimension
// across threads. Every output element is accumulated in the same order by
// both versions, so their results are bit-identical and a training run does
// not depend on the thread count.

#include <cstddef>

namespace stylerl::kernels {

// Strided matrix views are described by (pointer, leading dimension).
// All products accumulate into C; callers zero C first when needed.

namespace serial {

// C[m,n] += A[m,k] * B[k,n]
void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
            const double* b, std::size_t ldb, double* c, std::size_t ldc);

// C[k,n] += A[m,k]^T * G[m,n]
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* g, std::size_t ldg, double* c, std::size_t ldc);

// C[m,k] += G[m,n] * B[k,n]^T
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, std::size_t ldg,
               const double* b, std::size_t ldb, double* c, std::size_t ldc);

// Numerically stable row-wise softmax of an [m,n] block; out may alias in.
void softmax_rows(std::size_t m, std::size_t n, const double* in, double* out);

} // namespace serial

namespace parallel {

void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
            const double* b, std::size_t ldb, double* c, std::size_t ldc);
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* g, std::size_t ldg, double* c, std::size_t ldc);
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, std::size_t ldg,
               const double* b, std::size_t ldb, double* c, std::size_t ldc);
void softmax_rows(std::size_t m, std::size_t n, const double* in, double* out);

} // namespace parallel

// Dispatching entry points used by the tensor ops. Parallel by default when
// built with OpenMP.
void set_parallel(bool enabled);
bool parallel_enabled();

void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
            const double* b, std::size_t ldb, double* c, std::size_t ldc);
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* g, std::size_t ldg, double* c, std::size_t ldc);
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, std::size_t ldg,
               const double* b, std::size_t ldb, double* c, std::size_t ldc);
void softmax_rows(std::size_t m, std::size_t n, const double* in, double* out);

} // namespace stylerl::kernels
