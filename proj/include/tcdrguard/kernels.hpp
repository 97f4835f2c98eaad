#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the signal path (f64) and the model
// path (f32). Every kernel has a scalar reference implementation; hot ones
// additionally have AVX2+FMA variants selected at runtime from CPUID.
// Scalar and SIMD variants are equivalence-tested against each other.

namespace tcdr::kern {

enum class Isa { Scalar = 0, Avx2 = 1 };

// Highest ISA supported by the running CPU (and compiled in).
Isa detected_isa();

// Currently active ISA for dispatched kernels.
Isa active_isa();

// Force an ISA (e.g. Scalar for equivalence tests). Requesting an ISA the
// CPU cannot run falls back to the best supported one. Returns the ISA
// actually selected. Honors the TCDRGUARD_ISA environment variable
// ("scalar"/"avx2") on first use.
Isa force_isa(Isa isa);

const char* isa_name(Isa isa);

// ---- f32 kernels (model path) ----------------------------------------

// Row-major GEMM: C[m x n] = A[m x k] * B[k x n], optionally accumulating
// into C instead of overwriting it.
void matmul_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                bool accumulate = false);

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate = false);

// C[k x n] = A[m x k]^T * B[m x n]
void matmul_tn_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate = false);

float dot_f32(const float* a, const float* b, size_t n);

// y += alpha * x
void axpy_f32(float alpha, const float* x, float* y, size_t n);

// Elementwise exp; |rel err| < 3e-7 over the softmax-relevant range.
void exp_f32(const float* x, float* y, size_t n);

// In-place masked softmax over each row of x[rows x cols]. bias, if
// non-null, is added to the logits first (row-major, same shape; use
// large negative entries to mask).
void softmax_rows_f32(float* x, size_t rows, size_t cols, const float* bias = nullptr);

// ---- f64 kernels (signal path) ----------------------------------------

double dot_f64(const double* a, const double* b, size_t n);
double sum_f64(const double* x, size_t n);
double sumsq_f64(const double* x, size_t n);

} // namespace tcdr::kern
