#include "tcdrguard/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

// Scalar reference kernels. These define the semantics the SIMD variants
// are tested against. Loops are kept simple so they double as readable
// specifications of the arithmetic.

namespace tcdr::kern::scalar {

void matmul_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            float acc = 0.0f;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void matmul_tn_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate) {
    if (!accumulate) std::memset(c, 0, k * n * sizeof(float));
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        const float* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            float* crow = c + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

float dot_f32(const float* a, const float* b, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_f32(float alpha, const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Polynomial expf with 2^k range reduction, same coefficients as the AVX2
// variant so the two agree to rounding error.
float exp_one_f32(float x) {
    if (x > 88.0f) return std::numeric_limits<float>::infinity();
    if (x < -87.0f) return 0.0f;
    const float log2e = 1.442695040f;
    const float c1 = 0.693359375f;       // ln2 split, high part
    const float c2 = -2.12194440e-4f;    // ln2 split, low part
    float fx = std::floor(x * log2e + 0.5f);
    x -= fx * c1;
    x -= fx * c2;
    float z = x * x;
    float p = 1.9875691500e-4f;
    p = p * x + 1.3981999507e-3f;
    p = p * x + 8.3334519073e-3f;
    p = p * x + 4.1665795894e-2f;
    p = p * x + 1.6666665459e-1f;
    p = p * x + 5.0000001201e-1f;
    p = p * z + x + 1.0f;
    const int e = static_cast<int>(fx);
    const uint32_t bits = static_cast<uint32_t>(e + 127) << 23;
    float scale;
    std::memcpy(&scale, &bits, sizeof(float));
    return p * scale;
}

void exp_f32(const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = exp_one_f32(x[i]);
}

void softmax_rows_f32(float* x, size_t rows, size_t cols, const float* bias) {
    for (size_t r = 0; r < rows; ++r) {
        float* row = x + r * cols;
        const float* brow = bias ? bias + r * cols : nullptr;
        float mx = -std::numeric_limits<float>::infinity();
        for (size_t j = 0; j < cols; ++j) {
            if (brow) row[j] += brow[j];
            mx = std::max(mx, row[j]);
        }
        float sum = 0.0f;
        for (size_t j = 0; j < cols; ++j) {
            row[j] = exp_one_f32(row[j] - mx);
            sum += row[j];
        }
        const float inv = 1.0f / sum;
        for (size_t j = 0; j < cols; ++j) row[j] *= inv;
    }
}

double dot_f64(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_f64(const double* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sumsq_f64(const double* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

} // namespace tcdr::kern::scalar
