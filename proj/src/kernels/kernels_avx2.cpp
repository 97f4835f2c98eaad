#ifdef TCDR_HAVE_AVX2

#include "tcdrguard/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

// AVX2+FMA variants of the hot kernels. Compiled with -mavx2 -mfma in this
// translation unit only; the dispatcher never routes here unless CPUID
// reports both features.

namespace tcdr::kern::avx2 {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
}

inline double hsum256d(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// expf polynomial, same coefficients as the scalar reference.
inline __m256 exp256(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.0f);
    const __m256 lo = _mm256_set1_ps(-87.0f);
    const __m256 log2e = _mm256_set1_ps(1.442695040f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);

    __m256 big = _mm256_cmp_ps(x, hi, _CMP_GT_OQ);
    __m256 small = _mm256_cmp_ps(x, lo, _CMP_LT_OQ);
    x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);

    __m256 fx = _mm256_floor_ps(_mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f)));
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);

    __m256 z = _mm256_mul_ps(x, x);
    __m256 p = _mm256_set1_ps(1.9875691500e-4f);
    p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.3981999507e-3f));
    p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(8.3334519073e-3f));
    p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(4.1665795894e-2f));
    p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.6666665459e-1f));
    p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(5.0000001201e-1f));
    p = _mm256_fmadd_ps(p, z, _mm256_add_ps(x, _mm256_set1_ps(1.0f)));

    __m256i e = _mm256_cvtps_epi32(fx);
    e = _mm256_add_epi32(e, _mm256_set1_epi32(127));
    e = _mm256_slli_epi32(e, 23);
    p = _mm256_mul_ps(p, _mm256_castsi256_ps(e));

    p = _mm256_blendv_ps(p, _mm256_set1_ps(std::numeric_limits<float>::infinity()), big);
    p = _mm256_blendv_ps(p, _mm256_setzero_ps(), small);
    return p;
}

} // namespace

void matmul_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
    const size_t n16 = n & ~size_t(15);
    size_t i = 0;
    // 2-row by 16-column register tile, FMA over k with broadcast A.
    for (; i + 2 <= m; i += 2) {
        const float* a0 = a + i * k;
        const float* a1 = a0 + k;
        float* c0 = c + i * n;
        float* c1 = c0 + n;
        for (size_t j = 0; j < n16; j += 16) {
            __m256 acc00 = _mm256_loadu_ps(c0 + j);
            __m256 acc01 = _mm256_loadu_ps(c0 + j + 8);
            __m256 acc10 = _mm256_loadu_ps(c1 + j);
            __m256 acc11 = _mm256_loadu_ps(c1 + j + 8);
            for (size_t p = 0; p < k; ++p) {
                const __m256 b0 = _mm256_loadu_ps(b + p * n + j);
                const __m256 b1 = _mm256_loadu_ps(b + p * n + j + 8);
                const __m256 av0 = _mm256_set1_ps(a0[p]);
                const __m256 av1 = _mm256_set1_ps(a1[p]);
                acc00 = _mm256_fmadd_ps(av0, b0, acc00);
                acc01 = _mm256_fmadd_ps(av0, b1, acc01);
                acc10 = _mm256_fmadd_ps(av1, b0, acc10);
                acc11 = _mm256_fmadd_ps(av1, b1, acc11);
            }
            _mm256_storeu_ps(c0 + j, acc00);
            _mm256_storeu_ps(c0 + j + 8, acc01);
            _mm256_storeu_ps(c1 + j, acc10);
            _mm256_storeu_ps(c1 + j + 8, acc11);
        }
        for (size_t j = n16; j < n; ++j) {
            float s0 = c0[j], s1 = c1[j];
            for (size_t p = 0; p < k; ++p) {
                s0 += a0[p] * b[p * n + j];
                s1 += a1[p] * b[p * n + j];
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }
    for (; i < m; ++i) {
        const float* a0 = a + i * k;
        float* c0 = c + i * n;
        for (size_t j = 0; j < n16; j += 16) {
            __m256 acc0 = _mm256_loadu_ps(c0 + j);
            __m256 acc1 = _mm256_loadu_ps(c0 + j + 8);
            for (size_t p = 0; p < k; ++p) {
                const __m256 av = _mm256_set1_ps(a0[p]);
                acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + p * n + j), acc0);
                acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + p * n + j + 8), acc1);
            }
            _mm256_storeu_ps(c0 + j, acc0);
            _mm256_storeu_ps(c0 + j + 8, acc1);
        }
        for (size_t j = n16; j < n; ++j) {
            float s = c0[j];
            for (size_t p = 0; p < k; ++p) s += a0[p] * b[p * n + j];
            c0[j] = s;
        }
    }
}

float dot_f32(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float s = hsum256(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void matmul_nt_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const float d = dot_f32(arow, b + j * k, k);
            crow[j] = accumulate ? crow[j] + d : d;
        }
    }
}

void matmul_tn_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate) {
    if (!accumulate) std::memset(c, 0, k * n * sizeof(float));
    const size_t n8 = n & ~size_t(7);
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        const float* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const __m256 av = _mm256_set1_ps(arow[p]);
            float* crow = c + p * n;
            size_t j = 0;
            for (; j < n8; j += 8)
                _mm256_storeu_ps(crow + j,
                                 _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j),
                                                 _mm256_loadu_ps(crow + j)));
            for (; j < n; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

void axpy_f32(float alpha, const float* x, float* y, size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void exp_f32(const float* x, float* y, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, exp256(_mm256_loadu_ps(x + i)));
    if (i < n) {
        float tmp_in[8] = {0};
        float tmp_out[8];
        std::memcpy(tmp_in, x + i, (n - i) * sizeof(float));
        _mm256_storeu_ps(tmp_out, exp256(_mm256_loadu_ps(tmp_in)));
        std::memcpy(y + i, tmp_out, (n - i) * sizeof(float));
    }
}

void softmax_rows_f32(float* x, size_t rows, size_t cols, const float* bias) {
    const size_t c8 = cols & ~size_t(7);
    for (size_t r = 0; r < rows; ++r) {
        float* row = x + r * cols;
        const float* brow = bias ? bias + r * cols : nullptr;
        if (brow) {
            size_t j = 0;
            for (; j < c8; j += 8)
                _mm256_storeu_ps(row + j,
                                 _mm256_add_ps(_mm256_loadu_ps(row + j), _mm256_loadu_ps(brow + j)));
            for (; j < cols; ++j) row[j] += brow[j];
        }
        __m256 vmax = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
        size_t j = 0;
        for (; j < c8; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
        float mx = -std::numeric_limits<float>::infinity();
        {
            float lanes[8];
            _mm256_storeu_ps(lanes, vmax);
            for (float lv : lanes) mx = std::max(mx, lv);
        }
        for (; j < cols; ++j) mx = std::max(mx, row[j]);

        const __m256 vmx = _mm256_set1_ps(mx);
        __m256 vsum = _mm256_setzero_ps();
        j = 0;
        for (; j < c8; j += 8) {
            const __m256 e = exp256(_mm256_sub_ps(_mm256_loadu_ps(row + j), vmx));
            _mm256_storeu_ps(row + j, e);
            vsum = _mm256_add_ps(vsum, e);
        }
        float sum = hsum256(vsum);
        for (; j < cols; ++j) {
            float e[8], in[8] = {row[j] - mx};
            _mm256_storeu_ps(e, exp256(_mm256_loadu_ps(in)));
            row[j] = e[0];
            sum += e[0];
        }
        const __m256 vinv = _mm256_set1_ps(1.0f / sum);
        j = 0;
        for (; j < c8; j += 8)
            _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), vinv));
        for (; j < cols; ++j) row[j] *= 1.0f / sum;
    }
}

double dot_f64(const double* a, const double* b, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum256d(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_f64(const double* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum256d(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double sumsq_f64(const double* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum256d(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

} // namespace tcdr::kern::avx2

#endif // TCDR_HAVE_AVX2
