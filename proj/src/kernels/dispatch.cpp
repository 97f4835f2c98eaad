#include "tcdrguard/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace tcdr::kern {

namespace scalar {
void matmul_f32(const float*, const float*, float*, size_t, size_t, size_t, bool);
void matmul_nt_f32(const float*, const float*, float*, size_t, size_t, size_t, bool);
void matmul_tn_f32(const float*, const float*, float*, size_t, size_t, size_t, bool);
float dot_f32(const float*, const float*, size_t);
void axpy_f32(float, const float*, float*, size_t);
void exp_f32(const float*, float*, size_t);
void softmax_rows_f32(float*, size_t, size_t, const float*);
double dot_f64(const double*, const double*, size_t);
double sum_f64(const double*, size_t);
double sumsq_f64(const double*, size_t);
} // namespace scalar

#ifdef TCDR_HAVE_AVX2
namespace avx2 {
void matmul_f32(const float*, const float*, float*, size_t, size_t, size_t, bool);
void matmul_nt_f32(const float*, const float*, float*, size_t, size_t, size_t, bool);
void matmul_tn_f32(const float*, const float*, float*, size_t, size_t, size_t, bool);
float dot_f32(const float*, const float*, size_t);
void axpy_f32(float, const float*, float*, size_t);
void exp_f32(const float*, float*, size_t);
void softmax_rows_f32(float*, size_t, size_t, const float*);
double dot_f64(const double*, const double*, size_t);
double sum_f64(const double*, size_t);
double sumsq_f64(const double*, size_t);
} // namespace avx2
#endif

namespace {

struct KernelTable {
    void (*matmul)(const float*, const float*, float*, size_t, size_t, size_t, bool);
    void (*matmul_nt)(const float*, const float*, float*, size_t, size_t, size_t, bool);
    void (*matmul_tn)(const float*, const float*, float*, size_t, size_t, size_t, bool);
    float (*dot32)(const float*, const float*, size_t);
    void (*axpy)(float, const float*, float*, size_t);
    void (*expv)(const float*, float*, size_t);
    void (*softmax)(float*, size_t, size_t, const float*);
    double (*dot64)(const double*, const double*, size_t);
    double (*sum64)(const double*, size_t);
    double (*sumsq64)(const double*, size_t);
};

constexpr KernelTable kScalarTable = {
    scalar::matmul_f32, scalar::matmul_nt_f32, scalar::matmul_tn_f32, scalar::dot_f32,
    scalar::axpy_f32,   scalar::exp_f32,       scalar::softmax_rows_f32,
    scalar::dot_f64,    scalar::sum_f64,       scalar::sumsq_f64,
};

#ifdef TCDR_HAVE_AVX2
constexpr KernelTable kAvx2Table = {
    avx2::matmul_f32, avx2::matmul_nt_f32, avx2::matmul_tn_f32, avx2::dot_f32,
    avx2::axpy_f32,   avx2::exp_f32,       avx2::softmax_rows_f32,
    avx2::dot_f64,    avx2::sum_f64,       avx2::sumsq_f64,
};
#endif

Isa detect() {
#ifdef TCDR_HAVE_AVX2
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
    return Isa::Scalar;
}

struct Dispatch {
    Isa isa;
    const KernelTable* table;

    Dispatch() {
        isa = detect();
        if (const char* env = std::getenv("TCDRGUARD_ISA")) {
            if (std::strcmp(env, "scalar") == 0) isa = Isa::Scalar;
            else if (std::strcmp(env, "avx2") == 0 && detect() == Isa::Avx2) isa = Isa::Avx2;
        }
        set(isa);
    }

    void set(Isa want) {
        if (want == Isa::Avx2 && detect() != Isa::Avx2) want = Isa::Scalar;
        isa = want;
#ifdef TCDR_HAVE_AVX2
        table = (isa == Isa::Avx2) ? &kAvx2Table : &kScalarTable;
#else
        table = &kScalarTable;
#endif
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

} // namespace

Isa detected_isa() { return detect(); }
Isa active_isa() { return dispatch().isa; }

Isa force_isa(Isa isa) {
    dispatch().set(isa);
    return dispatch().isa;
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void matmul_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                bool accumulate) {
    dispatch().table->matmul(a, b, c, m, k, n, accumulate);
}
void matmul_nt_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate) {
    dispatch().table->matmul_nt(a, b, c, m, k, n, accumulate);
}
void matmul_tn_f32(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
                   bool accumulate) {
    dispatch().table->matmul_tn(a, b, c, m, k, n, accumulate);
}
float dot_f32(const float* a, const float* b, size_t n) { return dispatch().table->dot32(a, b, n); }
void axpy_f32(float alpha, const float* x, float* y, size_t n) {
    dispatch().table->axpy(alpha, x, y, n);
}
void exp_f32(const float* x, float* y, size_t n) { dispatch().table->expv(x, y, n); }
void softmax_rows_f32(float* x, size_t rows, size_t cols, const float* bias) {
    dispatch().table->softmax(x, rows, cols, bias);
}
double dot_f64(const double* a, const double* b, size_t n) {
    return dispatch().table->dot64(a, b, n);
}
double sum_f64(const double* x, size_t n) { return dispatch().table->sum64(x, n); }
double sumsq_f64(const double* x, size_t n) { return dispatch().table->sumsq64(x, n); }

} // namespace tcdr::kern
