#pragma once

#include "tcdrguard/kernels.hpp"

#include <cassert>
#include <cstdint>
#include <vector>

namespace tcdr::model {

// Row-major float32 matrix; the only tensor type the model path needs.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0f) {}

    float* data() { return d.data(); }
    const float* data() const { return d.data(); }
    float* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }
    const float* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }
    float& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return d.size(); }
    void zero() { std::fill(d.begin(), d.end(), 0.0f); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// y[N x out] = x[N x in] * w[in x out] (+ bias broadcast over rows)
inline void linear_forward(const Mat& x, const Mat& w, const std::vector<float>& bias, Mat& y) {
    assert(x.cols == w.rows);
    y.rows = x.rows;
    y.cols = w.cols;
    y.d.resize(static_cast<size_t>(y.rows) * y.cols);
    kern::matmul_f32(x.data(), w.data(), y.data(), x.rows, x.cols, w.cols);
    if (!bias.empty())
        for (int r = 0; r < y.rows; ++r) {
            float* yr = y.row(r);
            for (int c = 0; c < y.cols; ++c) yr[c] += bias[c];
        }
}

// Gradients for the same layer. dw/db accumulate; dx overwrites. Pass a
// null db for bias-free layers.
inline void linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dx, Mat& dw,
                            std::vector<float>* db) {
    dx.rows = x.rows;
    dx.cols = x.cols;
    dx.d.resize(x.size());
    kern::matmul_nt_f32(dy.data(), w.data(), dx.data(), dy.rows, dy.cols, w.rows);
    kern::matmul_tn_f32(x.data(), dy.data(), dw.data(), x.rows, x.cols, dy.cols,
                        /*accumulate=*/true);
    if (db)
        for (int r = 0; r < dy.rows; ++r) {
            const float* dyr = dy.row(r);
            for (int c = 0; c < dy.cols; ++c) (*db)[c] += dyr[c];
        }
}

} // namespace tcdr::model
