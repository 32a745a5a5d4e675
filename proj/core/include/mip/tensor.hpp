#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace mip {

// Row-major float matrix. Storage is 32-bit; every reduction below
// accumulates in 64-bit so results are insensitive to summation tiling.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(size_t r, size_t c) {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    float at(size_t r, size_t c) const {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    float* row(size_t r) {
        assert(r < rows);
        return data.data() + r * cols;
    }
    const float* row(size_t r) const {
        assert(r < rows);
        return data.data() + r * cols;
    }
    size_t size() const { return data.size(); }
};

// dot(a, b) over n floats, accumulated in double.
inline double dot_f64(const float* a, const float* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

inline double dot_f64(const std::vector<float>& a, const std::vector<float>& b) {
    assert(a.size() == b.size());
    return dot_f64(a.data(), b.data(), a.size());
}

// y = x * W where x is a row vector of length W.rows; y has length W.cols.
inline void vec_mat(const float* x, const Matrix& w, float* y) {
    for (size_t c = 0; c < w.cols; ++c) {
        double acc = 0.0;
        for (size_t r = 0; r < w.rows; ++r)
            acc += static_cast<double>(x[r]) * static_cast<double>(w.at(r, c));
        y[c] = static_cast<float>(acc);
    }
}

// y = W * x where x has length W.cols; y has length W.rows.
inline void mat_vec(const Matrix& w, const float* x, float* y) {
    for (size_t r = 0; r < w.rows; ++r) y[r] = static_cast<float>(dot_f64(w.row(r), x, w.cols));
}

inline bool all_finite(const float* v, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

inline bool all_finite(const std::vector<float>& v) { return all_finite(v.data(), v.size()); }
inline bool all_finite(const Matrix& m) { return all_finite(m.data.data(), m.data.size()); }

inline double l2_norm(const float* v, size_t n) { return std::sqrt(dot_f64(v, v, n)); }
inline double l2_norm(const std::vector<float>& v) { return l2_norm(v.data(), v.size()); }

}  // namespace mip
