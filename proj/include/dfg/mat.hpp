#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfg {

// Row-major dense matrix. In batch use, rows are samples.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    T& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    T* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(a.begin(), a.end(), v); }

    bool all_finite() const {
        for (T v : a)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> m(rows, cols);
        for (size_t i = 0; i < a.size(); ++i) m.a[i] = static_cast<U>(a[i]);
        return m;
    }
};

template <typename T>
Mat<T> transpose(const Mat<T>& m) {
    Mat<T> t(m.cols, m.rows);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

// y = x * wt, with wt already transposed to (in x out). Accumulation over k keeps
// the inner loop contiguous in both wt and y, which is what makes this vectorize.
template <typename T>
void matmul_acc(const Mat<T>& x, const Mat<T>& wt, Mat<T>& y) {
    if (x.cols != wt.rows)
        throw std::invalid_argument("matmul_acc: inner dimensions differ (" +
                                    std::to_string(x.cols) + " vs " + std::to_string(wt.rows) + ")");
    y = Mat<T>(x.rows, wt.cols);
    for (int n = 0; n < x.rows; ++n) {
        T* yr = y.row(n);
        const T* xr = x.row(n);
        for (int k = 0; k < x.cols; ++k) {
            const T xv = xr[k];
            const T* wr = wt.row(k);
            for (int o = 0; o < wt.cols; ++o) yr[o] += xv * wr[o];
        }
    }
}

template <typename T>
void add_row_inplace(Mat<T>& m, const std::vector<T>& v) {
    if (static_cast<int>(v.size()) != m.cols)
        throw std::invalid_argument("add_row_inplace: length mismatch");
    for (int r = 0; r < m.rows; ++r) {
        T* mr = m.row(r);
        for (int c = 0; c < m.cols; ++c) mr[c] += v[c];
    }
}

// m += s, padding s with trailing zeros when it is narrower than m.
template <typename T>
void add_padded_inplace(Mat<T>& m, const Mat<T>& s, const std::vector<T>& scale) {
    if (s.rows != m.rows || s.cols > m.cols)
        throw std::invalid_argument("add_padded_inplace: shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        T* mr = m.row(r);
        const T* sr = s.row(r);
        for (int c = 0; c < s.cols; ++c) mr[c] += scale[c] * sr[c];
    }
}

}  // namespace dfg
