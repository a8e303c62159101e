#pragma once

// Small dense kernel for the scorer: row-major matrices over a scalar type and
// the handful of products the forward and backward passes need.

#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "l2c/error.hpp"

namespace l2c {

/// Named parameter storage; always double.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel(shape), 0.0) {}

    static std::size_t numel(const std::vector<int>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }
    std::size_t size() const { return data.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool operator==(const Tensor&) const = default;
};

template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), T(0)) {}

    T& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)]; }
    const T& operator()(int i, int j) const {
        return a[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
    }
    T* row(int i) { return a.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cols); }
    const T* row(int i) const { return a.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cols); }
};

/// A[k,n] * W[n,m] with W given as a raw row-major buffer.
template <class T>
Mat<T> matmul(const Mat<T>& A, const T* W, int m) {
    Mat<T> out(A.rows, m);
    for (int i = 0; i < A.rows; ++i) {
        T* o = out.row(i);
        const T* x = A.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const T xv = x[k];
            if (xv == T(0)) continue;
            const T* w = W + static_cast<std::size_t>(k) * static_cast<std::size_t>(m);
            for (int j = 0; j < m; ++j) o[j] += xv * w[j];
        }
    }
    return out;
}

/// G[k,m] * W^T where W is [n,m]; result [k,n].
template <class T>
Mat<T> matmul_wt(const Mat<T>& G, const T* W, int n) {
    Mat<T> out(G.rows, n);
    const int m = G.cols;
    for (int i = 0; i < G.rows; ++i) {
        const T* g = G.row(i);
        T* o = out.row(i);
        for (int k = 0; k < n; ++k) {
            const T* w = W + static_cast<std::size_t>(k) * static_cast<std::size_t>(m);
            T acc = 0;
            for (int j = 0; j < m; ++j) acc += g[j] * w[j];
            o[k] = acc;
        }
    }
    return out;
}

/// out[n,m] += A^T[n,k] * G[k,m].
template <class T>
void add_matmul_tn(const Mat<T>& A, const Mat<T>& G, T* out) {
    const int m = G.cols;
    for (int i = 0; i < A.rows; ++i) {
        const T* x = A.row(i);
        const T* g = G.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const T xv = x[k];
            if (xv == T(0)) continue;
            T* o = out + static_cast<std::size_t>(k) * static_cast<std::size_t>(m);
            for (int j = 0; j < m; ++j) o[j] += xv * g[j];
        }
    }
}

template <class T>
void add_bias(Mat<T>& A, const T* b) {
    for (int i = 0; i < A.rows; ++i) {
        T* r = A.row(i);
        for (int j = 0; j < A.cols; ++j) r[j] += b[j];
    }
}

template <class T>
void add_column_sums(const Mat<T>& G, T* out) {
    for (int i = 0; i < G.rows; ++i) {
        const T* g = G.row(i);
        for (int j = 0; j < G.cols; ++j) out[j] += g[j];
    }
}

template <class T>
Mat<T> relu(const Mat<T>& A) {
    Mat<T> out = A;
    for (auto& x : out.a) x = x > T(0) ? x : T(0);
    return out;
}

template <class T>
void add_inplace(Mat<T>& A, const Mat<T>& B) {
    for (std::size_t i = 0; i < A.a.size(); ++i) A.a[i] += B.a[i];
}

} // namespace l2c
