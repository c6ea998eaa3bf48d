#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wfm/errors.hpp"
#include "wfm/tensor.hpp"

// Primitive math kernels. Pure functions over immutable inputs; safe to call
// concurrently. Raw-pointer variants write into caller-owned buffers so hot
// loops can reuse workspace; the Tensor wrappers allocate.

namespace wfm {

// y[m, o] = sum_i x[m, i] * W[o, i] (+ b[o]).  W is stored [Out, In] so both
// sides of the dot product are contiguous rows.
template <typename T>
void affine_rows(const T* x, std::size_t m_rows, std::size_t in_dim, const T* w,
                 std::size_t out_dim, const T* b, T* y) {
    for (std::size_t m = 0; m < m_rows; ++m) {
        const T* xrow = x + m * in_dim;
        T* yrow = y + m * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const T* wrow = w + o * in_dim;
            T acc = b ? b[o] : T(0);
            for (std::size_t i = 0; i < in_dim; ++i) acc += xrow[i] * wrow[i];
            yrow[o] = acc;
        }
    }
}

// Batched over all leading dims of x; last dim of x must equal W's inner dim.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr) {
    if (x.rank() < 1 || w.rank() != 2) {
        throw DimensionError("affine: x must have rank >= 1 and W rank 2, got x " +
                             x.shape_string() + ", W " + w.shape_string());
    }
    const std::size_t in_dim = x.dim(x.rank() - 1);
    const std::size_t out_dim = w.dim(0);
    if (w.dim(1) != in_dim) {
        throw DimensionError("affine: inner dimensions disagree, x " + x.shape_string() +
                             " vs W " + w.shape_string());
    }
    if (b && (b->rank() != 1 || b->dim(0) != out_dim)) {
        throw DimensionError("affine: bias shape " + b->shape_string() +
                             " does not match W " + w.shape_string());
    }
    std::vector<std::size_t> out_shape = x.shape();
    out_shape.back() = out_dim;
    Tensor<T> y(std::move(out_shape));
    affine_rows(x.data(), x.size() / in_dim, in_dim, w.data(), out_dim,
                b ? b->data() : nullptr, y.data());
    return y;
}

template <typename T>
void relu_inplace(T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    relu_inplace(y.data(), y.size());
    return y;
}

// Max-shifted softmax over one row of scores. Sums to 1 and survives |s| up
// to 1e4 without overflow. Internal arithmetic in the scalar type T.
template <typename T>
void stable_softmax_row(const T* scores, std::size_t k, T* probs) {
    if (k == 0) throw DimensionError("stable_softmax_row: empty input");
    T max_s = scores[0];
    for (std::size_t i = 1; i < k; ++i) max_s = std::max(max_s, scores[i]);
    T sum = T(0);
    for (std::size_t i = 0; i < k; ++i) {
        probs[i] = std::exp(scores[i] - max_s);
        sum += probs[i];
    }
    for (std::size_t i = 0; i < k; ++i) probs[i] /= sum;
}

template <typename T>
Tensor<T> stable_softmax_row(const Tensor<T>& scores) {
    if (scores.rank() != 1) {
        throw DimensionError("stable_softmax_row: expected rank-1 scores, got " +
                             scores.shape_string());
    }
    Tensor<T> p(scores.shape());
    stable_softmax_row(scores.data(), scores.size(), p.data());
    return p;
}

// Pairwise temporal max-pool over rows of an [N, D] block: output row j is the
// elementwise max of rows 2j and 2j+1; a trailing unpaired row passes through.
// When `route` is non-null it receives, per output element, the input row that
// won (ties go to the even row), which the backward pass uses for scatter.
template <typename T>
void maxpool_pairs_rows(const T* x, std::size_t n_rows, std::size_t d, T* y,
                        std::uint32_t* route = nullptr) {
    const std::size_t out_rows = (n_rows + 1) / 2;
    for (std::size_t j = 0; j < out_rows; ++j) {
        const std::size_t a = 2 * j;
        const std::size_t b = a + 1;
        T* yrow = y + j * d;
        const T* arow = x + a * d;
        if (b >= n_rows) {
            for (std::size_t k = 0; k < d; ++k) {
                yrow[k] = arow[k];
                if (route) route[j * d + k] = static_cast<std::uint32_t>(a);
            }
            continue;
        }
        const T* brow = x + b * d;
        for (std::size_t k = 0; k < d; ++k) {
            const bool b_wins = brow[k] > arow[k];
            yrow[k] = b_wins ? brow[k] : arow[k];
            if (route) route[j * d + k] = static_cast<std::uint32_t>(b_wins ? b : a);
        }
    }
}

template <typename T>
Tensor<T> maxpool_pairs(const Tensor<T>& x) {
    if (x.rank() != 2 || x.dim(0) == 0) {
        throw DimensionError("maxpool_pairs: expected non-empty [N, D], got " +
                             x.shape_string());
    }
    Tensor<T> y({(x.dim(0) + 1) / 2, x.dim(1)});
    maxpool_pairs_rows(x.data(), x.dim(0), x.dim(1), y.data());
    return y;
}

// Elementwise max over the row axis of an [N, D] block.
template <typename T>
void global_maxpool_rows(const T* x, std::size_t n_rows, std::size_t d, T* y,
                         std::uint32_t* route = nullptr) {
    for (std::size_t k = 0; k < d; ++k) {
        y[k] = x[k];
        if (route) route[k] = 0;
    }
    for (std::size_t n = 1; n < n_rows; ++n) {
        const T* row = x + n * d;
        for (std::size_t k = 0; k < d; ++k) {
            if (row[k] > y[k]) {
                y[k] = row[k];
                if (route) route[k] = static_cast<std::uint32_t>(n);
            }
        }
    }
}

template <typename T>
Tensor<T> global_maxpool(const Tensor<T>& x) {
    if (x.rank() != 2 || x.dim(0) == 0) {
        throw DimensionError("global_maxpool: expected non-empty [N, D], got " +
                             x.shape_string());
    }
    Tensor<T> y({x.dim(1)});
    global_maxpool_rows(x.data(), x.dim(0), x.dim(1), y.data());
    return y;
}

}  // namespace wfm
