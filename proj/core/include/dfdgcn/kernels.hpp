#pragma once

// Pure tensor kernels. Every kernel validates shapes, never mutates its
// inputs and rejects non-finite results.

#include "dfdgcn/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dfdgcn::kernels {

// C (m x n) += alpha * op(A) * op(B), row-major, op = transpose when flagged.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double *a, const double *b, double *c);

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &m);

Tensor add(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double s);
Tensor relu(const Tensor &t);
Tensor sigmoid(const Tensor &t);
Tensor tanh(const Tensor &t);

/// Row-wise softmax of an N x M matrix, stabilized by row-max subtraction.
Tensor softmax_rows(const Tensor &m);

/// Concatenation along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor> &ts, std::size_t axis);

/// 1x1 convolution over the leading channel axis:
/// x [C_in, ...], w [C_out, C_in], b [C_out] (may be empty) -> [C_out, ...].
Tensor conv1x1(const Tensor &x, const Tensor &w, const Tensor &b);

/// Dilated causal convolution along the last axis.
/// x [C, ..., T], w [C_out, C, k], b [C_out] (may be empty) -> [C_out, ..., T - d(k-1)].
/// Output index t is aligned with input index t + d(k-1); tap j reads x[t + j*d].
Tensor dilated_causal_conv(const Tensor &x, const Tensor &w, const Tensor &b, std::size_t dilation);

/// Graph propagation: out[c, i, t] = sum_j a[i, j] * x[c, j, t] for x [C, N, T].
Tensor node_mix(const Tensor &a, const Tensor &x);

/// Zero-pads the last axis on the left up to `length`.
Tensor pad_left(const Tensor &x, std::size_t length);
/// Keeps the last `length` entries of the last axis.
Tensor crop_last(const Tensor &x, std::size_t length);

/// Rows of `table` [R, D] selected by `rows` -> [rows.size(), D].
Tensor gather_rows(const Tensor &table, std::span<const std::size_t> rows);
/// Tiles a [1, D] row into [n, D].
Tensor repeat_rows(const Tensor &row, std::size_t n);

double sum(const Tensor &t);

/// Circular shift of a 1-D signal by s steps: out[t] = x[(t - s) mod T].
std::vector<double> circular_shift(std::span<const double> x, long s);

} // namespace dfdgcn::kernels
