#pragma once

#include <vector>

#include "atgan/tensor.hpp"

namespace atgan {

/// Every op takes the tape as first argument; pass nullptr for a pure
/// forward pass (sampling, rollouts, evaluation). A backward rule is
/// recorded only when a tape is given and some input requires grad.

enum class EwKind { Sigmoid, Tanh, Relu, Add, Mul };
enum class BnMode { Train, Infer };

/// a[m x k] * b[k x n] -> [m x n]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

/// Unary elementwise map; kind must be Sigmoid, Tanh or Relu.
Tensor elementwise(Tape* tape, EwKind kind, const Tensor& x);
/// Binary elementwise map on shape-congruent operands; kind must be Add or Mul.
Tensor elementwise(Tape* tape, EwKind kind, const Tensor& a, const Tensor& b);

inline Tensor sigmoid(Tape* t, const Tensor& x) { return elementwise(t, EwKind::Sigmoid, x); }
inline Tensor tanh_ew(Tape* t, const Tensor& x) { return elementwise(t, EwKind::Tanh, x); }
inline Tensor relu(Tape* t, const Tensor& x) { return elementwise(t, EwKind::Relu, x); }
inline Tensor add(Tape* t, const Tensor& a, const Tensor& b) { return elementwise(t, EwKind::Add, a, b); }
inline Tensor mul(Tape* t, const Tensor& a, const Tensor& b) { return elementwise(t, EwKind::Mul, a, b); }

/// Row-wise softmax with max subtraction; rows sum to 1.
Tensor softmax_rows(Tape* tape, const Tensor& x);

/// Gathers rows of table[V x M] at ids -> [len(ids) x M]; backward scatter-adds.
Tensor embed_lookup(Tape* tape, const Tensor& table, const std::vector<int>& ids);

/// Full-width 1-D convolution over time: s[T x M] (*) kernel[C x M] + bias,
/// stride 1, no padding -> [T-C+1]. bias is a single-element tensor.
Tensor conv_time(Tape* tape, const Tensor& s, const Tensor& kernel, const Tensor& bias);

/// Maximum of a 1-D tensor -> scalar. Ties route the gradient to the lowest index.
Tensor max_over_time(Tape* tape, const Tensor& v);

/// Per-feature batch normalization of x[B x F] with gamma/beta [F].
/// Train mode normalizes by batch moments (biased variance) and updates
/// running_mean/running_var in place with the given momentum; infer mode
/// normalizes by the running stats. B == 1 in train mode is allowed: the
/// zero variance is absorbed by eps.
Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnMode mode, Tensor& running_mean, Tensor& running_var,
                  float momentum = 0.9f, float eps = 1e-5f);

// ---- plumbing ops ----

/// x[m x n] + row[1 x n] broadcast over rows.
Tensor add_rows(Tape* tape, const Tensor& x, const Tensor& row);

/// c * x.
Tensor scale(Tape* tape, const Tensor& x, float c);

/// Elementwise natural log; input clamped at 1e-30 so the result stays finite.
Tensor log_ew(Tape* tape, const Tensor& x);

/// Single element at a flat index -> scalar.
Tensor pick(Tape* tape, const Tensor& x, std::size_t flat_index);

/// Sum of all elements -> scalar.
Tensor sum_all(Tape* tape, const Tensor& x);

inline Tensor mean_all(Tape* t, const Tensor& x) {
  return scale(t, sum_all(t, x), 1.0f / static_cast<float>(x.size()));
}

/// Column means of x[K x D] -> [1 x D].
Tensor mean_rows(Tape* tape, const Tensor& x);

/// Vertical concatenation of 2-D tensors with equal column counts.
Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts);

/// Horizontal concatenation of 2-D tensors with equal row counts.
Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts);

/// x[(S*L) x F] -> [S x F]: per column, max over each contiguous segment of
/// L rows. Ties take the lowest row. max_over_time is the S=1, F=1 case.
Tensor max_pool_rows(Tape* tape, const Tensor& x, int segment);

/// Copy with a new shape of equal element count.
Tensor reshape_copy(Tape* tape, const Tensor& x, Shape new_shape);

}  // namespace atgan
