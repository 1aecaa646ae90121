#pragma once

#include <span>
#include <vector>

#include "moma/tensor.hpp"

namespace moma {

// Differentiable primitives. Each op validates shapes, computes the forward
// value, and records a pullback on the tape when any input requires grad.
// All matrix arguments are rank-2 row-major.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// x: [m,n], bias: [n] (or [1,n]); adds bias to every row.
Tensor add_row_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor relu(Tape& tape, const Tensor& x);
// Row-wise softmax with max-subtraction; rows sum to 1.
Tensor softmax_rows(Tape& tape, const Tensor& x);
Tensor log_softmax_rows(Tape& tape, const Tensor& x);
// Scales every row to unit Euclidean norm; throws InputError on a row with
// norm below 1e-12, naming the row.
Tensor l2_normalize_rows(Tape& tape, const Tensor& x);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
// [m,n] -> [m,1] sums within each row.
Tensor row_sum(Tape& tape, const Tensor& x);
// -> scalar.
Tensor sum_all(Tape& tape, const Tensor& x);
// [m,n] -> [m,1], picks x[i, labels[i]]; labels must lie in [0, n).
Tensor gather_labels(Tape& tape, const Tensor& x, std::span<const int> labels);

// Non-tape helpers for plain numeric rows.
void softmax_inplace(std::span<double> row);
double l2_norm(std::span<const double> row);

}  // namespace moma
