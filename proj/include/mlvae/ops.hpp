#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlvae/tape.hpp"

// Differentiable primitives. Matrix ops take rank-2 inputs ([rows, cols]);
// elementwise ops require identical shapes. Every output is checked for
// non-finite values when it is recorded.
namespace mlvae::ops {

Var matmul(Var a, Var b);
// x[m,k] * w[k,n] + bias[n], bias broadcast over rows.
Var affine(Var x, Var w, Var bias);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var neg(Var x);

Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var relu(Var x);
Var sigmoid(Var x);
// log(sigmoid(x)) evaluated without forming sigmoid(x).
Var log_sigmoid(Var x);
// max(x, floor); gradient is zero where the floor is active.
Var clamp_min(Var x, double floor);

Var sum(Var x);
Var mean(Var x);
// [m,n] -> [m,1]
Var sum_cols(Var x);
// [m,n] -> [1,n]
Var sum_rows(Var x);
// Sums consecutive row ranges [offsets[g], offsets[g+1]) into row g.
Var segment_sum_rows(Var x, std::span<const std::size_t> offsets);
// Output row r is input row index[r].
Var gather_rows(Var x, std::span<const std::size_t> index);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(Var a, Var b);
Var log_softmax_rows(Var x);

}  // namespace mlvae::ops

namespace mlvae {

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator-(Var x) { return ops::neg(x); }
inline Var operator*(double s, Var x) { return ops::scale(x, s); }
inline Var operator*(Var x, double s) { return ops::scale(x, s); }
inline Var operator+(Var x, double s) { return ops::add_scalar(x, s); }
inline Var operator-(Var x, double s) { return ops::add_scalar(x, -s); }

}  // namespace mlvae
