#pragma once

#include <vector>

#include "dyad/graph.hpp"

// Expression-style builders for the primitive set. Each returns a new node in
// the operands' graph. Binary elementwise ops broadcast a dimension of size 1.

namespace dyad::numerics {

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // elementwise
Var operator*(double s, Var a);
Var operator-(Var a);
Var add_scalar(Var a, double s);

Var matmul(Var a, Var b);

/// 1-D convolution over rows (time). `x` is (L x Cin), `w` is (K*Cin x Cout)
/// with tap-major rows; zero padding K/2, output length ceil(L/stride) for odd K.
Var conv1d(Var x, Var w, Index kernel, Index stride = 1);

/// Per-row normalization to zero mean and unit variance (no affine terms).
Var layer_norm(Var x, double eps = 1e-5);

/// Multi-head scaled dot-product attention; q is (Lq x D), k and v are (Lk x D).
Var attention(Var q, Var k, Var v, int heads);

Var sigmoid(Var x);
Var silu(Var x);
Var gelu(Var x);
Var square(Var x);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, Index start, Index count);
Var slice_rows(Var x, Index start, Index count);

Var sum(Var x);   // (1x1)
Var mean(Var x);  // (1x1)

/// Row-wise cosine of the angle between a and b: (R x 1).
Var cosine_rows(Var a, Var b);

/// Mean over rows of -sum(targets * log_softmax(logits)); targets are probabilities.
Var softmax_cross_entropy(Var logits, Var targets);

/// Rotates every 3-vector of row i of `v` (R x 3N) by the axis-angle rotation in row i of `r` (R x 3).
Var rotate_vectors(Var r, Var v);

/// Softmax attention probabilities for each head: heads x (Lq x Lk).
std::vector<Tensor> attention_probabilities(const Tensor& q, const Tensor& k, int heads);

}  // namespace dyad::numerics
