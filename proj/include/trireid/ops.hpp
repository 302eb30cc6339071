#pragma once

#include <utility>
#include <vector>

#include "trireid/tensor.hpp"

// Differentiable operations. Every function builds its output eagerly and,
// when grad mode is on and an input requires grad, records a backward closure
// on the thread's tape. Matrices are rank-2 row-major; vectors rank-1;
// scalars shape {1}. No implicit broadcasting beyond what is listed.
namespace trireid::ops {

// ---- shape and indexing ----
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor transpose2d(const Tensor& x);
/// Row i of a matrix as a vector.
Tensor row(const Tensor& x, int i);
/// Rows idx[0..k) of a matrix; duplicate indices accumulate gradient.
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
/// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& x, int begin, int end);
/// Vertical concatenation of matrices sharing a column count.
Tensor concat_rows(const std::vector<Tensor>& xs);
/// Horizontal concatenation of matrices sharing a row count.
Tensor concat_cols(const std::vector<Tensor>& xs);
/// Vectors of equal length stacked into a matrix, one per row.
Tensor stack_rows(const std::vector<Tensor>& xs);
/// Scalars gathered into a vector.
Tensor stack_scalars(const std::vector<Tensor>& xs);
/// Entries x[i,j] for each (i,j), as a vector; duplicates accumulate gradient.
Tensor select_entries(const Tensor& x, const std::vector<std::pair<int, int>>& entries);
/// Scales row i of a matrix by mask[i]. The mask is plain data, not a tensor,
/// and receives no gradient.
Tensor mask_rows(const Tensor& x, const std::vector<double>& mask);

// ---- arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
/// Matrix plus a vector added to every row.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor add_const(const Tensor& x, double c);
Tensor scale(const Tensor& x, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise product with a single-element tensor, differentiable in both.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// Mean over rows of a matrix, giving one vector.
Tensor mean_rows(const Tensor& x);

// ---- elementwise nonlinearities ----
Tensor sqrt_t(const Tensor& x);   // requires x > 0 for a finite gradient
Tensor exp_t(const Tensor& x);
Tensor tanh_t(const Tensor& x);
/// Exact erf-based GELU.
Tensor gelu(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);

// ---- normalization and attention pieces ----
/// Softmax over the last dimension of a rank-1 or rank-2 tensor, with
/// max-subtraction for stability.
Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);
/// Per-slice standardization over the last dimension (epsilon inside the
/// square root), then affine gain and bias. Rank-1 or rank-2 input.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Scales a vector, or each row of a matrix, to unit L2 norm. Norms below
/// 1e-12 are a degenerate-input error.
Tensor l2_normalize(const Tensor& x);

// ---- geometry ----
/// Determinant of a 3x3 matrix by cofactor expansion.
Tensor det3(const Tensor& g);
/// Bilinear interpolation of a feature grid at continuous points.
/// feat is [H*W, D] row-major over an H x W grid; points is [G, 2] rows of
/// (row, col) coordinates in [-1, +1] where (-1,-1) is the top-left pixel
/// center and (+1,+1) the bottom-right (align-corners convention). Points
/// outside the range are clamped to the border. A size-1 axis always maps to
/// its single pixel and contributes zero point gradient.
Tensor bilinear_sample(const Tensor& feat, const Tensor& points, int H, int W);
/// 3x3 patch extraction with zero padding 1 and the given stride: [H*W, C]
/// in, [Ho*Wo, 9*C] out with Ho = (H-1)/stride + 1. Column order within a row
/// is (dy, dx) window position major, channel minor.
Tensor im2col3x3(const Tensor& x, int H, int W, int stride);
/// All-pairs Euclidean distances between rows of x, with the squared
/// distance floored at eps before the square root. Floored entries (the
/// diagonal, coincident rows) get zero gradient.
Tensor pairwise_euclidean(const Tensor& x, double eps = 1e-24);

// ---- non-differentiable ----
/// Indices of the k largest scores (rank-1, or rank-2 with one row); ties
/// broken by smaller index, result sorted ascending. Detached from the tape.
std::vector<int> top_k_indices(const Tensor& scores, int k);

}  // namespace trireid::ops
