#pragma once

#include <array>
#include <vector>

#include "trireid/tensor.hpp"

// Global alignment: each modality's patches collapse to one unit vector, the
// three vectors span a parallelotope, and the contrastive losses shrink its
// volume for matching triples relative to mismatched ones.
namespace trireid::gam {

/// Mean over patch rows, then L2 normalization. All-zero input is a
/// degenerate-input error (the norm would vanish).
Tensor pool_normalize(const Tensor& patches);

/// Pairwise inner products of the three embeddings in fixed (R, N, T) order.
Tensor gram_matrix(const Tensor& r, const Tensor& n, const Tensor& t);

/// sqrt(det of the Gram matrix), the spanned volume. The determinant is
/// floored before the root: training uses a small positive floor because the
/// gradient of sqrt blows up at zero and perfect alignment is the training
/// target; evaluation may pass 0 for the exact value.
Tensor gram_volume(const Tensor& r, const Tensor& n, const Tensor& t, double det_floor = 1e-12);

/// One sample's three unit embeddings in (R, N, T) order.
using EmbeddingTriple = std::array<Tensor, 3>;

struct GramLossPair {
  Tensor d2a;  // denominator varies the anchor over the batch
  Tensor a2d;  // denominator varies the non-anchor pair over the batch
};

/// Softmax-contrastive losses over negated volumes scaled by 1/tau. Entry
/// (x, y) of the underlying matrix is the volume of (anchor from sample x,
/// non-anchor pair from sample y); both losses pick the diagonal against a
/// batch-indexed denominator. tau is passed as its log (exponentiated here)
/// so positivity is structural.
GramLossPair gram_contrastive_loss(const std::vector<EmbeddingTriple>& batch, int anchor,
                                   const Tensor& log_tau, double det_floor = 1e-12);

}  // namespace trireid::gam
