#pragma once

#include "trireid/tensor.hpp"

// Local alignment: predict a bounded 2D sampling offset for every cell of a
// down-sampled reference grid, resample each modality's patch features at
// the displaced points, and pull the resampled fields together with MSE.
namespace trireid::lam {

/// Linearly spaced normalized (row, col) points over the down-sampled grid,
/// corners at (-1,-1) and (+1,+1); a size-1 axis sits at its center, 0.
/// Shape [(hp/r)*(wp/r), 2]; r must divide both dims. Plain data, no grad.
Tensor make_reference_grid(int hp, int wp, int r);

/// Per-modality offset predictor: linear D->D on the patch tokens, a 3x3
/// conv D->D/2 with stride r (tanh), a 3x3 conv D/2->2, then a delta_max *
/// tanh squash that bounds each displacement component.
struct OffsetNetParams {
  Tensor proj;     // [D, D]
  Tensor conv1_w;  // [9D, D/2]
  Tensor conv1_b;  // [D/2]
  Tensor conv2_w;  // [9*(D/2), 2]
  Tensor conv2_b;  // [2]
};

/// One displacement bound: a single grid cell of the coarser axis.
double default_delta_max(int hg, int wg);

Tensor predict_offsets(const Tensor& patches, int hp, int wp, int r, double delta_max,
                       const OffsetNetParams& params);

/// Bilinear resampling of the patch field at grid + offsets.
Tensor deform_sample(const Tensor& patches, int hp, int wp, const Tensor& grid,
                     const Tensor& offsets);

/// Mean over the three unordered pairs of elementwise MSE; symmetric in its
/// arguments, zero iff all equal.
Tensor local_align_loss(const Tensor& r, const Tensor& n, const Tensor& t);

/// Variant comparing each non-anchor field to the anchor only (mean of the
/// two pair MSEs).
Tensor local_align_loss_to_anchor(const Tensor& anchor, const Tensor& b, const Tensor& c);

}  // namespace trireid::lam
