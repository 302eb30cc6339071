#pragma once

#include <vector>

#include "trireid/tensor.hpp"

namespace trireid::losses {

/// Cross-entropy against smoothed targets: 1 - epsilon on the true class,
/// epsilon / (C - 1) spread over the rest, averaged over the batch.
Tensor label_smooth_ce(const Tensor& logits, const std::vector<int>& labels, double epsilon);

/// Batch-hard mining: per anchor, the farthest same-identity embedding and
/// the nearest different-identity one, hinged at the margin and averaged.
/// Requires at least two identities and at least two samples of every
/// identity present (the P x K sampling contract).
Tensor batch_hard_triplet(const Tensor& embeddings, const std::vector<int>& labels, double margin);

/// ce + triplet + alpha * (d2a + a2d) + beta * mse.
Tensor total_loss(const Tensor& ce, const Tensor& triplet, const Tensor& d2a, const Tensor& a2d,
                  const Tensor& mse, double alpha, double beta);

}  // namespace trireid::losses
