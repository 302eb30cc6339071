#pragma once

#include <vector>

#include "trireid/tensor.hpp"

// Selective interaction: score patch tokens within and across modalities,
// keep the top scorers, and fuse the three class tokens with the surviving
// patches through multi-head cross-attention. Modality order is fixed as
// (R, N, T) everywhere a stacked or concatenated layout appears.
namespace trireid::sim {

struct ModalityFeatures {
  Tensor cls;      // [D]
  Tensor patches;  // [L, D]
};

enum class MaskMode { kUnion, kIntersection };
enum class DropMode { kZero, kGather };

struct InteractionParams {
  int heads = 4;
  Tensor stack_proj;   // [D, D], applied to stacked class tokens
  Tensor concat_proj;  // [D, D], applied to concatenated patch tokens
  Tensor att_wq, att_wk, att_wv, att_wo;  // [D, D]
  Tensor ffn_w1;                          // [D, 4D]
  Tensor ffn_b1;                          // [4D]
  Tensor ffn_w2;                          // [4D, D]
  Tensor ffn_b2;                          // [D]
  Tensor ln1_gain, ln1_bias;              // [D]
  Tensor ln2_gain, ln2_bias;              // [D]
};

/// A hard token choice: the surviving indices (ascending) and the equivalent
/// 0/1 mask over all L positions. Selection is recomputed every forward pass
/// and never carries gradient.
struct Selected {
  std::vector<int> indices;
  std::vector<double> mask;
};

/// Self-attention score of each patch against its own class token,
/// softmax((cls . patches^T) / sqrt(D)), with identity query/key projections.
Tensor intra_modal_scores(const ModalityFeatures& feat);

/// Top k1 intra-modal scores.
Selected intra_select(const Tensor& scores, int k1);

/// Cross-modal score matrix softmax(Q K^T / sqrt(D)) in [3 x 3L]: Q projects
/// the stacked class tokens, K projects the concatenated patches. Rows are
/// query modalities (R, N, T); column blocks are patch modalities in the
/// same order.
Tensor inter_modal_scores(const ModalityFeatures& r, const ModalityFeatures& n,
                          const ModalityFeatures& t, const InteractionParams& params);

/// Attention received by modality m's patches from the other two modalities'
/// class tokens: the two rows u != m of the score matrix, restricted to
/// modality m's column block, summed elementwise, then top k2.
/// An alternative reading of the aggregation would score the 2L patches of
/// the other modalities by the attention they receive from modality m's row;
/// this implementation keeps the per-modality mask length at L as the mask
/// fusion step requires.
Selected inter_select(const Tensor& scores, int modality, int k2);

/// Union (elementwise max) or intersection (elementwise product) of the two
/// binary masks.
Selected fuse_masks(const Selected& intra, const Selected& inter, MaskMode mode);

/// kZero keeps the [L, D] shape and zeroes dropped rows; kGather physically
/// drops them. A gather over an empty selection (possible under
/// intersection fusion) is an error.
Tensor apply_selection(const Tensor& patches, const Selected& fused, DropMode mode);

/// Multi-head cross-attention of queries over keyvals (used as both keys and
/// values), per-head scaling 1/sqrt(D/heads), concatenated heads through the
/// output projection.
Tensor mhca(const Tensor& queries, const Tensor& keyvals, const InteractionParams& params);

/// The fusion block: Q = projected class stack, K = projected selected-patch
/// concat; LN(Q + MHCA(Q,K)), then LN(. + FFN(.)), flattened to [3D].
Tensor modal_interaction(const Tensor& cls_r, const Tensor& cls_n, const Tensor& cls_t,
                         const Tensor& sel_r, const Tensor& sel_n, const Tensor& sel_t,
                         const InteractionParams& params);

}  // namespace trireid::sim
