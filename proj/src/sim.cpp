#include "trireid/sim.hpp"

#include <cmath>

#include "trireid/error.hpp"
#include "trireid/ops.hpp"

namespace trireid::sim {

namespace o = ops;

namespace {

void check_features(const ModalityFeatures& f, const char* where) {
  if (f.cls.rank() != 1 || f.patches.rank() != 2 || f.patches.dim(1) != f.cls.dim(0))
    throw ShapeError(std::string(where) + ": cls " + shape_str(f.cls.shape()) + " vs patches " +
                     shape_str(f.patches.shape()));
}

Selected from_indices(std::vector<int> indices, int length) {
  Selected s;
  s.mask.assign(length, 0.0);
  for (int i : indices) s.mask[i] = 1.0;
  s.indices = std::move(indices);
  return s;
}

}  // namespace

Tensor intra_modal_scores(const ModalityFeatures& feat) {
  check_features(feat, "intra_modal_scores");
  int d = feat.cls.dim(0);
  Tensor q = o::reshape(feat.cls, {1, d});
  Tensor logits = o::scale(o::matmul(q, o::transpose2d(feat.patches)), 1.0 / std::sqrt(d));
  return o::softmax_lastdim(logits);
}

Selected intra_select(const Tensor& scores, int k1) {
  int length = scores.rank() == 2 ? scores.dim(1) : scores.dim(0);
  return from_indices(o::top_k_indices(scores, k1), length);
}

Tensor inter_modal_scores(const ModalityFeatures& r, const ModalityFeatures& n,
                          const ModalityFeatures& t, const InteractionParams& params) {
  check_features(r, "inter_modal_scores");
  check_features(n, "inter_modal_scores");
  check_features(t, "inter_modal_scores");
  if (r.patches.shape() != n.patches.shape() || r.patches.shape() != t.patches.shape())
    throw ShapeError("inter_modal_scores: modality shapes differ");
  int d = r.cls.dim(0);
  Tensor q = o::matmul(o::stack_rows({r.cls, n.cls, t.cls}), params.stack_proj);
  Tensor k = o::matmul(o::concat_rows({r.patches, n.patches, t.patches}), params.concat_proj);
  return o::softmax_lastdim(o::scale(o::matmul(q, o::transpose2d(k)), 1.0 / std::sqrt(d)));
}

Selected inter_select(const Tensor& scores, int modality, int k2) {
  if (scores.rank() != 2 || scores.dim(0) != 3 || scores.dim(1) % 3 != 0)
    throw ShapeError("inter_select: need [3, 3L] scores, got " + shape_str(scores.shape()));
  if (modality < 0 || modality > 2)
    throw ValueError("inter_select: modality " + std::to_string(modality));
  int length = scores.dim(1) / 3;
  Tensor received = Tensor::zeros({length});
  auto& rv = received.data();
  for (int u = 0; u < 3; ++u) {
    if (u == modality) continue;
    for (int i = 0; i < length; ++i) rv[i] += scores(u, modality * length + i);
  }
  return from_indices(o::top_k_indices(received, k2), length);
}

Selected fuse_masks(const Selected& intra, const Selected& inter, MaskMode mode) {
  if (intra.mask.size() != inter.mask.size())
    throw ShapeError("fuse_masks: mask lengths differ");
  Selected fused;
  fused.mask.resize(intra.mask.size());
  for (size_t i = 0; i < fused.mask.size(); ++i) {
    fused.mask[i] = mode == MaskMode::kUnion ? std::max(intra.mask[i], inter.mask[i])
                                             : intra.mask[i] * inter.mask[i];
    if (fused.mask[i] != 0.0) fused.indices.push_back(static_cast<int>(i));
  }
  return fused;
}

Tensor apply_selection(const Tensor& patches, const Selected& fused, DropMode mode) {
  if (mode == DropMode::kZero) return o::mask_rows(patches, fused.mask);
  if (fused.indices.empty())
    throw ValueError("apply_selection: empty selection cannot be gathered");
  return o::gather_rows(patches, fused.indices);
}

Tensor mhca(const Tensor& queries, const Tensor& keyvals, const InteractionParams& params) {
  int d = queries.dim(1);
  int h = params.heads;
  if (h < 1 || d % h != 0)
    throw ValueError("mhca: " + std::to_string(h) + " heads do not divide width " +
                     std::to_string(d));
  if (keyvals.dim(1) != d)
    throw ShapeError("mhca: query width " + std::to_string(d) + " vs key width " +
                     std::to_string(keyvals.dim(1)));
  int dh = d / h;
  Tensor qp = o::matmul(queries, params.att_wq);
  Tensor kp = o::matmul(keyvals, params.att_wk);
  Tensor vp = o::matmul(keyvals, params.att_wv);
  std::vector<Tensor> heads;
  heads.reserve(h);
  for (int i = 0; i < h; ++i) {
    Tensor qh = o::slice_cols(qp, i * dh, (i + 1) * dh);
    Tensor kh = o::slice_cols(kp, i * dh, (i + 1) * dh);
    Tensor vh = o::slice_cols(vp, i * dh, (i + 1) * dh);
    Tensor att = o::softmax_lastdim(o::scale(o::matmul(qh, o::transpose2d(kh)), 1.0 / std::sqrt(dh)));
    heads.push_back(o::matmul(att, vh));
  }
  return o::matmul(o::concat_cols(heads), params.att_wo);
}

Tensor modal_interaction(const Tensor& cls_r, const Tensor& cls_n, const Tensor& cls_t,
                         const Tensor& sel_r, const Tensor& sel_n, const Tensor& sel_t,
                         const InteractionParams& params) {
  int d = cls_r.dim(0);
  Tensor q = o::matmul(o::stack_rows({cls_r, cls_n, cls_t}), params.stack_proj);
  Tensor k = o::matmul(o::concat_rows({sel_r, sel_n, sel_t}), params.concat_proj);
  Tensor fused = o::layer_norm(o::add(q, mhca(q, k, params)), params.ln1_gain, params.ln1_bias);
  Tensor hidden = o::gelu(o::add_rowvec(o::matmul(fused, params.ffn_w1), params.ffn_b1));
  Tensor ffn = o::add_rowvec(o::matmul(hidden, params.ffn_w2), params.ffn_b2);
  Tensor out = o::layer_norm(o::add(fused, ffn), params.ln2_gain, params.ln2_bias);
  return o::reshape(out, {3 * d});
}

}  // namespace trireid::sim
