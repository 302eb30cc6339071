#include "trireid/gam.hpp"

#include "trireid/error.hpp"
#include "trireid/ops.hpp"

namespace trireid::gam {

namespace o = ops;

Tensor pool_normalize(const Tensor& patches) {
  if (patches.rank() != 2)
    throw ShapeError("pool_normalize: need [L, D] patches, got " + shape_str(patches.shape()));
  return o::l2_normalize(o::mean_rows(patches));
}

Tensor gram_matrix(const Tensor& r, const Tensor& n, const Tensor& t) {
  Tensor a = o::stack_rows({r, n, t});
  return o::matmul(a, o::transpose2d(a));
}

Tensor gram_volume(const Tensor& r, const Tensor& n, const Tensor& t, double det_floor) {
  return o::sqrt_t(o::clamp_min(o::det3(gram_matrix(r, n, t)), det_floor));
}

GramLossPair gram_contrastive_loss(const std::vector<EmbeddingTriple>& batch, int anchor,
                                   const Tensor& log_tau, double det_floor) {
  if (batch.empty()) throw ValueError("gram_contrastive_loss: empty batch");
  if (anchor < 0 || anchor > 2)
    throw ValueError("gram_contrastive_loss: anchor " + std::to_string(anchor));
  int b = static_cast<int>(batch.size());
  int m2 = (anchor + 1) % 3, m3 = (anchor + 2) % 3;

  Tensor inv_tau = o::exp_t(o::scale(log_tau, -1.0));
  // logits[x][y] = -Vol(anchor_x, pair_y) / tau
  std::vector<Tensor> rows;
  rows.reserve(b);
  for (int x = 0; x < b; ++x) {
    std::vector<Tensor> entries;
    entries.reserve(b);
    for (int y = 0; y < b; ++y)
      entries.push_back(
          o::scale(gram_volume(batch[x][anchor], batch[y][m2], batch[y][m3], det_floor), -1.0));
    rows.push_back(o::stack_scalars(entries));
  }
  Tensor logits = o::mul_scalar(o::stack_rows(rows), inv_tau);

  std::vector<std::pair<int, int>> diag;
  diag.reserve(b);
  for (int i = 0; i < b; ++i) diag.emplace_back(i, i);

  // d2a: softmax down each column (anchor index varies); a2d: along each row
  Tensor col_logp = o::log_softmax_lastdim(o::transpose2d(logits));
  Tensor row_logp = o::log_softmax_lastdim(logits);
  GramLossPair out;
  out.d2a = o::scale(o::sum(o::select_entries(col_logp, diag)), -1.0 / b);
  out.a2d = o::scale(o::sum(o::select_entries(row_logp, diag)), -1.0 / b);
  return out;
}

}  // namespace trireid::gam
