#include "trireid/losses.hpp"

#include <map>
#include <string>

#include "trireid/error.hpp"
#include "trireid/ops.hpp"

namespace trireid::losses {

namespace o = ops;

Tensor label_smooth_ce(const Tensor& logits, const std::vector<int>& labels, double epsilon) {
  if (logits.rank() != 2)
    throw ShapeError("label_smooth_ce: need [B, C] logits, got " + shape_str(logits.shape()));
  int b = logits.dim(0), c = logits.dim(1);
  if (c < 2) throw ValueError("label_smooth_ce: need at least 2 classes");
  if (static_cast<int>(labels.size()) != b)
    throw ValueError("label_smooth_ce: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(b));
  if (epsilon < 0.0 || epsilon >= 1.0)
    throw ValueError("label_smooth_ce: epsilon " + std::to_string(epsilon));
  Tensor targets = Tensor::full({b, c}, epsilon / (c - 1));
  auto& tv = targets.data();
  for (int i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw ValueError("label_smooth_ce: label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(c) + ")");
    tv[static_cast<size_t>(i) * c + labels[i]] = 1.0 - epsilon;
  }
  return o::scale(o::sum(o::mul(o::log_softmax_lastdim(logits), targets)), -1.0 / b);
}

Tensor batch_hard_triplet(const Tensor& embeddings, const std::vector<int>& labels,
                          double margin) {
  if (embeddings.rank() != 2)
    throw ShapeError("batch_hard_triplet: need [B, E] embeddings, got " +
                     shape_str(embeddings.shape()));
  int b = embeddings.dim(0);
  if (static_cast<int>(labels.size()) != b)
    throw ValueError("batch_hard_triplet: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(b));
  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2)
    throw ValueError("batch_hard_triplet: need at least 2 identities in the batch");
  for (const auto& [label, count] : counts)
    if (count < 2)
      throw ValueError("batch_hard_triplet: identity " + std::to_string(label) +
                       " has a single sample");

  Tensor dist = o::pairwise_euclidean(embeddings);
  std::vector<std::pair<int, int>> hardest_pos, hardest_neg;
  hardest_pos.reserve(b);
  hardest_neg.reserve(b);
  for (int i = 0; i < b; ++i) {
    int best_p = -1, best_n = -1;
    for (int j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (best_p < 0 || dist(i, j) > dist(i, best_p)) best_p = j;
      } else {
        if (best_n < 0 || dist(i, j) < dist(i, best_n)) best_n = j;
      }
    }
    hardest_pos.emplace_back(i, best_p);
    hardest_neg.emplace_back(i, best_n);
  }
  Tensor d_ap = o::select_entries(dist, hardest_pos);
  Tensor d_an = o::select_entries(dist, hardest_neg);
  return o::mean_all(o::clamp_min(o::add_const(o::sub(d_ap, d_an), margin), 0.0));
}

Tensor total_loss(const Tensor& ce, const Tensor& triplet, const Tensor& d2a, const Tensor& a2d,
                  const Tensor& mse, double alpha, double beta) {
  Tensor id_terms = o::add(ce, triplet);
  Tensor gram_terms = o::scale(o::add(d2a, a2d), alpha);
  return o::add(o::add(id_terms, gram_terms), o::scale(mse, beta));
}

}  // namespace trireid::losses
