#pragma once

#include <string>
#include <vector>

#include "trireid/tensor.hpp"

// Retrieval scoring: rank every gallery item per query, accumulate average
// precision and cumulative match curves. Plain-value math, no autodiff.
namespace trireid::eval {

enum class Metric { kEuclidean, kCosine };

/// Pairwise query-to-gallery distances. Cosine mode returns 1 - cosine
/// similarity (zero vectors get similarity 0).
Tensor distance_matrix(const Tensor& query, const Tensor& gallery,
                       Metric metric = Metric::kEuclidean);

struct RetrievalReport {
  std::vector<double> per_query_ap;
  double map = 0.0;
  std::vector<double> cmc;  // index k holds the rank-(k+1) match rate
};

/// Rank ascending by (distance, gallery index) and score. Every query must
/// have at least one same-label gallery item.
RetrievalReport evaluate(const Tensor& dist, const std::vector<int>& query_labels,
                         const std::vector<int>& gallery_labels);

/// Independent mAP computation used to cross-check evaluate: ranks are
/// derived by counting dominating entries per gallery item instead of
/// sorting, and AP is accumulated in a single pass over gallery positions.
double map_oracle(const Tensor& dist, const std::vector<int>& query_labels,
                  const std::vector<int>& gallery_labels);

/// Serialize a report with the requested CMC ranks; ranks beyond the gallery
/// size saturate at the last curve value.
std::string report_json(const RetrievalReport& report, const std::vector<int>& ks);

}  // namespace trireid::eval
