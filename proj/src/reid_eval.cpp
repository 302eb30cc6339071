#include "trireid/reid_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "trireid/error.hpp"

namespace trireid::eval {

Tensor distance_matrix(const Tensor& query, const Tensor& gallery, Metric metric) {
  if (query.rank() != 2 || gallery.rank() != 2 || query.dim(1) != gallery.dim(1))
    throw ShapeError("distance_matrix: query " + shape_str(query.shape()) + " vs gallery " +
                     shape_str(gallery.shape()));
  int nq = query.dim(0), ng = gallery.dim(0), e = query.dim(1);
  Tensor out = Tensor::zeros({nq, ng});
  auto& ov = out.data();
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < ng; ++j) {
      double acc = 0.0;
      if (metric == Metric::kEuclidean) {
        for (int c = 0; c < e; ++c) {
          double d = query(i, c) - gallery(j, c);
          acc += d * d;
        }
        acc = std::sqrt(acc);
      } else {
        double dot = 0.0, qn = 0.0, gn = 0.0;
        for (int c = 0; c < e; ++c) {
          dot += query(i, c) * gallery(j, c);
          qn += query(i, c) * query(i, c);
          gn += gallery(j, c) * gallery(j, c);
        }
        double denom = std::sqrt(qn) * std::sqrt(gn);
        acc = 1.0 - (denom > 0.0 ? dot / denom : 0.0);
      }
      ov[static_cast<size_t>(i) * ng + j] = acc;
    }
  return out;
}

namespace {

void check_labels(const Tensor& dist, const std::vector<int>& query_labels,
                  const std::vector<int>& gallery_labels) {
  if (dist.rank() != 2)
    throw ShapeError("evaluate: need a [Q, G] distance matrix, got " + shape_str(dist.shape()));
  if (static_cast<int>(query_labels.size()) != dist.dim(0) ||
      static_cast<int>(gallery_labels.size()) != dist.dim(1))
    throw ValueError("evaluate: label counts " + std::to_string(query_labels.size()) + "/" +
                     std::to_string(gallery_labels.size()) + " vs matrix " +
                     shape_str(dist.shape()));
  for (size_t q = 0; q < query_labels.size(); ++q) {
    bool any = false;
    for (int g : gallery_labels)
      if (g == query_labels[q]) {
        any = true;
        break;
      }
    if (!any)
      throw ValueError("evaluate: query " + std::to_string(q) + " has no gallery match");
  }
}

}  // namespace

RetrievalReport evaluate(const Tensor& dist, const std::vector<int>& query_labels,
                         const std::vector<int>& gallery_labels) {
  check_labels(dist, query_labels, gallery_labels);
  int nq = dist.dim(0), ng = dist.dim(1);
  RetrievalReport report;
  report.per_query_ap.reserve(nq);
  report.cmc.assign(ng, 0.0);
  for (int q = 0; q < nq; ++q) {
    std::vector<int> order(ng);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (dist(q, a) != dist(q, b)) return dist(q, a) < dist(q, b);
      return a < b;
    });
    double ap = 0.0;
    int hits = 0;
    int first_hit = -1;
    for (int rank = 0; rank < ng; ++rank) {
      if (gallery_labels[order[rank]] != query_labels[q]) continue;
      ++hits;
      ap += static_cast<double>(hits) / (rank + 1);
      if (first_hit < 0) first_hit = rank;
    }
    report.per_query_ap.push_back(ap / hits);
    for (int k = first_hit; k < ng; ++k) report.cmc[k] += 1.0;
  }
  for (auto& v : report.cmc) v /= nq;
  report.map = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) / nq;
  return report;
}

double map_oracle(const Tensor& dist, const std::vector<int>& query_labels,
                  const std::vector<int>& gallery_labels) {
  check_labels(dist, query_labels, gallery_labels);
  int nq = dist.dim(0), ng = dist.dim(1);
  double total = 0.0;
  for (int q = 0; q < nq; ++q) {
    std::vector<std::pair<int, double>> hits;  // (rank, precision at that rank)
    for (int g = 0; g < ng; ++g) {
      if (gallery_labels[g] != query_labels[q]) continue;
      // rank of g = 1 + number of items strictly ahead under the
      // (distance, index) order; precision there counts the matches among
      // them plus g itself
      int ahead = 0, hits_ahead = 0;
      for (int other = 0; other < ng; ++other) {
        if (other == g) continue;
        bool before = dist(q, other) < dist(q, g) ||
                      (dist(q, other) == dist(q, g) && other < g);
        if (!before) continue;
        ++ahead;
        if (gallery_labels[other] == query_labels[q]) ++hits_ahead;
      }
      hits.emplace_back(ahead, static_cast<double>(hits_ahead + 1) / (ahead + 1));
    }
    // canonical summation order (ascending rank) keeps the mean bit-exact
    std::sort(hits.begin(), hits.end());
    double ap = 0.0;
    for (const auto& [rank, precision] : hits) ap += precision;
    total += ap / hits.size();
  }
  return total / nq;
}

std::string report_json(const RetrievalReport& report, const std::vector<int>& ks) {
  nlohmann::json j;
  j["mAP"] = report.map;
  nlohmann::json cmc = nlohmann::json::object();
  for (int k : ks) {
    int idx = std::min<int>(k, static_cast<int>(report.cmc.size())) - 1;
    if (idx < 0) throw ValueError("report_json: rank " + std::to_string(k) + " must be >= 1");
    cmc[std::to_string(k)] = report.cmc[idx];
  }
  j["cmc"] = cmc;
  j["per_query_ap"] = report.per_query_ap;
  return j.dump(2);
}

}  // namespace trireid::eval
