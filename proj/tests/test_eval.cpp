#include <cmath>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "trireid/error.hpp"
#include "trireid/reid_eval.hpp"
#include "trireid/rng.hpp"
#include "trireid/tensor.hpp"

using namespace trireid;

namespace {

Tensor randt(Rng& rng, const std::vector<int>& shape, double lo = 0.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("distance matrix: closed forms and loop oracle") {
  Tensor v = Tensor::from_data({1, 3}, {0.3, -0.7, 1.1});
  Tensor self = eval::distance_matrix(v, v);
  CHECK(self(0, 0) == 0.0);

  Tensor e1 = Tensor::from_data({1, 3}, {1, 0, 0});
  Tensor e2 = Tensor::from_data({1, 3}, {0, 1, 0});
  CHECK(std::abs(eval::distance_matrix(e1, e2)(0, 0) - std::sqrt(2.0)) < 1e-12);

  Rng rng(801);
  Tensor q = randt(rng, {3, 4}, -2.0, 2.0);
  Tensor g = randt(rng, {5, 4}, -2.0, 2.0);
  Tensor d = eval::distance_matrix(q, g);
  REQUIRE(d.shape() == std::vector<int>({3, 5}));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (int c = 0; c < 4; ++c) {
        double dv = q(i, c) - g(j, c);
        acc += dv * dv;
      }
      CHECK(std::abs(d(i, j) - std::sqrt(acc)) < 1e-10);
    }

  // cosine variant: aligned directions meet at 0, orthogonal at 1
  Tensor e1_scaled = Tensor::from_data({1, 3}, {4, 0, 0});
  CHECK(std::abs(eval::distance_matrix(e1, e1_scaled, eval::Metric::kCosine)(0, 0)) < 1e-12);
  CHECK(std::abs(eval::distance_matrix(e1, e2, eval::Metric::kCosine)(0, 0) - 1.0) < 1e-12);

  CHECK_THROWS_AS(eval::distance_matrix(q, Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("evaluate: hand-scored rankings") {
  // match ranked first
  Tensor d1 = Tensor::from_data({1, 3}, {0.1, 0.5, 0.9});
  auto r1 = eval::evaluate(d1, {7}, {7, 1, 2});
  CHECK(r1.map == 1.0);
  CHECK(r1.per_query_ap == std::vector<double>({1.0}));
  CHECK(r1.cmc[0] == 1.0);

  // match ranked second of two
  Tensor d2 = Tensor::from_data({1, 2}, {0.2, 0.6});
  auto r2 = eval::evaluate(d2, {3}, {9, 3});
  CHECK(r2.map == 0.5);
  CHECK(r2.cmc == std::vector<double>({0.0, 1.0}));
}

TEST_CASE("evaluate agrees with the counting oracle, including total ties") {
  Rng rng(802);
  Tensor d = randt(rng, {4, 6});
  std::vector<int> ql = {0, 1, 2, 0};
  std::vector<int> gl = {0, 1, 2, 0, 1, 2};
  auto rep = eval::evaluate(d, ql, gl);
  CHECK(rep.map == eval::map_oracle(d, ql, gl));

  // all-equal distances force the (distance, index) tie-break everywhere
  Tensor flat = Tensor::full({2, 4}, 0.5);
  std::vector<int> q2 = {1, 2};
  std::vector<int> g2 = {2, 1, 2, 1};
  auto tied = eval::evaluate(flat, q2, g2);
  CHECK(tied.map == eval::map_oracle(flat, q2, g2));
  // query 0 (label 1): hits at gallery 1 and 3 under index order -> AP = (1/2 + 2/4) / 2
  CHECK(std::abs(tied.per_query_ap[0] - 0.5) < 1e-15);
  // query 1 (label 2): hits at gallery 0 and 2 -> AP = (1/1 + 2/3) / 2
  CHECK(std::abs(tied.per_query_ap[1] - (1.0 + 2.0 / 3.0) / 2.0) < 1e-15);
}

TEST_CASE("evaluate matches the oracle across many random instances") {
  Rng rng(803);
  for (int trial = 0; trial < 200; ++trial) {
    int nq = 1 + rng.uniform_int(8);
    int ng = 2 + rng.uniform_int(15);
    int ids = 1 + rng.uniform_int(4);
    std::vector<int> gl(ng), ql(nq);
    for (auto& v : gl) v = rng.uniform_int(ids);
    for (auto& v : ql) v = gl[rng.uniform_int(ng)];  // guarantees a match
    Tensor d = randt(rng, {nq, ng});
    auto rep = eval::evaluate(d, ql, gl);
    CHECK(rep.map == eval::map_oracle(d, ql, gl));
    for (size_t k = 1; k < rep.cmc.size(); ++k) {
      CHECK(rep.cmc[k] >= rep.cmc[k - 1]);
      CHECK(rep.cmc[k] <= 1.0);
    }
    CHECK(rep.cmc.back() == 1.0);
  }
}

TEST_CASE("gallery permutation leaves the score unchanged when distances are distinct") {
  Rng rng(804);
  int ng = 8;
  Tensor d = Tensor::zeros({2, ng});
  for (int i = 0; i < 2 * ng; ++i) d.data()[i] = (i * 37 % 101) / 101.0;  // all distinct
  std::vector<int> gl = {0, 1, 0, 1, 0, 1, 0, 1};
  std::vector<int> ql = {0, 1};
  double base = eval::evaluate(d, ql, gl).map;

  std::vector<int> perm(ng);
  for (int i = 0; i < ng; ++i) perm[i] = i;
  rng.shuffle(perm);
  Tensor pd = Tensor::zeros({2, ng});
  std::vector<int> pgl(ng);
  for (int j = 0; j < ng; ++j) {
    pgl[j] = gl[perm[j]];
    for (int i = 0; i < 2; ++i)
      pd.data()[static_cast<size_t>(i) * ng + j] = d(i, perm[j]);
  }
  CHECK(std::abs(eval::evaluate(pd, ql, pgl).map - base) < 1e-15);
}

TEST_CASE("improving a correct pair's distance never hurts its query") {
  Rng rng(805);
  for (int trial = 0; trial < 50; ++trial) {
    int ng = 6;
    Tensor d = randt(rng, {1, ng});
    std::vector<int> gl = {0, 1, 0, 1, 0, 1};
    std::vector<int> ql = {0};
    double before = eval::evaluate(d, ql, gl).per_query_ap[0];
    Tensor better = d.clone();
    int target = 2 * rng.uniform_int(3);  // some correct gallery item
    better.data()[target] *= 0.1;
    double after = eval::evaluate(better, ql, gl).per_query_ap[0];
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("evaluate rejects a query with no gallery match, naming it") {
  Tensor d = Tensor::zeros({2, 2});
  try {
    eval::evaluate(d, {0, 5}, {0, 0});
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("query 1") != std::string::npos);
  }
}

TEST_CASE("report JSON carries the documented schema") {
  Tensor d = Tensor::from_data({1, 6}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  auto rep = eval::evaluate(d, {0}, {1, 0, 1, 1, 1, 0});
  auto j = nlohmann::json::parse(eval::report_json(rep, {1, 5, 10}));
  CHECK(j.contains("mAP"));
  CHECK(j["mAP"].get<double>() == doctest::Approx(rep.map).epsilon(1e-12));
  CHECK(j["cmc"]["1"].get<double>() == rep.cmc[0]);
  CHECK(j["cmc"]["5"].get<double>() == rep.cmc[4]);
  CHECK(j["cmc"]["10"].get<double>() == rep.cmc[5]);  // saturates at the gallery size
  CHECK(j["per_query_ap"].size() == 1);
}
