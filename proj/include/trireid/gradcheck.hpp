#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trireid/tensor.hpp"

namespace trireid {

/// Max over coordinates of |analytic - central difference| / max(1, |central
/// difference|) for a tensor-to-scalar function. Runs f on an isolated tape;
/// numeric probes run with grad recording off.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5);

struct GradCheckRow {
  std::string op;
  double max_rel_err;
  bool pass;
};

/// One row per differentiable operation and composite path, each probed at
/// `points` seeded random configurations chosen away from kinks (clamp
/// boundaries, sampling lattice points, degenerate norms).
std::vector<GradCheckRow> gradcheck_suite(uint64_t seed, int points = 20, double tol = 1e-4);

}  // namespace trireid
