#pragma once

// Internal registry shared by the gradient-check translation units; not part
// of the public headers.

#include <functional>
#include <string>
#include <vector>

#include "trireid/rng.hpp"
#include "trireid/tensor.hpp"

namespace trireid::gck {

Tensor randt(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0);
// Scalarizes y against pre-drawn weights so backward sees a non-uniform
// output gradient. The weights must be fixed before the probed function is
// built: finite differencing requires a deterministic function.
Tensor pin(const Tensor& y, const Tensor& w);
// Random entries whose magnitude stays away from zero (for kinked ops).
Tensor randt_away(Rng& rng, std::vector<int> shape, double margin);
// Points strictly inside the sampling grid with fractional parts away from 0
// and 1, in the (row, col) normalized convention.
Tensor interior_points(Rng& rng, int G, int H, int W);

using CheckFn = std::function<double(Rng&, int)>;

struct Check {
  std::string name;
  CheckFn trial;  // returns one trial's max relative error
};

std::vector<Check> core_checks();
std::vector<Check> module_checks();

}  // namespace trireid::gck
