#include "trireid/lam.hpp"

#include <algorithm>
#include <string>

#include "trireid/error.hpp"
#include "trireid/ops.hpp"

namespace trireid::lam {

namespace o = ops;

Tensor make_reference_grid(int hp, int wp, int r) {
  if (r < 1) throw ValueError("make_reference_grid: r must be >= 1");
  if (hp < 1 || wp < 1 || hp % r != 0 || wp % r != 0)
    throw ValueError("make_reference_grid: factor " + std::to_string(r) + " does not divide " +
                     std::to_string(hp) + "x" + std::to_string(wp));
  int hg = hp / r, wg = wp / r;
  Tensor grid = Tensor::zeros({hg * wg, 2});
  auto& gv = grid.data();
  for (int i = 0; i < hg; ++i)
    for (int j = 0; j < wg; ++j) {
      size_t at = (static_cast<size_t>(i) * wg + j) * 2;
      gv[at] = hg == 1 ? 0.0 : -1.0 + 2.0 * i / (hg - 1);
      gv[at + 1] = wg == 1 ? 0.0 : -1.0 + 2.0 * j / (wg - 1);
    }
  return grid;
}

double default_delta_max(int hg, int wg) { return 2.0 / std::max(hg, wg); }

Tensor predict_offsets(const Tensor& patches, int hp, int wp, int r, double delta_max,
                       const OffsetNetParams& params) {
  if (patches.rank() != 2 || patches.dim(0) != hp * wp)
    throw ShapeError("predict_offsets: patches " + shape_str(patches.shape()) + " vs grid " +
                     std::to_string(hp) + "x" + std::to_string(wp));
  if (r < 1 || hp % r != 0 || wp % r != 0)
    throw ValueError("predict_offsets: factor " + std::to_string(r) + " does not divide " +
                     std::to_string(hp) + "x" + std::to_string(wp));
  if (delta_max <= 0.0) throw ValueError("predict_offsets: delta_max must be positive");
  int hg = hp / r, wg = wp / r;
  Tensor x = o::matmul(patches, params.proj);
  Tensor h = o::tanh_t(
      o::add_rowvec(o::matmul(o::im2col3x3(x, hp, wp, r), params.conv1_w), params.conv1_b));
  Tensor raw =
      o::add_rowvec(o::matmul(o::im2col3x3(h, hg, wg, 1), params.conv2_w), params.conv2_b);
  return o::scale(o::tanh_t(raw), delta_max);
}

Tensor deform_sample(const Tensor& patches, int hp, int wp, const Tensor& grid,
                     const Tensor& offsets) {
  if (grid.shape() != offsets.shape())
    throw ShapeError("deform_sample: grid " + shape_str(grid.shape()) + " vs offsets " +
                     shape_str(offsets.shape()));
  return o::bilinear_sample(patches, o::add(grid, offsets), hp, wp);
}

namespace {

Tensor mse(const Tensor& a, const Tensor& b) {
  Tensor d = o::sub(a, b);
  return o::mean_all(o::mul(d, d));
}

}  // namespace

Tensor local_align_loss(const Tensor& r, const Tensor& n, const Tensor& t) {
  if (r.shape() != n.shape() || r.shape() != t.shape())
    throw ShapeError("local_align_loss: shapes differ");
  return o::scale(o::add(o::add(mse(r, n), mse(r, t)), mse(n, t)), 1.0 / 3.0);
}

Tensor local_align_loss_to_anchor(const Tensor& anchor, const Tensor& b, const Tensor& c) {
  if (anchor.shape() != b.shape() || anchor.shape() != c.shape())
    throw ShapeError("local_align_loss_to_anchor: shapes differ");
  return o::scale(o::add(mse(anchor, b), mse(anchor, c)), 0.5);
}

}  // namespace trireid::lam
