#include "trireid/gradcheck.hpp"

#include <cmath>
#include <utility>

#include "gradcheck_registry.hpp"
#include "trireid/error.hpp"
#include "trireid/ops.hpp"
#include "trireid/rng.hpp"

namespace trireid {

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
  TapeScope scope;
  Tensor xa = x.clone(true);
  Tensor loss = f(xa);
  if (loss.numel() != 1)
    throw ValueError("finite_diff_check: f must return a scalar, got " + shape_str(loss.shape()));
  if (loss.requires_grad()) backward(loss);
  std::vector<double> ga = xa.grad();  // zeros when x never reaches the loss

  NoGradGuard ng;
  Tensor xp = x.clone(false);
  auto& xv = xp.data();
  double max_err = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) {
    double orig = xv[i];
    xv[i] = orig + h;
    double fp = f(xp).item();
    xv[i] = orig - h;
    double fm = f(xp).item();
    xv[i] = orig;
    double gn = (fp - fm) / (2.0 * h);
    double err = std::abs(ga[i] - gn) / std::max(1.0, std::abs(gn));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

namespace gck {

Tensor randt(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = lo + rng.uniform() * (hi - lo);
  return t;
}

Tensor pin(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

Tensor randt_away(Rng& rng, std::vector<int> shape, double margin) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    v = sign * (margin + rng.uniform() * (1.0 - margin));
  }
  return t;
}

Tensor interior_points(Rng& rng, int G, int H, int W) {
  Tensor pts = Tensor::zeros({G, 2});
  auto& pv = pts.data();
  for (int g = 0; g < G; ++g) {
    double py = H == 1 ? 0.0 : rng.uniform_int(H - 1) + 0.15 + 0.7 * rng.uniform();
    double px = W == 1 ? 0.0 : rng.uniform_int(W - 1) + 0.15 + 0.7 * rng.uniform();
    pv[2 * g] = H == 1 ? 0.0 : 2.0 * py / (H - 1) - 1.0;
    pv[2 * g + 1] = W == 1 ? 0.0 : 2.0 * px / (W - 1) - 1.0;
  }
  return pts;
}

std::vector<Check> core_checks() {
  namespace o = ops;
  std::vector<Check> cs;
  auto add = [&](std::string name, CheckFn fn) { cs.push_back({std::move(name), std::move(fn)}); };

  add("reshape", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 4});
    Tensor w = randt(rng, {2, 6});
    return finite_diff_check([&](const Tensor& t) { return pin(o::reshape(t, {2, 6}), w); }, x);
  });
  add("transpose2d", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 4});
    Tensor w = randt(rng, {4, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::transpose2d(t), w); }, x);
  });
  add("row", [](Rng& rng, int) {
    Tensor x = randt(rng, {4, 3});
    Tensor w = randt(rng, {3});
    int i = rng.uniform_int(4);
    return finite_diff_check([&](const Tensor& t) { return pin(o::row(t, i), w); }, x);
  });
  add("gather_rows", [](Rng& rng, int) {
    Tensor x = randt(rng, {4, 3});
    Tensor w = randt(rng, {3, 3});
    std::vector<int> idx = {rng.uniform_int(4), rng.uniform_int(4), rng.uniform_int(4)};
    return finite_diff_check([&](const Tensor& t) { return pin(o::gather_rows(t, idx), w); }, x);
  });
  add("slice_cols", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 5});
    Tensor w = randt(rng, {3, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::slice_cols(t, 1, 4), w); }, x);
  });
  add("concat_rows", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {2, 3});
    Tensor other = randt(rng, {3, 3});
    Tensor w = randt(rng, {5, 3});
    bool first = trial % 2 == 0;
    return finite_diff_check(
        [&](const Tensor& t) {
          return pin(first ? o::concat_rows({t, other}) : o::concat_rows({other, t}), w);
        },
        x);
  });
  add("concat_cols", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {3, 2});
    Tensor other = randt(rng, {3, 4});
    Tensor w = randt(rng, {3, 6});
    bool first = trial % 2 == 0;
    return finite_diff_check(
        [&](const Tensor& t) {
          return pin(first ? o::concat_cols({t, other}) : o::concat_cols({other, t}), w);
        },
        x);
  });
  add("stack_rows", [](Rng& rng, int) {
    Tensor x = randt(rng, {4});
    Tensor a = randt(rng, {4});
    Tensor w = randt(rng, {3, 4});
    return finite_diff_check([&](const Tensor& t) { return pin(o::stack_rows({a, t, a}), w); }, x);
  });
  add("stack_scalars", [](Rng& rng, int) {
    Tensor x = randt(rng, {1});
    Tensor a = randt(rng, {1});
    Tensor w = randt(rng, {3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::stack_scalars({a, t, t}), w); },
                             x);
  });
  add("select_entries", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 4});
    Tensor w = randt(rng, {3});
    std::vector<std::pair<int, int>> es = {{0, 1}, {2, 3}, {0, 1}};
    return finite_diff_check([&](const Tensor& t) { return pin(o::select_entries(t, es), w); }, x);
  });
  add("mask_rows", [](Rng& rng, int) {
    Tensor x = randt(rng, {4, 3});
    Tensor w = randt(rng, {4, 3});
    std::vector<double> mask = {1.0, 0.0, 1.0, 0.0};
    return finite_diff_check([&](const Tensor& t) { return pin(o::mask_rows(t, mask), w); }, x);
  });
  add("add", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {3, 3});
    Tensor other = randt(rng, {3, 3});
    Tensor w = randt(rng, {3, 3});
    bool first = trial % 2 == 0;
    return finite_diff_check(
        [&](const Tensor& t) { return pin(first ? o::add(t, other) : o::add(other, t), w); }, x);
  });
  add("sub", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {3, 3});
    Tensor other = randt(rng, {3, 3});
    Tensor w = randt(rng, {3, 3});
    bool first = trial % 2 == 0;
    return finite_diff_check(
        [&](const Tensor& t) { return pin(first ? o::sub(t, other) : o::sub(other, t), w); }, x);
  });
  add("mul", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {3, 3});
    Tensor other = randt(rng, {3, 3});
    Tensor w = randt(rng, {3, 3});
    bool first = trial % 2 == 0;
    return finite_diff_check(
        [&](const Tensor& t) { return pin(first ? o::mul(t, other) : o::mul(other, t), w); }, x);
  });
  add("add_rowvec", [](Rng& rng, int trial) {
    Tensor m = randt(rng, {3, 4});
    Tensor v = randt(rng, {4});
    Tensor w = randt(rng, {3, 4});
    if (trial % 2 == 0)
      return finite_diff_check([&](const Tensor& t) { return pin(o::add_rowvec(t, v), w); }, m);
    return finite_diff_check([&](const Tensor& t) { return pin(o::add_rowvec(m, t), w); }, v);
  });
  add("add_const", [](Rng& rng, int) {
    Tensor x = randt(rng, {2, 3});
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::add_const(t, 0.7), w); }, x);
  });
  add("scale", [](Rng& rng, int) {
    Tensor x = randt(rng, {2, 3});
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::scale(t, -1.3), w); }, x);
  });
  add("matmul", [](Rng& rng, int trial) {
    Tensor a = randt(rng, {3, 4});
    Tensor b = randt(rng, {4, 2});
    Tensor w = randt(rng, {3, 2});
    if (trial % 2 == 0)
      return finite_diff_check([&](const Tensor& t) { return pin(o::matmul(t, b), w); }, a);
    return finite_diff_check([&](const Tensor& t) { return pin(o::matmul(a, t), w); }, b);
  });
  add("mul_scalar", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {3, 3});
    Tensor s = randt(rng, {1}, 0.2, 2.0);
    Tensor w = randt(rng, {3, 3});
    if (trial % 2 == 0)
      return finite_diff_check([&](const Tensor& t) { return pin(o::mul_scalar(t, s), w); }, x);
    return finite_diff_check([&](const Tensor& t) { return pin(o::mul_scalar(x, t), w); }, s);
  });
  add("dot", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {5});
    Tensor other = randt(rng, {5});
    bool first = trial % 2 == 0;
    return finite_diff_check(
        [&](const Tensor& t) { return first ? o::dot(t, other) : o::dot(other, t); }, x);
  });
  add("sum", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 4});
    return finite_diff_check([](const Tensor& t) { return o::sum(t); }, x);
  });
  add("mean_all", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 4});
    return finite_diff_check([](const Tensor& t) { return o::mean_all(t); }, x);
  });
  add("mean_rows", [](Rng& rng, int) {
    Tensor x = randt(rng, {4, 3});
    Tensor w = randt(rng, {3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::mean_rows(t), w); }, x);
  });
  add("sqrt", [](Rng& rng, int) {
    Tensor x = randt(rng, {2, 3}, 0.5, 2.0);
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::sqrt_t(t), w); }, x);
  });
  add("exp", [](Rng& rng, int) {
    Tensor x = randt(rng, {2, 3});
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::exp_t(t), w); }, x);
  });
  add("tanh", [](Rng& rng, int) {
    Tensor x = randt(rng, {2, 3}, -2.0, 2.0);
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::tanh_t(t), w); }, x);
  });
  add("gelu", [](Rng& rng, int) {
    Tensor x = randt(rng, {2, 3}, -2.0, 2.0);
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::gelu(t), w); }, x);
  });
  add("clamp_min", [](Rng& rng, int) {
    Tensor x = randt_away(rng, {2, 3}, 0.1);
    Tensor w = randt(rng, {2, 3});
    return finite_diff_check([&](const Tensor& t) { return pin(o::clamp_min(t, 0.0), w); }, x);
  });
  add("softmax", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 5}, -2.0, 2.0);
    Tensor w = randt(rng, {3, 5});
    return finite_diff_check([&](const Tensor& t) { return pin(o::softmax_lastdim(t), w); }, x);
  });
  add("log_softmax", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 5}, -2.0, 2.0);
    Tensor w = randt(rng, {3, 5});
    return finite_diff_check([&](const Tensor& t) { return pin(o::log_softmax_lastdim(t), w); },
                             x);
  });
  add("layer_norm", [](Rng& rng, int trial) {
    Tensor x = randt(rng, {3, 6});
    Tensor gain = randt(rng, {6}, 0.5, 1.5);
    Tensor bias = randt(rng, {6});
    Tensor w = randt(rng, {3, 6});
    int which = trial % 3;
    if (which == 0)
      return finite_diff_check([&](const Tensor& t) { return pin(o::layer_norm(t, gain, bias), w); },
                               x);
    if (which == 1)
      return finite_diff_check([&](const Tensor& t) { return pin(o::layer_norm(x, t, bias), w); },
                               gain);
    return finite_diff_check([&](const Tensor& t) { return pin(o::layer_norm(x, gain, t), w); },
                             bias);
  });
  add("l2_normalize", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 4});
    // keep every row norm well away from the degenerate threshold
    for (int i = 0; i < 3; ++i) x.data()[static_cast<size_t>(i) * 4] += 2.0;
    Tensor w = randt(rng, {3, 4});
    return finite_diff_check([&](const Tensor& t) { return pin(o::l2_normalize(t), w); }, x);
  });
  add("det3", [](Rng& rng, int) {
    Tensor x = randt(rng, {3, 3});
    while (true) {
      NoGradGuard ng;
      TapeScope scope;
      if (std::abs(o::det3(x).item()) > 0.05) break;
      x = randt(rng, {3, 3});
    }
    return finite_diff_check([](const Tensor& t) { return o::det3(t); }, x);
  });
  add("bilinear_sample", [](Rng& rng, int trial) {
    int H = 3, W = 4, D = 2, G = 5;
    Tensor feat = randt(rng, {H * W, D});
    Tensor pts = interior_points(rng, G, H, W);
    Tensor w = randt(rng, {G, D});
    if (trial % 2 == 0)
      return finite_diff_check(
          [&](const Tensor& t) { return pin(o::bilinear_sample(t, pts, H, W), w); }, feat);
    return finite_diff_check(
        [&](const Tensor& t) { return pin(o::bilinear_sample(feat, t, H, W), w); }, pts);
  });
  add("im2col3x3", [](Rng& rng, int trial) {
    int H = 4, W = 3, C = 2;
    int stride = trial % 2 == 0 ? 1 : 2;
    int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
    Tensor x = randt(rng, {H * W, C});
    Tensor w = randt(rng, {Ho * Wo, 9 * C});
    return finite_diff_check([&](const Tensor& t) { return pin(o::im2col3x3(t, H, W, stride), w); },
                             x);
  });
  add("pairwise_euclidean", [](Rng& rng, int) {
    Tensor x = randt(rng, {4, 3});
    // spread the rows so no off-diagonal pair sits near the floor
    for (int i = 0; i < 4; ++i) x.data()[static_cast<size_t>(i) * 3] += 3.0 * i;
    // the diagonal is floored and non-differentiable; pin off-diagonals only
    Tensor w = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) w.data()[static_cast<size_t>(i) * 4 + j] = -1.0 + 2.0 * rng.uniform();
    return finite_diff_check([&](const Tensor& t) { return pin(o::pairwise_euclidean(t), w); }, x);
  });
  return cs;
}

}  // namespace gck

std::vector<GradCheckRow> gradcheck_suite(uint64_t seed, int points, double tol) {
  std::vector<gck::Check> checks = gck::core_checks();
  for (auto& c : gck::module_checks()) checks.push_back(std::move(c));
  std::vector<GradCheckRow> rows;
  rows.reserve(checks.size());
  Rng rng(seed);
  for (const auto& c : checks) {
    double worst = 0.0;
    for (int t = 0; t < points; ++t) worst = std::max(worst, c.trial(rng, t));
    rows.push_back({c.name, worst, worst < tol});
  }
  return rows;
}

}  // namespace trireid
