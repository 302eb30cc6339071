#include "trireid/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "trireid/error.hpp"

namespace trireid::ops {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void need_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(t.shape()));
}

void need_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Grad buffer of t if it participates in backward, else null.
std::vector<double>* grad_of(const Tensor& t) {
  return t.requires_grad() ? &t.grad() : nullptr;
}

}  // namespace

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  // from_data rejects a numel mismatch
  Tensor out = Tensor::from_data(std::move(shape), x.data());
  active_tape().record("reshape", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
  });
  return out;
}

Tensor transpose2d(const Tensor& x) {
  need_rank(x, 2, "transpose2d");
  int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({n, m});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[static_cast<size_t>(j) * m + i] = xv[static_cast<size_t>(i) * n + j];
  active_tape().record("transpose2d", {x}, out, [x, out, m, n] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        (*gx)[static_cast<size_t>(i) * n + j] += go[static_cast<size_t>(j) * m + i];
  });
  return out;
}

Tensor row(const Tensor& x, int i) {
  need_rank(x, 2, "row");
  int m = x.dim(0), n = x.dim(1);
  if (i < 0 || i >= m)
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  std::vector<double> vals(x.data().begin() + static_cast<size_t>(i) * n,
                           x.data().begin() + static_cast<size_t>(i + 1) * n);
  Tensor out = Tensor::from_data({n}, std::move(vals));
  active_tape().record("row", {x}, out, [x, out, i, n] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (int j = 0; j < n; ++j) (*gx)[static_cast<size_t>(i) * n + j] += go[j];
  });
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  need_rank(x, 2, "gather_rows");
  int m = x.dim(0), n = x.dim(1);
  if (idx.empty()) throw ShapeError("gather_rows: empty index list");
  for (int i : idx)
    if (i < 0 || i >= m)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       shape_str(x.shape()));
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), n});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(xv.begin() + static_cast<size_t>(idx[r]) * n, n, ov.begin() + r * n);
  active_tape().record("gather_rows", {x}, out, [x, out, idx, n] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < n; ++j) (*gx)[static_cast<size_t>(idx[r]) * n + j] += go[r * n + j];
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  need_rank(x, 2, "slice_cols");
  int m = x.dim(0), n = x.dim(1);
  if (begin < 0 || end > n || begin >= end)
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") for " + shape_str(x.shape()));
  int w = end - begin;
  Tensor out = Tensor::zeros({m, w});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    std::copy_n(xv.begin() + static_cast<size_t>(i) * n + begin, w, ov.begin() + static_cast<size_t>(i) * w);
  active_tape().record("slice_cols", {x}, out, [x, out, begin, m, n, w] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        (*gx)[static_cast<size_t>(i) * n + begin + j] += go[static_cast<size_t>(i) * w + j];
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: no inputs");
  int n = -1, total = 0;
  for (const Tensor& t : xs) {
    need_rank(t, 2, "concat_rows");
    if (n < 0) n = t.dim(1);
    if (t.dim(1) != n)
      throw ShapeError("concat_rows: column mismatch " + shape_str(t.shape()));
    total += t.dim(0);
  }
  Tensor out = Tensor::zeros({total, n});
  auto& ov = out.data();
  size_t at = 0;
  for (const Tensor& t : xs) {
    std::copy(t.data().begin(), t.data().end(), ov.begin() + at);
    at += t.numel();
  }
  active_tape().record("concat_rows", xs, out, [xs, out] {
    const auto& go = out.grad();
    size_t at = 0;
    for (const Tensor& t : xs) {
      if (auto* g = grad_of(t))
        for (size_t i = 0; i < t.numel(); ++i) (*g)[i] += go[at + i];
      at += t.numel();
    }
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: no inputs");
  int m = -1, total = 0;
  for (const Tensor& t : xs) {
    need_rank(t, 2, "concat_cols");
    if (m < 0) m = t.dim(0);
    if (t.dim(0) != m) throw ShapeError("concat_cols: row mismatch " + shape_str(t.shape()));
    total += t.dim(1);
  }
  Tensor out = Tensor::zeros({m, total});
  auto& ov = out.data();
  int at = 0;
  for (const Tensor& t : xs) {
    int w = t.dim(1);
    const auto& tv = t.data();
    for (int i = 0; i < m; ++i)
      std::copy_n(tv.begin() + static_cast<size_t>(i) * w, w,
                  ov.begin() + static_cast<size_t>(i) * total + at);
    at += w;
  }
  active_tape().record("concat_cols", xs, out, [xs, out, m, total] {
    const auto& go = out.grad();
    int at = 0;
    for (const Tensor& t : xs) {
      int w = t.dim(1);
      if (auto* g = grad_of(t))
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            (*g)[static_cast<size_t>(i) * w + j] += go[static_cast<size_t>(i) * total + at + j];
      at += w;
    }
  });
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("stack_rows: no inputs");
  int n = -1;
  for (const Tensor& t : xs) {
    need_rank(t, 1, "stack_rows");
    if (n < 0) n = t.dim(0);
    if (t.dim(0) != n) throw ShapeError("stack_rows: length mismatch " + shape_str(t.shape()));
  }
  Tensor out = Tensor::zeros({static_cast<int>(xs.size()), n});
  auto& ov = out.data();
  for (size_t r = 0; r < xs.size(); ++r)
    std::copy(xs[r].data().begin(), xs[r].data().end(), ov.begin() + r * n);
  active_tape().record("stack_rows", xs, out, [xs, out, n] {
    const auto& go = out.grad();
    for (size_t r = 0; r < xs.size(); ++r)
      if (auto* g = grad_of(xs[r]))
        for (int j = 0; j < n; ++j) (*g)[j] += go[r * n + j];
  });
  return out;
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: no inputs");
  Tensor out = Tensor::zeros({static_cast<int>(xs.size())});
  auto& ov = out.data();
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].numel() != 1)
      throw ShapeError("stack_scalars: non-scalar input " + shape_str(xs[i].shape()));
    ov[i] = xs[i].data()[0];
  }
  active_tape().record("stack_scalars", xs, out, [xs, out] {
    const auto& go = out.grad();
    for (size_t i = 0; i < xs.size(); ++i)
      if (auto* g = grad_of(xs[i])) (*g)[0] += go[i];
  });
  return out;
}

Tensor select_entries(const Tensor& x, const std::vector<std::pair<int, int>>& entries) {
  need_rank(x, 2, "select_entries");
  if (entries.empty()) throw ShapeError("select_entries: empty entry list");
  int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({static_cast<int>(entries.size())});
  auto& ov = out.data();
  const auto& xv = x.data();
  for (size_t e = 0; e < entries.size(); ++e) {
    auto [i, j] = entries[e];
    if (i < 0 || i >= m || j < 0 || j >= n)
      throw ShapeError("select_entries: (" + std::to_string(i) + "," + std::to_string(j) +
                       ") out of range for " + shape_str(x.shape()));
    ov[e] = xv[static_cast<size_t>(i) * n + j];
  }
  active_tape().record("select_entries", {x}, out, [x, out, entries, n] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (size_t e = 0; e < entries.size(); ++e)
      (*gx)[static_cast<size_t>(entries[e].first) * n + entries[e].second] += go[e];
  });
  return out;
}

Tensor mask_rows(const Tensor& x, const std::vector<double>& mask) {
  need_rank(x, 2, "mask_rows");
  int m = x.dim(0), n = x.dim(1);
  if (static_cast<int>(mask.size()) != m)
    throw ShapeError("mask_rows: mask length " + std::to_string(mask.size()) + " vs " +
                     shape_str(x.shape()));
  Tensor out = Tensor::zeros({m, n});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<size_t>(i) * n + j] = mask[i] * xv[static_cast<size_t>(i) * n + j];
  active_tape().record("mask_rows", {x}, out, [x, out, mask, m, n] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        (*gx)[static_cast<size_t>(i) * n + j] += mask[i] * go[static_cast<size_t>(i) * n + j];
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  need_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  active_tape().record("add", {a, b}, out, [a, b, out] {
    const auto& go = out.grad();
    if (auto* g = grad_of(a))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i];
    if (auto* g = grad_of(b))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i];
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  need_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  active_tape().record("sub", {a, b}, out, [a, b, out] {
    const auto& go = out.grad();
    if (auto* g = grad_of(a))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i];
    if (auto* g = grad_of(b))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] -= go[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  need_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  active_tape().record("mul", {a, b}, out, [a, b, out] {
    const auto& go = out.grad();
    const auto& av = a.data();
    const auto& bv = b.data();
    if (auto* g = grad_of(a))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i] * bv[i];
    if (auto* g = grad_of(b))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i] * av[i];
  });
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  need_rank(x, 2, "add_rowvec");
  need_rank(v, 1, "add_rowvec");
  int m = x.dim(0), n = x.dim(1);
  if (v.dim(0) != n)
    throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
  Tensor out = Tensor::zeros({m, n});
  const auto& xv = x.data();
  const auto& vv = v.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<size_t>(i) * n + j] = xv[static_cast<size_t>(i) * n + j] + vv[j];
  active_tape().record("add_rowvec", {x, v}, out, [x, v, out, m, n] {
    const auto& go = out.grad();
    if (auto* g = grad_of(x))
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i];
    if (auto* g = grad_of(v))
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*g)[j] += go[static_cast<size_t>(i) * n + j];
  });
  return out;
}

Tensor add_const(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + c;
  active_tape().record("add_const", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
  });
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = c * xv[i];
  active_tape().record("scale", {x}, out, [x, out, c] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (size_t i = 0; i < go.size(); ++i) (*gx)[i] += c * go[i];
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  need_rank(a, 2, "matmul");
  need_rank(b, 2, "matmul");
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = av[static_cast<size_t>(i) * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j)
        ov[static_cast<size_t>(i) * n + j] += aip * bv[static_cast<size_t>(p) * n + j];
    }
  active_tape().record("matmul", {a, b}, out, [a, b, out, m, k, n] {
    const auto& go = out.grad();
    const auto& av = a.data();
    const auto& bv = b.data();
    if (auto* g = grad_of(a))  // dA = G B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j)
            s += go[static_cast<size_t>(i) * n + j] * bv[static_cast<size_t>(p) * n + j];
          (*g)[static_cast<size_t>(i) * k + p] += s;
        }
    if (auto* g = grad_of(b))  // dB = A^T G
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i)
            s += av[static_cast<size_t>(i) * k + p] * go[static_cast<size_t>(i) * n + j];
          (*g)[static_cast<size_t>(p) * n + j] += s;
        }
  });
  return out;
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar: scales by " + shape_str(s.shape()));
  double sv = s.data()[0];
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = sv * xv[i];
  active_tape().record("mul_scalar", {x, s}, out, [x, s, out] {
    const auto& go = out.grad();
    const auto& xv = x.data();
    if (auto* g = grad_of(x)) {
      double sv = s.data()[0];
      for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i] * sv;
    }
    if (auto* g = grad_of(s)) {
      double acc = 0.0;
      for (size_t i = 0; i < go.size(); ++i) acc += go[i] * xv[i];
      (*g)[0] += acc;
    }
  });
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  need_rank(a, 1, "dot");
  need_same_shape(a, b, "dot");
  double s = 0.0;
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  Tensor out = Tensor::scalar(s);
  active_tape().record("dot", {a, b}, out, [a, b, out] {
    double go = out.grad()[0];
    const auto& av = a.data();
    const auto& bv = b.data();
    if (auto* g = grad_of(a))
      for (size_t i = 0; i < av.size(); ++i) (*g)[i] += go * bv[i];
    if (auto* g = grad_of(b))
      for (size_t i = 0; i < bv.size(); ++i) (*g)[i] += go * av[i];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  const auto& xv = x.data();
  Tensor out = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0));
  active_tape().record("sum", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    double go = out.grad()[0];
    for (auto& g : *gx) g += go;
  });
  return out;
}

Tensor mean_all(const Tensor& x) {
  const auto& xv = x.data();
  double inv = 1.0 / static_cast<double>(xv.size());
  Tensor out = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0) * inv);
  active_tape().record("mean_all", {x}, out, [x, out, inv] {
    auto* gx = grad_of(x);
    double go = out.grad()[0] * inv;
    for (auto& g : *gx) g += go;
  });
  return out;
}

Tensor mean_rows(const Tensor& x) {
  need_rank(x, 2, "mean_rows");
  int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({n});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[j] += xv[static_cast<size_t>(i) * n + j];
  double inv = 1.0 / m;
  for (int j = 0; j < n; ++j) ov[j] *= inv;
  active_tape().record("mean_rows", {x}, out, [x, out, m, n, inv] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) (*gx)[static_cast<size_t>(i) * n + j] += go[j] * inv;
  });
  return out;
}

Tensor sqrt_t(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) {
    if (xv[i] < 0.0) throw ValueError("sqrt_t: negative input " + std::to_string(xv[i]));
    ov[i] = std::sqrt(xv[i]);
  }
  active_tape().record("sqrt_t", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& ov = out.data();
    for (size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] * 0.5 / ov[i];
  });
  return out;
}

Tensor exp_t(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::exp(xv[i]);
  active_tape().record("exp_t", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& ov = out.data();
    for (size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] * ov[i];
  });
  return out;
}

Tensor tanh_t(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  active_tape().record("tanh_t", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& ov = out.data();
    for (size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] * (1.0 - ov[i] * ov[i]);
  });
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i)
    ov[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  active_tape().record("gelu", {x}, out, [x, out] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& xv = x.data();
    for (size_t i = 0; i < go.size(); ++i) {
      double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
      (*gx)[i] += go[i] * (cdf + xv[i] * pdf);
    }
  });
  return out;
}

Tensor clamp_min(const Tensor& x, double lo) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::max(xv[i], lo);
  active_tape().record("clamp_min", {x}, out, [x, out, lo] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& xv = x.data();
    for (size_t i = 0; i < go.size(); ++i)
      if (xv[i] > lo) (*gx)[i] += go[i];
  });
  return out;
}

namespace {

// Slice view bookkeeping shared by the last-dim ops: rank-1 is one slice,
// rank-2 is one slice per row.
void last_dim_slices(const Tensor& x, const char* op, int& slices, int& width) {
  if (x.rank() == 1) {
    slices = 1;
    width = x.dim(0);
  } else if (x.rank() == 2) {
    slices = x.dim(0);
    width = x.dim(1);
  } else {
    throw ShapeError(std::string(op) + ": rank-1 or rank-2 input required, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) {
  int slices, width;
  last_dim_slices(x, "softmax_lastdim", slices, width);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int s = 0; s < slices; ++s) {
    size_t base = static_cast<size_t>(s) * width;
    double mx = xv[base];
    for (int j = 1; j < width; ++j) mx = std::max(mx, xv[base + j]);
    double z = 0.0;
    for (int j = 0; j < width; ++j) {
      ov[base + j] = std::exp(xv[base + j] - mx);
      z += ov[base + j];
    }
    for (int j = 0; j < width; ++j) ov[base + j] /= z;
  }
  active_tape().record("softmax_lastdim", {x}, out, [x, out, slices, width] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& ov = out.data();
    for (int s = 0; s < slices; ++s) {
      size_t base = static_cast<size_t>(s) * width;
      double inner = 0.0;
      for (int j = 0; j < width; ++j) inner += go[base + j] * ov[base + j];
      for (int j = 0; j < width; ++j)
        (*gx)[base + j] += ov[base + j] * (go[base + j] - inner);
    }
  });
  return out;
}

Tensor log_softmax_lastdim(const Tensor& x) {
  int slices, width;
  last_dim_slices(x, "log_softmax_lastdim", slices, width);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int s = 0; s < slices; ++s) {
    size_t base = static_cast<size_t>(s) * width;
    double mx = xv[base];
    for (int j = 1; j < width; ++j) mx = std::max(mx, xv[base + j]);
    double z = 0.0;
    for (int j = 0; j < width; ++j) z += std::exp(xv[base + j] - mx);
    double lz = mx + std::log(z);
    for (int j = 0; j < width; ++j) ov[base + j] = xv[base + j] - lz;
  }
  active_tape().record("log_softmax_lastdim", {x}, out, [x, out, slices, width] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& ov = out.data();
    for (int s = 0; s < slices; ++s) {
      size_t base = static_cast<size_t>(s) * width;
      double gsum = 0.0;
      for (int j = 0; j < width; ++j) gsum += go[base + j];
      for (int j = 0; j < width; ++j)
        (*gx)[base + j] += go[base + j] - std::exp(ov[base + j]) * gsum;
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  int slices, width;
  last_dim_slices(x, "layer_norm", slices, width);
  need_rank(gain, 1, "layer_norm");
  need_rank(bias, 1, "layer_norm");
  if (gain.dim(0) != width || bias.dim(0) != width)
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " vs slice width " + std::to_string(width));
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  auto& ov = out.data();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(slices);
  for (int s = 0; s < slices; ++s) {
    size_t base = static_cast<size_t>(s) * width;
    double mu = 0.0;
    for (int j = 0; j < width; ++j) mu += xv[base + j];
    mu /= width;
    double var = 0.0;
    for (int j = 0; j < width; ++j) {
      double d = xv[base + j] - mu;
      var += d * d;
    }
    var /= width;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[s] = is;
    for (int j = 0; j < width; ++j) {
      double xh = (xv[base + j] - mu) * is;
      (*xhat)[base + j] = xh;
      ov[base + j] = xh * gv[j] + bv[j];
    }
  }
  active_tape().record("layer_norm", {x, gain, bias}, out,
                       [x, gain, bias, out, slices, width, xhat, inv_std] {
    const auto& go = out.grad();
    const auto& gv = gain.data();
    auto* gx = grad_of(x);
    auto* gg = grad_of(gain);
    auto* gb = grad_of(bias);
    for (int s = 0; s < slices; ++s) {
      size_t base = static_cast<size_t>(s) * width;
      if (gg || gb)
        for (int j = 0; j < width; ++j) {
          if (gg) (*gg)[j] += go[base + j] * (*xhat)[base + j];
          if (gb) (*gb)[j] += go[base + j];
        }
      if (gx) {
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < width; ++j) {
          double dxh = go[base + j] * gv[j];
          m1 += dxh;
          m2 += dxh * (*xhat)[base + j];
        }
        m1 /= width;
        m2 /= width;
        for (int j = 0; j < width; ++j) {
          double dxh = go[base + j] * gv[j];
          (*gx)[base + j] += (dxh - m1 - (*xhat)[base + j] * m2) * (*inv_std)[s];
        }
      }
    }
  });
  return out;
}

Tensor l2_normalize(const Tensor& x) {
  int slices, width;
  last_dim_slices(x, "l2_normalize", slices, width);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  auto norms = std::make_shared<std::vector<double>>(slices);
  for (int s = 0; s < slices; ++s) {
    size_t base = static_cast<size_t>(s) * width;
    double sq = 0.0;
    for (int j = 0; j < width; ++j) sq += xv[base + j] * xv[base + j];
    double norm = std::sqrt(sq);
    if (norm < 1e-12)
      throw ValueError("l2_normalize: degenerate input with norm " + std::to_string(norm));
    (*norms)[s] = norm;
    for (int j = 0; j < width; ++j) ov[base + j] = xv[base + j] / norm;
  }
  active_tape().record("l2_normalize", {x}, out, [x, out, slices, width, norms] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& ov = out.data();
    for (int s = 0; s < slices; ++s) {
      size_t base = static_cast<size_t>(s) * width;
      double inner = 0.0;
      for (int j = 0; j < width; ++j) inner += go[base + j] * ov[base + j];
      for (int j = 0; j < width; ++j)
        (*gx)[base + j] += (go[base + j] - ov[base + j] * inner) / (*norms)[s];
    }
  });
  return out;
}

Tensor det3(const Tensor& g) {
  need_rank(g, 2, "det3");
  if (g.dim(0) != 3 || g.dim(1) != 3)
    throw ShapeError("det3: need a 3x3 matrix, got " + shape_str(g.shape()));
  const auto& v = g.data();
  double a = v[0], b = v[1], c = v[2];
  double d = v[3], e = v[4], f = v[5];
  double gg = v[6], h = v[7], i = v[8];
  double det = a * (e * i - f * h) - b * (d * i - f * gg) + c * (d * h - e * gg);
  Tensor out = Tensor::scalar(det);
  active_tape().record("det3", {g}, out, [g, out] {
    auto* gx = grad_of(g);
    double go = out.grad()[0];
    const auto& v = g.data();
    double a = v[0], b = v[1], c = v[2];
    double d = v[3], e = v[4], f = v[5];
    double gg = v[6], h = v[7], i = v[8];
    // cofactor matrix: d(det)/d(entry)
    (*gx)[0] += go * (e * i - f * h);
    (*gx)[1] += go * -(d * i - f * gg);
    (*gx)[2] += go * (d * h - e * gg);
    (*gx)[3] += go * -(b * i - c * h);
    (*gx)[4] += go * (a * i - c * gg);
    (*gx)[5] += go * -(a * h - b * gg);
    (*gx)[6] += go * (b * f - c * e);
    (*gx)[7] += go * -(a * f - c * d);
    (*gx)[8] += go * (a * e - b * d);
  });
  return out;
}

namespace {

struct SamplePoint {
  int r0, r1, c0, c1;
  double wr, wc;
  bool in_r, in_c;  // derivative wrt the coordinate survives the clamp
};

SamplePoint locate(double ynorm, double xnorm, int H, int W) {
  SamplePoint p;
  double py = (ynorm + 1.0) * 0.5 * (H - 1);
  double px = (xnorm + 1.0) * 0.5 * (W - 1);
  double pyc = std::min(std::max(py, 0.0), static_cast<double>(H - 1));
  double pxc = std::min(std::max(px, 0.0), static_cast<double>(W - 1));
  p.in_r = py > 0.0 && py < static_cast<double>(H - 1);
  p.in_c = px > 0.0 && px < static_cast<double>(W - 1);
  p.r0 = std::min(static_cast<int>(pyc), H - 1);
  p.c0 = std::min(static_cast<int>(pxc), W - 1);
  p.r1 = std::min(p.r0 + 1, H - 1);
  p.c1 = std::min(p.c0 + 1, W - 1);
  p.wr = pyc - p.r0;
  p.wc = pxc - p.c0;
  return p;
}

}  // namespace

Tensor bilinear_sample(const Tensor& feat, const Tensor& points, int H, int W) {
  need_rank(feat, 2, "bilinear_sample");
  need_rank(points, 2, "bilinear_sample");
  if (H < 1 || W < 1 || feat.dim(0) != H * W)
    throw ShapeError("bilinear_sample: feat " + shape_str(feat.shape()) + " vs grid " +
                     std::to_string(H) + "x" + std::to_string(W));
  if (points.dim(1) != 2)
    throw ShapeError("bilinear_sample: points must be [G,2], got " + shape_str(points.shape()));
  int G = points.dim(0), D = feat.dim(1);
  Tensor out = Tensor::zeros({G, D});
  const auto& fv = feat.data();
  const auto& pv = points.data();
  auto& ov = out.data();
  for (int g = 0; g < G; ++g) {
    SamplePoint p = locate(pv[2 * g], pv[2 * g + 1], H, W);
    double w00 = (1 - p.wr) * (1 - p.wc), w01 = (1 - p.wr) * p.wc;
    double w10 = p.wr * (1 - p.wc), w11 = p.wr * p.wc;
    size_t i00 = (static_cast<size_t>(p.r0) * W + p.c0) * D;
    size_t i01 = (static_cast<size_t>(p.r0) * W + p.c1) * D;
    size_t i10 = (static_cast<size_t>(p.r1) * W + p.c0) * D;
    size_t i11 = (static_cast<size_t>(p.r1) * W + p.c1) * D;
    for (int d = 0; d < D; ++d)
      ov[static_cast<size_t>(g) * D + d] =
          w00 * fv[i00 + d] + w01 * fv[i01 + d] + w10 * fv[i10 + d] + w11 * fv[i11 + d];
  }
  active_tape().record("bilinear_sample", {feat, points}, out, [feat, points, out, H, W, G, D] {
    const auto& go = out.grad();
    const auto& fv = feat.data();
    const auto& pv = points.data();
    auto* gf = grad_of(feat);
    auto* gp = grad_of(points);
    for (int g = 0; g < G; ++g) {
      SamplePoint p = locate(pv[2 * g], pv[2 * g + 1], H, W);
      size_t i00 = (static_cast<size_t>(p.r0) * W + p.c0) * D;
      size_t i01 = (static_cast<size_t>(p.r0) * W + p.c1) * D;
      size_t i10 = (static_cast<size_t>(p.r1) * W + p.c0) * D;
      size_t i11 = (static_cast<size_t>(p.r1) * W + p.c1) * D;
      double w00 = (1 - p.wr) * (1 - p.wc), w01 = (1 - p.wr) * p.wc;
      double w10 = p.wr * (1 - p.wc), w11 = p.wr * p.wc;
      double dr = 0.0, dc = 0.0;
      for (int d = 0; d < D; ++d) {
        double gd = go[static_cast<size_t>(g) * D + d];
        if (gf) {
          (*gf)[i00 + d] += gd * w00;
          (*gf)[i01 + d] += gd * w01;
          (*gf)[i10 + d] += gd * w10;
          (*gf)[i11 + d] += gd * w11;
        }
        if (gp) {
          dr += gd * ((1 - p.wc) * (fv[i10 + d] - fv[i00 + d]) + p.wc * (fv[i11 + d] - fv[i01 + d]));
          dc += gd * ((1 - p.wr) * (fv[i01 + d] - fv[i00 + d]) + p.wr * (fv[i11 + d] - fv[i10 + d]));
        }
      }
      if (gp) {
        if (p.in_r) (*gp)[2 * g] += dr * 0.5 * (H - 1);
        if (p.in_c) (*gp)[2 * g + 1] += dc * 0.5 * (W - 1);
      }
    }
  });
  return out;
}

Tensor im2col3x3(const Tensor& x, int H, int W, int stride) {
  need_rank(x, 2, "im2col3x3");
  if (H < 1 || W < 1 || x.dim(0) != H * W)
    throw ShapeError("im2col3x3: input " + shape_str(x.shape()) + " vs grid " + std::to_string(H) +
                     "x" + std::to_string(W));
  if (stride < 1) throw ValueError("im2col3x3: stride must be >= 1");
  int C = x.dim(1);
  int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  Tensor out = Tensor::zeros({Ho * Wo, 9 * C});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int di = 0; di < 3; ++di)
        for (int dj = 0; dj < 3; ++dj) {
          int iy = oy * stride + di - 1, ix = ox * stride + dj - 1;
          if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
          size_t src = (static_cast<size_t>(iy) * W + ix) * C;
          size_t dst = (static_cast<size_t>(oy) * Wo + ox) * (9 * C) + (di * 3 + dj) * C;
          std::copy_n(xv.begin() + src, C, ov.begin() + dst);
        }
  active_tape().record("im2col3x3", {x}, out, [x, out, H, W, stride, C, Ho, Wo] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        for (int di = 0; di < 3; ++di)
          for (int dj = 0; dj < 3; ++dj) {
            int iy = oy * stride + di - 1, ix = ox * stride + dj - 1;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            size_t src = (static_cast<size_t>(iy) * W + ix) * C;
            size_t dst = (static_cast<size_t>(oy) * Wo + ox) * (9 * C) + (di * 3 + dj) * C;
            for (int c = 0; c < C; ++c) (*gx)[src + c] += go[dst + c];
          }
  });
  return out;
}

Tensor pairwise_euclidean(const Tensor& x, double eps) {
  need_rank(x, 2, "pairwise_euclidean");
  int B = x.dim(0), E = x.dim(1);
  Tensor out = Tensor::zeros({B, B});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double sq = 0.0;
      for (int k = 0; k < E; ++k) {
        double d = xv[static_cast<size_t>(i) * E + k] - xv[static_cast<size_t>(j) * E + k];
        sq += d * d;
      }
      ov[static_cast<size_t>(i) * B + j] = std::sqrt(std::max(sq, eps));
    }
  active_tape().record("pairwise_euclidean", {x}, out, [x, out, B, E, eps] {
    auto* gx = grad_of(x);
    const auto& go = out.grad();
    const auto& xv = x.data();
    const auto& ov = out.data();
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j) {
        double sq = 0.0;
        for (int k = 0; k < E; ++k) {
          double d = xv[static_cast<size_t>(i) * E + k] - xv[static_cast<size_t>(j) * E + k];
          sq += d * d;
        }
        if (sq <= eps) continue;  // floored entry, flat region
        double coeff = go[static_cast<size_t>(i) * B + j] / ov[static_cast<size_t>(i) * B + j];
        if (coeff == 0.0) continue;
        for (int k = 0; k < E; ++k) {
          double d = xv[static_cast<size_t>(i) * E + k] - xv[static_cast<size_t>(j) * E + k];
          (*gx)[static_cast<size_t>(i) * E + k] += coeff * d;
          (*gx)[static_cast<size_t>(j) * E + k] -= coeff * d;
        }
      }
  });
  return out;
}

std::vector<int> top_k_indices(const Tensor& scores, int k) {
  const Tensor& s = scores;
  int n;
  if (s.rank() == 1)
    n = s.dim(0);
  else if (s.rank() == 2 && s.dim(0) == 1)
    n = s.dim(1);
  else
    throw ShapeError("top_k_indices: need a vector or single-row matrix, got " +
                     shape_str(s.shape()));
  if (k < 1 || k > n)
    throw ValueError("top_k_indices: k=" + std::to_string(k) + " out of range for n=" +
                     std::to_string(n));
  const auto& v = s.data();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&v](int a, int b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;  // ties go to the smaller index
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace trireid::ops
