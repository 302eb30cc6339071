#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace trireid {

std::string shape_str(const std::vector<int>& shape);

/// Dense 64-bit float array in row-major order. Copying a Tensor copies the
/// handle; data and grad are shared between copies, which is what lets tape
/// closures and optimizer state refer to the same storage as the caller.
/// Scalars are represented as shape {1}.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor ones(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor identity(int n);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  size_t numel() const;

  std::vector<double>& data() const;
  double item() const;  // requires numel() == 1
  double operator()(int i) const;
  double operator()(int i, int j) const;
  double operator()(int i, int j, int k) const;

  bool requires_grad() const;
  void set_requires_grad(bool b) const;
  /// Gradient buffer, lazily allocated to zeros. Requires requires_grad().
  std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad() const;

  /// Deep copy of the values (never the grad).
  Tensor clone(bool requires_grad = false) const;
  Tensor detach() const { return clone(false); }

  size_t id() const;

 private:
  struct Data;
  std::shared_ptr<Data> impl_;
  explicit Tensor(std::shared_ptr<Data> d) : impl_(std::move(d)) {}
};

bool grad_enabled();

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct TapeNode {
  const char* op;
  std::vector<size_t> input_ids;
  size_t output_id;
  std::function<void()> backward;
};

/// Records forward operations in execution order (hence topologically sorted)
/// and replays them in reverse to accumulate gradients. One tape per thread;
/// ops append to the active tape whenever grad mode is on and an input
/// requires grad.
class Tape {
 public:
  void record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
              std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape backward. Gradients
  /// accumulate (+=) across fan-out. loss must be a scalar recorded on this
  /// tape. The tape is cleared afterwards; a second backward needs a fresh
  /// forward pass.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }
  void swap_nodes(std::vector<TapeNode>& other) { nodes_.swap(other); }

 private:
  std::vector<TapeNode> nodes_;
};

Tape& active_tape();

/// Backward on the thread's active tape.
void backward(const Tensor& loss);

/// Swaps a fresh tape in for the current thread; restores the previous one on
/// destruction. Used by gradient checking to isolate graphs.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  std::vector<TapeNode> saved_;
};

}  // namespace trireid
