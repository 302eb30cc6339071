#pragma once

#include <cstdint>
#include <vector>

#include "trireid/tensor.hpp"

namespace trireid {

/// Adam with bias correction and per-group learning rates. Parameters are
/// registered once (insertion order is stable and is the checkpoint order);
/// step() consumes whatever gradients the tensors carry, treating a
/// never-touched gradient as zeros.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  int add_group(double lr);
  void add_param(int group, const Tensor& p);

  void step();
  void zero_grad();

  int64_t steps() const { return steps_; }
  void set_steps(int64_t t) { steps_ = t; }

  size_t slot_count() const { return slots_.size(); }
  const Tensor& slot_param(size_t i) const { return slots_[i].param; }
  std::vector<double>& slot_m(size_t i) { return slots_[i].m; }
  std::vector<double>& slot_v(size_t i) { return slots_[i].v; }
  const std::vector<double>& slot_m(size_t i) const { return slots_[i].m; }
  const std::vector<double>& slot_v(size_t i) const { return slots_[i].v; }

 private:
  struct Slot {
    Tensor param;
    int group;
    std::vector<double> m, v;
  };
  double beta1_, beta2_, eps_;
  std::vector<double> group_lr_;
  std::vector<Slot> slots_;
  int64_t steps_ = 0;
};

}  // namespace trireid
