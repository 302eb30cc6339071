#include "trireid/adam.hpp"

#include <cmath>

#include "trireid/error.hpp"

namespace trireid {

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

int Adam::add_group(double lr) {
  if (lr <= 0.0) throw ValueError("Adam: learning rate must be positive");
  group_lr_.push_back(lr);
  return static_cast<int>(group_lr_.size()) - 1;
}

void Adam::add_param(int group, const Tensor& p) {
  if (group < 0 || group >= static_cast<int>(group_lr_.size()))
    throw ValueError("Adam: unknown group " + std::to_string(group));
  if (!p.requires_grad()) throw ValueError("Adam: parameter must require grad");
  Slot s;
  s.param = p;
  s.group = group;
  s.m.assign(p.numel(), 0.0);
  s.v.assign(p.numel(), 0.0);
  slots_.push_back(std::move(s));
}

void Adam::step() {
  ++steps_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Slot& s : slots_) {
    double lr = group_lr_[s.group];
    auto& pv = s.param.data();
    const bool has = s.param.has_grad();
    const std::vector<double>* gv = has ? &s.param.grad() : nullptr;
    for (size_t i = 0; i < pv.size(); ++i) {
      double g = has ? (*gv)[i] : 0.0;
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

}  // namespace trireid
