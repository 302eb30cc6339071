#include "trireid/tensor.hpp"

#include <atomic>
#include <sstream>

#include "trireid/error.hpp"

namespace trireid {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
std::atomic<size_t> next_tensor_id{1};

size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dim");
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}
}  // namespace

struct Tensor::Data {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accessed
  bool requires_grad = false;
  size_t id = 0;
};

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  size_t n = checked_numel(shape);
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->values.assign(n, value);
  d->requires_grad = requires_grad;
  d->id = next_tensor_id.fetch_add(1);
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values,
                         bool requires_grad) {
  size_t n = checked_numel(shape);
  if (values.size() != n)
    throw ShapeError("from_data: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  d->id = next_tensor_id.fetch_add(1);
  return Tensor(std::move(d));
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.data()[static_cast<size_t>(i) * n + i] = 1.0;
  return t;
}

const std::vector<int>& Tensor::shape() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  return impl_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("dim axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

size_t Tensor::numel() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  return impl_->values.size();
}

std::vector<double>& Tensor::data() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::operator()(int i) const {
  if (rank() != 1) throw ShapeError("1-index access on tensor of shape " + shape_str(shape()));
  return impl_->values.at(static_cast<size_t>(i));
}

double Tensor::operator()(int i, int j) const {
  if (rank() != 2) throw ShapeError("2-index access on tensor of shape " + shape_str(shape()));
  return impl_->values.at(static_cast<size_t>(i) * dim(1) + j);
}

double Tensor::operator()(int i, int j, int k) const {
  if (rank() != 3) throw ShapeError("3-index access on tensor of shape " + shape_str(shape()));
  return impl_->values.at((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k);
}

bool Tensor::requires_grad() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  return impl_->requires_grad;
}

void Tensor::set_requires_grad(bool b) const {
  if (!impl_) throw ValueError("use of undefined tensor");
  impl_->requires_grad = b;
}

std::vector<double>& Tensor::grad() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  if (!impl_->requires_grad) throw ValueError("grad() on tensor without requires_grad");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

bool Tensor::has_grad() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  return !impl_->grad.empty();
}

void Tensor::zero_grad() const {
  if (!impl_) throw ValueError("use of undefined tensor");
  if (!impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  if (!impl_) throw ValueError("clone of undefined tensor");
  return from_data(impl_->shape, impl_->values, requires_grad);
}

size_t Tensor::id() const {
  if (!impl_) throw ValueError("id of undefined tensor");
  return impl_->id;
}

namespace {
thread_local Tape the_tape;
thread_local bool grad_mode = true;
}  // namespace

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : prev_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = prev_; }

Tape& active_tape() { return the_tape; }

void Tape::record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
                  std::function<void()> backward_fn) {
  if (!grad_mode) return;
  bool any = false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) {
      any = true;
      break;
    }
  if (!any) return;
  output.set_requires_grad(true);
  TapeNode node;
  node.op = op;
  node.input_ids.reserve(inputs.size());
  for (const Tensor& t : inputs) node.input_ids.push_back(t.id());
  node.output_id = output.id();
  node.backward = std::move(backward_fn);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ValueError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw ValueError("backward on a loss that does not require grad");
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  // consume the graph: replaying these nodes against a later loss would leak
  // stale contributions into shared parameters
  nodes_.clear();
}

void backward(const Tensor& loss) { active_tape().backward(loss); }

TapeScope::TapeScope() { the_tape.swap_nodes(saved_); }

TapeScope::~TapeScope() { the_tape.swap_nodes(saved_); }

}  // namespace trireid
