#include "smgaa/tensor.hpp"

#include <sstream>

#include "smgaa/error.hpp"

namespace smgaa {

namespace {
thread_local GradTape* g_current_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > Tensor::kMaxRank)
    throw ConfigError("tensor", "rank must be 1.." + std::to_string(Tensor::kMaxRank) +
                                    ", got " + std::to_string(shape.size()));
  for (auto e : shape)
    if (e == 0) throw ConfigError("tensor", "zero extent in shape " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size())
    throw ConfigError("tensor", "shape " + shape_str(shape) + " holds " +
                                    std::to_string(shape_numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

double& Tensor::at(std::size_t b, std::size_t c, std::size_t f, std::size_t t) {
  const auto& s = impl_->shape;
  return impl_->data[((b * s[1] + c) * s[2] + f) * s[3] + t];
}

double Tensor::at(std::size_t b, std::size_t c, std::size_t f, std::size_t t) const {
  const auto& s = impl_->shape;
  return impl_->data[((b * s[1] + c) * s[2] + f) * s[3] + t];
}

double Tensor::item() const {
  if (numel() != 1)
    throw ConfigError("tensor", "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->data);
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  validate_shape(shape);
  if (shape_numel(shape) != numel())
    throw ConfigError("tensor", "cannot reshape " + shape_str(impl_->shape) + " to " +
                                    shape_str(shape));
  Tensor out(shape, impl_->data);
  return out;
}

GradTape::Scope::Scope(GradTape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }

GradTape::Scope::~Scope() { g_current_tape = previous_; }

GradTape* GradTape::current() { return g_current_tape; }

bool GradTape::should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_current_tape) return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

bool GradTape::should_record(const std::vector<Tensor>& inputs) {
  if (!g_current_tape) return false;
  for (const auto& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

void GradTape::record(Entry entry) {
  if (consumed_)
    throw TapeError("autodiff", "recording onto a tape that was already replayed; call reset()");
  entry.output.set_requires_grad(true);
  entries_.push_back(std::move(entry));
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw TapeError("autodiff", "backward requires a scalar loss, got shape " +
                                    (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  if (entries_.empty()) throw TapeError("autodiff", "backward on an empty tape");
  if (consumed_)
    throw TapeError("autodiff", "backward called twice on the same tape without reset()");
  consumed_ = true;
  replay_log_.clear();

  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
    replay_log_.push_back(it->op);
  }
}

void GradTape::reset() {
  // Release intermediate gradients so the next forward starts clean; leaf
  // gradients are kept until the caller zeroes them.
  for (auto& e : entries_) e.output.zero_grad();
  entries_.clear();
  replay_log_.clear();
  consumed_ = false;
}

}  // namespace smgaa
