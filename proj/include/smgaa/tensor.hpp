#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace smgaa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows into the tensor
  bool requires_grad = false;
};

// Dense row-major float64 tensor of rank 1..4. Copies are shallow: two
// `Tensor` handles may refer to the same storage, as with parameters that are
// referenced from a ParameterSet and from the graph being evaluated.
class Tensor {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }

  // 4-D element access in (b, c, f, t) order.
  double& at(std::size_t b, std::size_t c, std::size_t f, std::size_t t);
  double at(std::size_t b, std::size_t c, std::size_t f, std::size_t t) const;

  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Allocates a zero gradient buffer on first use. Gradient state belongs to
  // the shared storage, so this is available through const handles.
  std::span<double> grad_buffer() const;
  void zero_grad() const { impl_->grad.clear(); }

  // Deep copy with no gradient history.
  Tensor clone() const;
  // Copy of the values under a different shape of equal numel.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of executed differentiable operations. Operators append an
// entry while a tape is installed on the calling thread via `GradTape::Scope`;
// `backward` replays the entries in exact reverse order. Without an installed
// tape, operators record nothing, which is the inference path.
class GradTape {
 public:
  using Backward = std::function<void()>;

  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    Backward backward;
  };

  class Scope {
   public:
    explicit Scope(GradTape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* previous_;
  };

  static GradTape* current();

  // True when an operator producing an output from `inputs` must be recorded.
  static bool should_record(std::initializer_list<const Tensor*> inputs);
  static bool should_record(const std::vector<Tensor>& inputs);

  void record(Entry entry);
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  // Operator names in the order their adjoints ran during the last backward.
  const std::vector<std::string>& replay_log() const { return replay_log_; }

 private:
  std::vector<Entry> entries_;
  std::vector<std::string> replay_log_;
  bool consumed_ = false;
};

}  // namespace smgaa
