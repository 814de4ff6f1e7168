#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tl {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  bool is_leaf = true;  // false once produced by a recorded op
};

// Dense row-major array of doubles with optional gradient tracking. A Tensor is a
// cheap handle; copies share storage. Values are fixed after construction except
// through mutable_data(), which optimizers and initializers use between steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  // Negative axes count from the end.
  int64_t dim(int64_t axis) const;
  int64_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // New leaf holding a copy of the values; never tracked.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

namespace autograd {

bool grad_enabled();

// Disables op recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Accumulates d(loss)/dt into t.grad for every tracked leaf t (+=) and stores the
// gradient of each tracked intermediate. The tape is cleared unless retain_tape.
void backward(const Tensor& loss, bool retain_tape = false);

// Gradients of a scalar w.r.t. the given tensors without touching any .grad
// buffer. Inputs the loss does not depend on get all-zero vectors.
std::vector<std::vector<double>> grad(const Tensor& loss, std::span<const Tensor> inputs,
                                      bool retain_tape = true);

void clear_tape();
std::size_t tape_size();

namespace detail {

// gin[k] is empty when input k does not need a gradient.
using BackwardFn =
    std::function<void(std::span<const double> gout, std::span<const std::span<double>> gin)>;

// Marks `out` as produced by an op over `inputs` and appends it to the tape when
// recording is enabled and some input requires grad. Returns `out`.
Tensor record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn);

}  // namespace detail
}  // namespace autograd

}  // namespace tl
