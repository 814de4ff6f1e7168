#include <unordered_map>

#include "tl/errors.hpp"
#include "tl/tensor.hpp"

namespace tl::autograd {
namespace {

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  detail::BackwardFn fn;
};

thread_local bool g_enabled = true;
thread_local std::vector<Node> g_tape;

using GradMap = std::unordered_map<const TensorImpl*, std::vector<double>>;

std::vector<double>& slot(GradMap& grads, const TensorImpl* t) {
  auto [it, inserted] = grads.try_emplace(t);
  if (inserted) it->second.assign(t->data.size(), 0.0);
  return it->second;
}

// Reverse sweep over the tape from the loss; returns gradients keyed by tensor.
GradMap sweep(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad())
    throw ContractError("backward: loss is not connected to any tensor that requires grad");

  GradMap grads;
  slot(grads, loss.impl())[0] = 1.0;
  std::vector<std::span<double>> gin;
  for (auto node = g_tape.rbegin(); node != g_tape.rend(); ++node) {
    auto found = grads.find(node->output.get());
    if (found == grads.end()) continue;
    gin.assign(node->inputs.size(), {});
    for (std::size_t k = 0; k < node->inputs.size(); ++k)
      if (node->inputs[k]->requires_grad) gin[k] = slot(grads, node->inputs[k].get());
    // slot() may rehash; look the output up again.
    const std::vector<double>& gout = grads.find(node->output.get())->second;
    node->fn(gout, gin);
  }
  return grads;
}

}  // namespace

bool grad_enabled() { return g_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_enabled) { g_enabled = false; }
NoGradGuard::~NoGradGuard() { g_enabled = previous_; }

void backward(const Tensor& loss, bool retain_tape) {
  GradMap grads = sweep(loss);
  // Leaves accumulate; intermediates receive this pass's gradient.
  for (auto& [impl_ptr, g] : grads) {
    auto* impl = const_cast<TensorImpl*>(impl_ptr);
    if (!impl->requires_grad) continue;
    if (impl->is_leaf) {
      if (impl->grad.empty()) {
        impl->grad = std::move(g);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
      }
    } else {
      impl->grad = std::move(g);
    }
  }
  if (!retain_tape) g_tape.clear();
}

std::vector<std::vector<double>> grad(const Tensor& loss, std::span<const Tensor> inputs,
                                      bool retain_tape) {
  GradMap grads = sweep(loss);
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    auto it = grads.find(t.impl());
    if (it != grads.end()) {
      out.push_back(std::move(it->second));
    } else {
      out.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
  }
  if (!retain_tape) g_tape.clear();
  return out;
}

void clear_tape() { g_tape.clear(); }
std::size_t tape_size() { return g_tape.size(); }

namespace detail {

Tensor record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn) {
  if (!g_enabled) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.impl()->requires_grad = true;
  out.impl()->is_leaf = false;
  Node node;
  node.inputs.reserve(inputs.size());
  for (Tensor& t : inputs) node.inputs.push_back(t.impl_ptr());
  node.output = out.impl_ptr();
  node.fn = std::move(fn);
  g_tape.push_back(std::move(node));
  return out;
}

}  // namespace detail
}  // namespace tl::autograd
