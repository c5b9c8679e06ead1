#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "panoda/tensor.hpp"

namespace panoda::ad {

struct Node;
using Value = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Gradients are accumulated into
// `grad` lazily; leaves with requires_grad=false never allocate one.
struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool grad_allocated = false;
  bool is_param = false;
  std::string name;  // set for parameters (checkpoint naming)
  std::vector<Value> parents;
  // Snapshot of each parent's requires_grad at graph-construction time, so a
  // module frozen while a subgraph was built stays frozen for that subgraph's
  // backward even if it is unfrozen later (the freeze/detach contract).
  std::vector<uint8_t> parent_needed;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  bool needs(size_t i) const {
    return parents[i] && parent_needed[i] && parents[i]->requires_grad;
  }

  Tensor& ensure_grad() {
    if (!grad_allocated) {
      grad = Tensor::zeros(val.shape());
      grad_allocated = true;
    }
    return grad;
  }
  void zero_grad() {
    if (grad_allocated) grad.fill(0.0);
  }
};

// Global (thread-local) switch: when disabled, ops produce value-only nodes
// with no parents or backward closures. Used for inference and benchmarks.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

Value make_leaf(Tensor t, bool requires_grad = false);
Value make_param(Tensor t, std::string name);

// Builds an op node; requires_grad is derived from the parents and the
// global switch, and the closure is dropped entirely when not needed.
Value op_node(Tensor val, std::vector<Value> parents, std::function<void(Node&)> backward,
              const char* op_name);

// Runs reverse-mode accumulation from a scalar root (size-1 tensor).
void backward(const Value& root);

// Value-copy leaf that blocks gradient flow.
Value detach(const Value& x);

}  // namespace panoda::ad
