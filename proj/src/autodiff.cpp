#include "panoda/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

namespace panoda::ad {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Value make_leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad && grad_enabled();
  return n;
}

Value make_param(Tensor t, std::string name) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = true;
  n->is_param = true;
  n->name = std::move(name);
  n->op = "param";
  return n;
}

Value op_node(Tensor val, std::vector<Value> parents, std::function<void(Node&)> backward,
              const char* op_name) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->op = op_name;
  bool need = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        need = true;
        break;
      }
  }
  if (need) {
    n->requires_grad = true;
    n->parent_needed.reserve(parents.size());
    for (const auto& p : parents) n->parent_needed.push_back(p && p->requires_grad ? 1 : 0);
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return n;
}

void backward(const Value& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->val.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS for the topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.n->parents.size()) {
      const size_t i = f.next_child++;
      Node* c = f.n->parents[i].get();
      if (c && f.n->parent_needed[i] && c->requires_grad && !visited.count(c)) {
        visited.insert(c);
        stack.push_back({c, 0});
      }
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad_allocated) n->backward_fn(*n);
  }
}

Value detach(const Value& x) {
  auto n = std::make_shared<Node>();
  n->val = x->val;
  n->op = "detach";
  return n;
}

}  // namespace panoda::ad
