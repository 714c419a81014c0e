#include "capsrep/autograd.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>

namespace capsrep::nd {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
}

void check_finite(const Tensor& t, const char* op) {
  const float* p = t.data();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw NumericError(std::string(op) + ": non-finite value at flat index " +
                         std::to_string(i));
  }
}

void Node::accumulate(const Tensor& g) {
  if (!has_grad) {
    if (!g.same_shape(value) ) {
      throw DimError(std::string(op) + ": gradient shape " +
                     shape_str(g.shape()) + " does not match value shape " +
                     shape_str(value.shape()));
    }
    grad = g;
    has_grad = true;
    return;
  }
  float* a = grad.mutable_data();
  const float* b = g.data();
  const std::int64_t n = grad.numel();
  for (std::int64_t i = 0; i < n; ++i) a[i] += b[i];
}

Var::Var(Tensor value, bool requires_grad, const char* op) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->op = op;
  node_->id = g_next_id.fetch_add(1);
}

Tensor Var::grad() const {
  if (!node_->has_grad) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::assign_value(Tensor v) const {
  if (!node_->parents.empty())
    throw ContractError("assign_value: only leaf nodes may be overwritten");
  if (!v.same_shape(node_->value))
    throw DimError("assign_value: shape " + shape_str(v.shape()) +
                   " does not match " + shape_str(node_->value.shape()));
  node_->value = std::move(v);
}

Var parameter(Tensor init) { return Var(std::move(init), true, "parameter"); }

Var constant(Tensor value) { return Var(std::move(value), false, "constant"); }

Var make_op(Tensor value, std::vector<Var> parents, const char* op,
            std::function<void(const Tensor&)> backward) {
  check_finite(value, op);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  Var out(std::move(value), needs, op);
  if (needs) {
    auto n = out.node();
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return out;
}

void backward(const Var& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss");
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS over grad-requiring parents; reverse gives a
  // topological order with children before parents.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Tensor(loss.shape(), {1.0f}));
  for (size_t i = topo.size(); i-- > 0;) {
    Node* n = topo[i];
    if (n->backward_fn && n->has_grad) n->backward_fn(n->grad);
  }
}

}  // namespace capsrep::nd
