#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "capsrep/tensor.hpp"

namespace capsrep::nd {

class Var;

// One vertex of the computation graph. Children hold shared_ptrs to parents
// (never the reverse), so graphs are freed as soon as the last output Var
// goes out of scope while parameters persist across steps.
struct Node {
  Tensor value;
  Tensor grad;           // allocated lazily on first accumulation
  bool has_grad = false;
  bool requires_grad = false;
  const char* op = "leaf";
  std::uint64_t id = 0;  // creation order; makes traversals deterministic
  std::vector<std::shared_ptr<Node>> parents;
  // Receives the output gradient, accumulates into captured parents.
  std::function<void(const Tensor&)> backward_fn;

  void accumulate(const Tensor& g);
  void zero_grad() {
    has_grad = false;
    grad = Tensor();
  }
};

// Value-semantics handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false,
               const char* op = "leaf");

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient of the last backward() pass; zeros if this node did not
  // participate in the loss.
  Tensor grad() const;
  void zero_grad() const { node_->zero_grad(); }

  // Overwrites the value in place (optimizer updates). Leaf nodes only.
  void assign_value(Tensor v) const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  friend Var make_op(Tensor value, std::vector<Var> parents, const char* op,
                     std::function<void(const Tensor&)> backward);
  std::shared_ptr<Node> node_;
};

// Leaf helpers.
Var parameter(Tensor init);
Var constant(Tensor value);

// Builds an op node: decides requires_grad from parents, registers the
// backward closure, and runs the finite-value check on the result.
Var make_op(Tensor value, std::vector<Var> parents, const char* op,
            std::function<void(const Tensor&)> backward);

// Reverse-mode sweep from a scalar loss. Fills .grad on every node that
// requires grad along the path; leaves others untouched.
void backward(const Var& loss);

// Throws NumericError naming `op` if any element is NaN or +-Inf.
void check_finite(const Tensor& t, const char* op);

}  // namespace capsrep::nd
