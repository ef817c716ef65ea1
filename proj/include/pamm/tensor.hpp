#pragma once

// Dense 64-bit tensor with a reverse-mode tape.
//
// A Tensor is a cheap handle onto an immutable value node. Operations that
// consume at least one tensor with requires_grad() record their parents and a
// backward closure; everything else produces a detached value. Leaf
// parameters own a gradient buffer that backward() accumulates into until
// zero_grad() is called.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pamm {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
class GradSink;

namespace detail {

struct Node;

class BackwardContext {
 public:
  BackwardContext(Node& node, std::span<const double> out_grad,
                  std::function<std::span<double>(Node&)> lookup)
      : node_(node), out_grad_(out_grad), lookup_(std::move(lookup)) {}

  std::span<const double> out_grad() const { return out_grad_; }
  std::span<const double> out_value() const;
  // Gradient buffer of the i-th parent; empty when that parent is untracked.
  std::span<double> parent_grad(std::size_t i);

 private:
  Node& node_;
  std::span<const double> out_grad_;
  std::function<std::span<double>(Node&)> lookup_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // leaves only
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf that participates in gradient computation.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values().size(); }

  std::span<const double> values() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Accumulated gradient of a leaf; empty before the first backward().
  std::span<const double> grad() const;
  void zero_grad();

  // In-place access for optimizers and finite-difference probes. Leaves only.
  std::span<double> mutable_values();

  // Same values, no tape attachment.
  Tensor detach() const;

  const detail::Node* node_id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>,
                            std::vector<Tensor> const&, detail::BackwardFn,
                            const char*);
  friend void backward(const Tensor&, GradSink*);
  friend class GradSink;
};

// Builds an op result. Values are checked for finiteness; when any input is
// tracked the result records `inputs` as parents together with `fn`.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> const& inputs, detail::BackwardFn fn,
                   const char* op);

// Per-graph destination for leaf gradients. Lets independent samples run
// their backward passes separately and be reduced in a fixed order.
class GradSink {
 public:
  std::span<const double> grad(const Tensor& leaf) const;
  // Adds every buffered gradient into its leaf's own grad.
  void flush_into_leaves() const;
  void clear() { buffers_.clear(); }

 private:
  std::span<double> buffer(const std::shared_ptr<detail::Node>& leaf);

  struct Entry {
    std::shared_ptr<detail::Node> leaf;
    std::vector<double> grad;
  };
  std::unordered_map<const detail::Node*, Entry> buffers_;

  friend void backward(const Tensor&, GradSink*);
};

// Reverse pass from a scalar. Leaf gradients go to `sink` when given,
// otherwise they accumulate into the leaves.
void backward(const Tensor& loss, GradSink* sink = nullptr);

}  // namespace pamm
