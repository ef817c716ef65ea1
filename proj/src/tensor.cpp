#include "pamm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pamm {

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

namespace detail {

std::span<const double> BackwardContext::out_value() const {
  return node_.value;
}

std::span<double> BackwardContext::parent_grad(std::size_t i) {
  Node& parent = *node_.parents.at(i);
  if (!parent.requires_grad) return {};
  return lookup_(parent);
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite leaf value");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(make_leaf(std::move(shape), std::move(v), false));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::span<const double> Tensor::values() const {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("tensor: item() on " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("tensor: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ShapeError("tensor: index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw std::logic_error("tensor: mutable_values on non-leaf");
  return node_->value;
}

Tensor Tensor::detach() const {
  return Tensor(make_leaf(shape(), node_->value, false));
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> const& inputs, detail::BackwardFn fn,
                   const char* op) {
  if (shape_numel(shape) != values.size()) {
    throw std::logic_error(std::string(op) + ": result size mismatch");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in result");
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool tracked = false;
  for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  if (tracked) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node_);
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

std::span<double> GradSink::buffer(const std::shared_ptr<detail::Node>& leaf) {
  auto [it, inserted] = buffers_.try_emplace(leaf.get());
  if (inserted) {
    it->second.leaf = leaf;
    it->second.grad.assign(leaf->value.size(), 0.0);
  }
  return it->second.grad;
}

std::span<const double> GradSink::grad(const Tensor& leaf) const {
  auto it = buffers_.find(leaf.node_id());
  if (it == buffers_.end()) return {};
  return it->second.grad;
}

void GradSink::flush_into_leaves() const {
  for (const auto& [key, entry] : buffers_) {
    auto& g = entry.leaf->grad;
    if (g.empty()) g.assign(entry.leaf->value.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += entry.grad[i];
  }
}

void backward(const Tensor& loss, GradSink* sink) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<detail::Node*, std::vector<double>> inner;
  std::unordered_map<detail::Node*, std::shared_ptr<detail::Node>> owners;
  for (auto* n : order) {
    for (const auto& p : n->parents) owners.emplace(p.get(), p);
  }

  auto lookup = [&](detail::Node& n) -> std::span<double> {
    if (n.backward) {
      auto& g = inner[&n];
      if (g.empty()) g.assign(n.value.size(), 0.0);
      return g;
    }
    if (sink) return sink->buffer(owners.at(&n));
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  };

  if (loss.node_->backward) {
    inner[loss.node_.get()].assign(1, 1.0);
  } else {
    // Loss is itself a tracked leaf.
    auto g = sink ? sink->buffer(loss.node_) : std::span<double>{};
    if (!sink) {
      if (loss.node_->grad.empty()) loss.node_->grad.assign(1, 0.0);
      g = loss.node_->grad;
    }
    g[0] += 1.0;
    return;
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward) continue;
    auto found = inner.find(n);
    if (found == inner.end()) continue;
    std::vector<double> out_grad = std::move(found->second);
    inner.erase(found);
    detail::BackwardContext ctx(*n, out_grad, lookup);
    n->backward(ctx);
  }
}

}  // namespace pamm
