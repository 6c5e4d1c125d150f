#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ngcl/tensor.hpp"

namespace ngcl {

/// Raised when an op is evaluated outside its mathematical domain
/// (log of a non-positive entry).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when an API contract is violated (e.g. backward from a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct NodeId {
  std::uint32_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class OpKind : std::uint8_t {
  constant,
  parameter,
  matmul,            // (n x k)(k x m) -> n x m
  transpose,         // n x m -> m x n
  add,               // same shapes
  sub,               // same shapes
  mul,               // elementwise, same shapes
  relu,
  sigmoid,           // clamped into the open interval (0, 1)
  exp,
  log,               // domain error on entries <= 0
  neg,
  scale,             // c * x
  row_sum,           // n x m -> n x 1
  mean_all,          // n x m -> 1 x 1
  logsumexp_rows,    // n x m -> n x 1, max-shifted
  l2_normalize_rows, // rows with norm <= kNormFloor map to zero rows
  stop_gradient,     // identity forward, zero backward
};

std::string_view op_name(OpKind op);

/// Row norms at or below this value are treated as the zero vector by
/// l2_normalize_rows (output zero, gradient zero).
inline constexpr double kNormFloor = 1e-30;

class Gradients;

/// Append-only computation graph with reverse-mode differentiation over a
/// fixed op set. Nodes are evaluated eagerly when appended, so the node list
/// is always topologically ordered. Single owner; not thread-safe.
class Graph {
 public:
  NodeId constant(Tensor value);
  NodeId parameter(Tensor value);

  /// Generic entry point. `scalar` is used only by OpKind::scale.
  NodeId apply(OpKind op, std::span<const NodeId> inputs, double scalar = 0.0);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId neg(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId row_sum(NodeId a);
  NodeId mean_all(NodeId a);
  NodeId logsumexp_rows(NodeId a);
  NodeId l2_normalize_rows(NodeId a);
  NodeId stop_gradient(NodeId a);

  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const;
  bool is_parameter(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a 1x1 node. Returns d(output)/d(node) for every node.
  Gradients backward(NodeId output) const;

  /// Forward values of every stop_gradient node, in creation order.
  std::vector<Tensor> stop_gradient_values() const;
  /// Makes the i-th stop_gradient node created from now on emit `values[i]`
  /// instead of its input. Lets a finite-difference probe evaluate the
  /// surrogate function whose derivative the backward pass computes.
  void freeze_stop_gradients(std::vector<Tensor> values);
  /// Sign pattern (input > 0) of every relu node, in creation order.
  std::vector<std::vector<bool>> relu_patterns() const;

 private:
  struct Node {
    OpKind op;
    std::uint8_t arity;
    NodeId in[2];
    double scalar;
    Tensor value;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> frozen_;
  std::size_t stop_gradients_seen_ = 0;
};

class Gradients {
 public:
  /// Gradient for `id`; a zero tensor of the node's shape when the output
  /// does not depend on it.
  const Tensor& operator[](NodeId id) const { return grads_.at(id.index); }

 private:
  friend class Graph;
  std::vector<Tensor> grads_;
};

}  // namespace ngcl
