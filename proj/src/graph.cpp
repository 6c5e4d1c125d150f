#include "ngcl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ngcl {
namespace {

constexpr double kSigmoidLo = std::numeric_limits<double>::min();
// Largest double strictly below one: 1 - 2^-53.
constexpr double kSigmoidHi = 1.0 - 0x1.0p-53;

[[noreturn]] void shape_fail(OpKind op, const Tensor& a, const Tensor* b = nullptr) {
  std::string msg = std::string(op_name(op)) + ": incompatible shapes " + a.shape_str();
  if (b) msg += " and " + b->shape_str();
  throw ShapeError(msg);
}

double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kSigmoidLo, kSigmoidHi);
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a^T b without materialising the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  Tensor out(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    auto arow = a.row(p);
    auto brow = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.empty() && src.size() != 0) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::neg: return "neg";
    case OpKind::scale: return "scale";
    case OpKind::row_sum: return "row_sum";
    case OpKind::mean_all: return "mean_all";
    case OpKind::logsumexp_rows: return "logsumexp_rows";
    case OpKind::l2_normalize_rows: return "l2_normalize_rows";
    case OpKind::stop_gradient: return "stop_gradient";
  }
  return "unknown";
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw ContractError("node id " + std::to_string(id.index) + " out of range");
  return nodes_[id.index];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }
OpKind Graph::kind(NodeId id) const { return node(id).op; }
bool Graph::is_parameter(NodeId id) const { return node(id).op == OpKind::parameter; }

NodeId Graph::constant(Tensor value) {
  return push(Node{OpKind::constant, 0, {}, 0.0, std::move(value)});
}

NodeId Graph::parameter(Tensor value) {
  return push(Node{OpKind::parameter, 0, {}, 0.0, std::move(value)});
}

NodeId Graph::apply(OpKind op, std::span<const NodeId> inputs, double scalar) {
  const bool binary = op == OpKind::matmul || op == OpKind::add || op == OpKind::sub || op == OpKind::mul;
  if (op == OpKind::constant || op == OpKind::parameter) {
    throw ContractError("leaf nodes are created with constant()/parameter()");
  }
  const std::size_t arity = binary ? 2 : 1;
  if (inputs.size() != arity) {
    throw ContractError(std::string(op_name(op)) + " expects " + std::to_string(arity) + " input(s), got " +
                        std::to_string(inputs.size()));
  }
  const Tensor& a = node(inputs[0]).value;
  const Tensor* b = binary ? &node(inputs[1]).value : nullptr;

  Tensor out;
  switch (op) {
    case OpKind::matmul:
      if (a.cols() != b->rows()) shape_fail(op, a, b);
      out = matmul_values(a, *b);
      break;
    case OpKind::transpose:
      out = a.transposed();
      break;
    case OpKind::add:
      if (!a.same_shape(*b)) shape_fail(op, a, b);
      out = zip(a, *b, [](double x, double y) { return x + y; });
      break;
    case OpKind::sub:
      if (!a.same_shape(*b)) shape_fail(op, a, b);
      out = zip(a, *b, [](double x, double y) { return x - y; });
      break;
    case OpKind::mul:
      if (!a.same_shape(*b)) shape_fail(op, a, b);
      out = zip(a, *b, [](double x, double y) { return x * y; });
      break;
    case OpKind::relu:
      out = map(a, [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case OpKind::sigmoid:
      out = map(a, stable_sigmoid);
      break;
    case OpKind::exp:
      out = map(a, [](double x) { return std::exp(x); });
      break;
    case OpKind::log:
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] > 0.0)) {
          throw DomainError("log: non-positive entry " + std::to_string(a[i]) + " at flat index " +
                            std::to_string(i) + " of " + a.shape_str() + " input");
        }
      }
      out = map(a, [](double x) { return std::log(x); });
      break;
    case OpKind::neg:
      out = map(a, [](double x) { return -x; });
      break;
    case OpKind::scale:
      out = map(a, [scalar](double x) { return scalar * x; });
      break;
    case OpKind::row_sum: {
      out = Tensor(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v;
        out(r, 0) = s;
      }
      break;
    }
    case OpKind::mean_all: {
      if (a.size() == 0) shape_fail(op, a);
      double s = 0.0;
      for (double v : a.data()) s += v;
      out = Tensor::scalar(s / static_cast<double>(a.size()));
      break;
    }
    case OpKind::logsumexp_rows: {
      if (a.cols() == 0) shape_fail(op, a);
      out = Tensor(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - mx);
        out(r, 0) = mx + std::log(s);
      }
      break;
    }
    case OpKind::l2_normalize_rows: {
      out = Tensor(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v * v;
        const double nrm = std::sqrt(s);
        if (nrm <= kNormFloor) continue;
        auto src = a.row(r);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) dst[c] = src[c] / nrm;
      }
      break;
    }
    case OpKind::stop_gradient:
      if (stop_gradients_seen_ < frozen_.size()) {
        out = frozen_[stop_gradients_seen_];
        if (!out.same_shape(a)) shape_fail(op, a, &out);
      } else {
        out = a;
      }
      ++stop_gradients_seen_;
      break;
    case OpKind::constant:
    case OpKind::parameter:
      break;
  }

  Node n{op, static_cast<std::uint8_t>(arity), {inputs[0], binary ? inputs[1] : NodeId{}}, scalar, std::move(out)};
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) { NodeId in[] = {a, b}; return apply(OpKind::matmul, in); }
NodeId Graph::transpose(NodeId a) { NodeId in[] = {a}; return apply(OpKind::transpose, in); }
NodeId Graph::add(NodeId a, NodeId b) { NodeId in[] = {a, b}; return apply(OpKind::add, in); }
NodeId Graph::sub(NodeId a, NodeId b) { NodeId in[] = {a, b}; return apply(OpKind::sub, in); }
NodeId Graph::mul(NodeId a, NodeId b) { NodeId in[] = {a, b}; return apply(OpKind::mul, in); }
NodeId Graph::relu(NodeId a) { NodeId in[] = {a}; return apply(OpKind::relu, in); }
NodeId Graph::sigmoid(NodeId a) { NodeId in[] = {a}; return apply(OpKind::sigmoid, in); }
NodeId Graph::exp(NodeId a) { NodeId in[] = {a}; return apply(OpKind::exp, in); }
NodeId Graph::log(NodeId a) { NodeId in[] = {a}; return apply(OpKind::log, in); }
NodeId Graph::neg(NodeId a) { NodeId in[] = {a}; return apply(OpKind::neg, in); }
NodeId Graph::scale(NodeId a, double c) { NodeId in[] = {a}; return apply(OpKind::scale, in, c); }
NodeId Graph::row_sum(NodeId a) { NodeId in[] = {a}; return apply(OpKind::row_sum, in); }
NodeId Graph::mean_all(NodeId a) { NodeId in[] = {a}; return apply(OpKind::mean_all, in); }
NodeId Graph::logsumexp_rows(NodeId a) { NodeId in[] = {a}; return apply(OpKind::logsumexp_rows, in); }
NodeId Graph::l2_normalize_rows(NodeId a) { NodeId in[] = {a}; return apply(OpKind::l2_normalize_rows, in); }
NodeId Graph::stop_gradient(NodeId a) { NodeId in[] = {a}; return apply(OpKind::stop_gradient, in); }

std::vector<Tensor> Graph::stop_gradient_values() const {
  std::vector<Tensor> out;
  for (const auto& n : nodes_)
    if (n.op == OpKind::stop_gradient) out.push_back(n.value);
  return out;
}

void Graph::freeze_stop_gradients(std::vector<Tensor> values) {
  frozen_ = std::move(values);
  stop_gradients_seen_ = 0;
}

std::vector<std::vector<bool>> Graph::relu_patterns() const {
  std::vector<std::vector<bool>> out;
  for (const auto& n : nodes_) {
    if (n.op != OpKind::relu) continue;
    const Tensor& in = nodes_[n.in[0].index].value;
    std::vector<bool> bits(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) bits[i] = in[i] > 0.0;
    out.push_back(std::move(bits));
  }
  return out;
}

Gradients Graph::backward(NodeId output) const {
  const Node& out_node = node(output);
  if (out_node.value.rows() != 1 || out_node.value.cols() != 1) {
    throw ContractError("backward requires a 1x1 output node, got " + out_node.value.shape_str());
  }
  Gradients result;
  auto& g = result.grads_;
  g.resize(nodes_.size());
  g[output.index] = Tensor::scalar(1.0);

  for (std::size_t idx = output.index + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (g[idx].empty() || n.arity == 0) continue;
    const Tensor& dy = g[idx];
    const Tensor& a = nodes_[n.in[0].index].value;
    Tensor& ga = g[n.in[0].index];

    switch (n.op) {
      case OpKind::matmul: {
        const Tensor& b = nodes_[n.in[1].index].value;
        accumulate(ga, matmul_nt(dy, b));
        accumulate(g[n.in[1].index], matmul_tn(a, dy));
        break;
      }
      case OpKind::transpose:
        accumulate(ga, dy.transposed());
        break;
      case OpKind::add:
        accumulate(ga, dy);
        accumulate(g[n.in[1].index], dy);
        break;
      case OpKind::sub:
        accumulate(ga, dy);
        accumulate(g[n.in[1].index], map(dy, [](double x) { return -x; }));
        break;
      case OpKind::mul: {
        const Tensor& b = nodes_[n.in[1].index].value;
        accumulate(ga, zip(dy, b, [](double x, double y) { return x * y; }));
        accumulate(g[n.in[1].index], zip(dy, a, [](double x, double y) { return x * y; }));
        break;
      }
      case OpKind::relu:
        accumulate(ga, zip(dy, a, [](double d, double x) { return x > 0.0 ? d : 0.0; }));
        break;
      case OpKind::sigmoid:
        accumulate(ga, zip(dy, n.value, [](double d, double s) { return d * s * (1.0 - s); }));
        break;
      case OpKind::exp:
        accumulate(ga, zip(dy, n.value, [](double d, double e) { return d * e; }));
        break;
      case OpKind::log:
        accumulate(ga, zip(dy, a, [](double d, double x) { return d / x; }));
        break;
      case OpKind::neg:
        accumulate(ga, map(dy, [](double d) { return -d; }));
        break;
      case OpKind::scale: {
        const double c = n.scalar;
        accumulate(ga, map(dy, [c](double d) { return c * d; }));
        break;
      }
      case OpKind::row_sum: {
        Tensor d(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) d(r, c) = dy(r, 0);
        accumulate(ga, d);
        break;
      }
      case OpKind::mean_all: {
        const double v = dy.item() / static_cast<double>(a.size());
        accumulate(ga, Tensor(a.rows(), a.cols(), v));
        break;
      }
      case OpKind::logsumexp_rows: {
        Tensor d(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) d(r, c) = dy(r, 0) * std::exp(a(r, c) - n.value(r, 0));
        accumulate(ga, d);
        break;
      }
      case OpKind::l2_normalize_rows: {
        Tensor d(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double s = 0.0;
          for (double v : a.row(r)) s += v * v;
          const double nrm = std::sqrt(s);
          if (nrm <= kNormFloor) continue;
          auto y = n.value.row(r);
          auto gy = dy.row(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < a.cols(); ++c) dot += y[c] * gy[c];
          for (std::size_t c = 0; c < a.cols(); ++c) d(r, c) = (gy[c] - y[c] * dot) / nrm;
        }
        accumulate(ga, d);
        break;
      }
      case OpKind::stop_gradient:
      case OpKind::constant:
      case OpKind::parameter:
        break;
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (g[i].empty()) g[i] = Tensor(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  return result;
}

}  // namespace ngcl
