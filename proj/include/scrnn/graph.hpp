#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "scrnn/tensor.hpp"

namespace scrnn {

/// A learnable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

enum class OpKind {
  Placeholder,
  Constant,
  Param,
  MatMul,
  Add,
  Mul,
  Scale,
  Sigmoid,
  Tanh,
  Relu,
  Softmax,
  Concat,
  Slice,
  Sum,
  Mean,
  Conv2D,
  MaxPool2,
  Reshape,
  Embed,
  SigmoidCrossEntropy,
  SoftmaxNLL,
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Placeholder: return "placeholder";
    case OpKind::Constant: return "constant";
    case OpKind::Param: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Softmax: return "softmax";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Conv2D: return "conv2d";
    case OpKind::MaxPool2: return "maxpool2";
    case OpKind::Reshape: return "reshape";
    case OpKind::Embed: return "embed";
    case OpKind::SigmoidCrossEntropy: return "sigmoid_ce";
    case OpKind::SoftmaxNLL: return "softmax_nll";
  }
  return "?";
}

struct NodeId {
  std::size_t index = 0;
};

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

/// Reverse-mode computation graph. Nodes are appended in construction order,
/// which is a topological order by construction. `forward` evaluates every
/// node; `backward` propagates a seed from one node and accumulates into the
/// attached Parameters.
///
/// Parameters referenced by the graph must outlive it.
class Graph {
 public:
  NodeId placeholder(std::string name, Shape shape) {
    Node n{OpKind::Placeholder};
    n.label = std::move(name);
    n.shape_attr = std::move(shape);
    n.requires_grad = true;
    return push(std::move(n));
  }

  NodeId constant(Tensor value) {
    Node n{OpKind::Constant};
    n.aux = std::move(value);
    return push(std::move(n));
  }

  /// Registers a Parameter; repeated calls with the same Parameter return the
  /// same node so fan-out across time steps accumulates in one place.
  NodeId parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return NodeId{it->second};
    Node n{OpKind::Param};
    n.label = p.name;
    n.param = &p;
    n.requires_grad = true;
    auto id = push(std::move(n));
    param_nodes_[&p] = id.index;
    return id;
  }

  /// a [m x k] times b [k x n] (or b [n x k] transposed). A rank-1 b is a column.
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false) {
    Node n = op(OpKind::MatMul, {a, b});
    n.transpose_b = transpose_b;
    return push(std::move(n));
  }

  /// Elementwise add; b may match a trailing suffix of a's shape (broadcast over leading axes).
  NodeId add(NodeId a, NodeId b) { return push(op(OpKind::Add, {a, b})); }
  NodeId mul(NodeId a, NodeId b) { return push(op(OpKind::Mul, {a, b})); }
  NodeId scale(NodeId a, double factor) {
    Node n = op(OpKind::Scale, {a});
    n.factor = factor;
    return push(std::move(n));
  }
  NodeId sigmoid(NodeId a) { return push(op(OpKind::Sigmoid, {a})); }
  NodeId tanh(NodeId a) { return push(op(OpKind::Tanh, {a})); }
  NodeId relu(NodeId a) { return push(op(OpKind::Relu, {a})); }
  /// Softmax over the last axis.
  NodeId softmax(NodeId a) { return push(op(OpKind::Softmax, {a})); }

  /// Concatenation along axis 0.
  NodeId concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    return push(op(OpKind::Concat, parts));
  }

  /// Rows [begin, end) along axis 0.
  NodeId slice(NodeId a, std::size_t begin, std::size_t end) {
    Node n = op(OpKind::Slice, {a});
    n.begin = begin;
    n.end = end;
    return push(std::move(n));
  }

  NodeId sum(NodeId a) { return push(op(OpKind::Sum, {a})); }
  NodeId mean(NodeId a) { return push(op(OpKind::Mean, {a})); }

  /// Valid-padding, stride-1 cross-correlation. x [N,C,H,W], kernels [O,C,kh,kw], bias [O].
  NodeId conv2d(NodeId x, NodeId kernels, NodeId bias) { return push(op(OpKind::Conv2D, {x, kernels, bias})); }

  /// 2x2 max pool with stride 2 over the last two axes of [N,C,H,W]; odd remainders are dropped.
  NodeId maxpool2(NodeId x) { return push(op(OpKind::MaxPool2, {x})); }

  NodeId reshape(NodeId a, Shape shape) {
    if (shape.empty()) throw std::invalid_argument("reshape target must have at least one axis");
    Node n = op(OpKind::Reshape, {a});
    n.shape_attr = std::move(shape);
    return push(std::move(n));
  }

  /// Collapses all trailing axes: [N, ...] -> [N, rest].
  NodeId flatten(NodeId a) { return push(op(OpKind::Reshape, {a})); }

  /// Column selection: E [D x V], ids -> [ids.size() x D], row r = column ids[r] of E.
  NodeId embed(NodeId table, std::vector<std::size_t> ids) {
    Node n = op(OpKind::Embed, {table});
    n.ids = std::move(ids);
    return push(std::move(n));
  }

  /// -sum(t log p + (1 - t) log(1 - p)) over all entries, p clamped to [1e-7, 1 - 1e-7].
  NodeId sigmoid_cross_entropy(NodeId probs, Tensor targets) {
    Node n = op(OpKind::SigmoidCrossEntropy, {probs});
    n.aux = std::move(targets);
    return push(std::move(n));
  }

  /// sum_t -w_t log softmax(logits_t)[target_t] over rows of logits [T x V].
  /// Empty weights mean all ones.
  NodeId softmax_nll(NodeId logits, std::vector<std::size_t> targets, std::vector<double> weights = {}) {
    Node n = op(OpKind::SoftmaxNLL, {logits});
    n.ids = std::move(targets);
    if (!weights.empty()) {
      const std::size_t count = weights.size();
      n.aux = Tensor({count}, std::move(weights));
    }
    return push(std::move(n));
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId id) const { return node(id).kind; }
  bool evaluated() const noexcept { return evaluated_ && evaluated_count_ == nodes_.size(); }

  /// Evaluates every node, binding placeholders by name. Returns the last node's value.
  const Tensor& forward(const std::map<std::string, Tensor>& inputs = {}) {
    if (nodes_.empty()) throw std::logic_error("forward on an empty graph");
    for (std::size_t i = 0; i < nodes_.size(); ++i) eval_node(i, inputs);
    evaluated_ = true;
    evaluated_count_ = nodes_.size();
    return value(NodeId{nodes_.size() - 1});
  }

  const Tensor& value(NodeId id) const {
    const Node& n = node(id);
    if (n.kind == OpKind::Param) return n.param->value;
    if (n.kind == OpKind::Constant) return n.aux;
    if (n.value.empty()) {
      throw std::logic_error("node " + std::to_string(id.index) + " (" + op_name(n.kind) + ") not evaluated");
    }
    return n.value;
  }

  const Tensor& grad(NodeId id) const {
    const Node& n = node(id);
    if (n.grad.empty()) {
      throw std::logic_error("node " + std::to_string(id.index) + " (" + op_name(n.kind) + ") has no gradient");
    }
    return n.grad;
  }

  /// Propagates d(seed . output)/d(node) to every node feeding `output`, and
  /// adds the result into each attached Parameter::grad.
  void backward(NodeId output, const Tensor& seed) {
    if (!evaluated()) throw std::logic_error("backward called before forward");
    Node& out = node(output);
    const Tensor& out_val = value(output);
    if (seed.shape() != out_val.shape()) {
      throw std::invalid_argument("backward seed shape " + shape_str(seed.shape()) + " does not match output " +
                                  shape_str(out_val.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    out.grad = seed;
    for (std::size_t i = output.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.requires_grad) continue;
      backprop_node(i);
      if (n.kind == OpKind::Param) {
        auto& g = n.param->grad;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
      }
    }
  }

  /// Backward from a scalar output with seed 1.
  void backward(NodeId output) { backward(output, Tensor::scalar(1.0).reshaped(value(output).shape())); }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs{};
    std::string label{};
    Parameter* param = nullptr;
    Shape shape_attr{};
    bool transpose_b = false;
    double factor = 1.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::size_t> ids{};
    Tensor aux{};
    std::vector<std::size_t> argmax{};
    Tensor cache{};
    Tensor value{};
    Tensor grad{};
    bool requires_grad = false;
  };

  Node op(OpKind kind, std::initializer_list<NodeId> inputs) { return op(kind, std::vector<NodeId>(inputs)); }

  Node op(OpKind kind, const std::vector<NodeId>& inputs) {
    Node n{kind};
    for (auto in : inputs) {
      if (in.index >= nodes_.size()) {
        throw std::out_of_range(std::string(op_name(kind)) + ": input node " + std::to_string(in.index) +
                                " does not exist");
      }
      n.inputs.push_back(in.index);
      n.requires_grad = n.requires_grad || nodes_[in.index].requires_grad;
    }
    return n;
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return NodeId{nodes_.size() - 1};
  }

  Node& node(NodeId id) {
    if (id.index >= nodes_.size()) throw std::out_of_range("node " + std::to_string(id.index) + " does not exist");
    return nodes_[id.index];
  }
  const Node& node(NodeId id) const {
    if (id.index >= nodes_.size()) throw std::out_of_range("node " + std::to_string(id.index) + " does not exist");
    return nodes_[id.index];
  }

  const Tensor& in_val(const Node& n, std::size_t k) const { return value(NodeId{n.inputs[k]}); }

  [[noreturn]] void fail(std::size_t i, const std::string& what) const {
    throw std::invalid_argument("node " + std::to_string(i) + " (" + op_name(nodes_[i].kind) +
                                (nodes_[i].label.empty() ? "" : " '" + nodes_[i].label + "'") + "): " + what);
  }

  // Gradient buffer of input k, allocated on first use. Null when the input needs no gradient.
  Tensor* in_grad(Node& n, std::size_t k) {
    Node& src = nodes_[n.inputs[k]];
    if (!src.requires_grad) return nullptr;
    if (src.grad.empty()) src.grad = Tensor(value(NodeId{n.inputs[k]}).shape());
    return &src.grad;
  }

  void eval_node(std::size_t i, const std::map<std::string, Tensor>& inputs) {
    Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::Placeholder: {
        auto it = inputs.find(n.label);
        if (it == inputs.end()) {
          if (!n.value.empty()) return;  // keep an earlier binding
          fail(i, "no input bound");
        }
        if (it->second.shape() != n.shape_attr) {
          fail(i, "input shape " + shape_str(it->second.shape()) + " does not match declared " +
                      shape_str(n.shape_attr));
        }
        n.value = it->second;
        return;
      }
      case OpKind::Constant:
      case OpKind::Param:
        return;
      case OpKind::MatMul: return eval_matmul(i);
      case OpKind::Add: return eval_add(i);
      case OpKind::Mul: {
        const Tensor& a = in_val(n, 0);
        const Tensor& b = in_val(n, 1);
        if (a.shape() != b.shape()) fail(i, "shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
        n.value = Tensor(a.shape());
        for (std::size_t j = 0; j < a.size(); ++j) n.value[j] = a[j] * b[j];
        return;
      }
      case OpKind::Scale: {
        n.value = in_val(n, 0);
        for (auto& v : n.value.values()) v *= n.factor;
        return;
      }
      case OpKind::Sigmoid: {
        n.value = in_val(n, 0);
        for (auto& v : n.value.values()) v = detail::sigmoid(v);
        return;
      }
      case OpKind::Tanh: {
        n.value = in_val(n, 0);
        for (auto& v : n.value.values()) v = std::tanh(v);
        return;
      }
      case OpKind::Relu: {
        n.value = in_val(n, 0);
        for (auto& v : n.value.values()) v = v > 0.0 ? v : 0.0;
        return;
      }
      case OpKind::Softmax: return eval_softmax(i);
      case OpKind::Concat: return eval_concat(i);
      case OpKind::Slice: {
        const Tensor& a = in_val(n, 0);
        if (n.begin >= n.end || n.end > a.rows()) {
          fail(i, "row range [" + std::to_string(n.begin) + ", " + std::to_string(n.end) + ") outside " +
                      shape_str(a.shape()));
        }
        Shape s = a.shape();
        s[0] = n.end - n.begin;
        const std::size_t stride = a.cols();
        n.value = Tensor(s, std::vector<double>(a.values().begin() + static_cast<std::ptrdiff_t>(n.begin * stride),
                                                a.values().begin() + static_cast<std::ptrdiff_t>(n.end * stride)));
        return;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        const Tensor& a = in_val(n, 0);
        double acc = 0.0;
        for (double v : a.values()) acc += v;
        if (n.kind == OpKind::Mean) acc /= static_cast<double>(a.size());
        n.value = Tensor::scalar(acc);
        return;
      }
      case OpKind::Conv2D: return eval_conv(i);
      case OpKind::MaxPool2: return eval_maxpool(i);
      case OpKind::Reshape: {
        const Tensor& a = in_val(n, 0);
        const Shape target = n.shape_attr.empty() ? Shape{a.rows(), a.cols()} : n.shape_attr;
        if (shape_size(target) != a.size()) {
          fail(i, "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(target));
        }
        n.value = a.reshaped(target);
        return;
      }
      case OpKind::Embed: {
        const Tensor& table = in_val(n, 0);
        if (table.rank() != 2) fail(i, "embedding table must be rank 2, got " + shape_str(table.shape()));
        const std::size_t d = table.dim(0), v = table.dim(1);
        if (n.ids.empty()) fail(i, "no ids");
        n.value = Tensor({n.ids.size(), d});
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          if (n.ids[r] >= v) fail(i, "id " + std::to_string(n.ids[r]) + " outside vocabulary of " + std::to_string(v));
          for (std::size_t k = 0; k < d; ++k) n.value.at(r, k) = table.at(k, n.ids[r]);
        }
        return;
      }
      case OpKind::SigmoidCrossEntropy: {
        const Tensor& p = in_val(n, 0);
        if (p.shape() != n.aux.shape()) {
          fail(i, "target shape " + shape_str(n.aux.shape()) + " does not match prediction " + shape_str(p.shape()));
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
          const double q = std::clamp(p[j], kProbClamp, 1.0 - kProbClamp);
          const double t = n.aux[j];
          acc -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
        }
        n.value = Tensor::scalar(acc);
        return;
      }
      case OpKind::SoftmaxNLL: return eval_softmax_nll(i);
    }
  }

  void backprop_node(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::Placeholder:
      case OpKind::Constant:
      case OpKind::Param:
        return;
      case OpKind::MatMul: return grad_matmul(i);
      case OpKind::Add: {
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) (*ga)[j] += g[j];
        }
        if (Tensor* gb = in_grad(n, 1)) {
          const std::size_t m = gb->size();
          for (std::size_t j = 0; j < g.size(); ++j) (*gb)[j % m] += g[j];
        }
        return;
      }
      case OpKind::Mul: {
        const Tensor& a = in_val(n, 0);
        const Tensor& b = in_val(n, 1);
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) (*ga)[j] += g[j] * b[j];
        }
        if (Tensor* gb = in_grad(n, 1)) {
          for (std::size_t j = 0; j < g.size(); ++j) (*gb)[j] += g[j] * a[j];
        }
        return;
      }
      case OpKind::Scale: {
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) (*ga)[j] += g[j] * n.factor;
        }
        return;
      }
      case OpKind::Sigmoid: {
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) {
            const double y = n.value[j];
            (*ga)[j] += g[j] * y * (1.0 - y);
          }
        }
        return;
      }
      case OpKind::Tanh: {
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) {
            const double y = n.value[j];
            (*ga)[j] += g[j] * (1.0 - y * y);
          }
        }
        return;
      }
      case OpKind::Relu: {
        if (Tensor* ga = in_grad(n, 0)) {
          const Tensor& a = in_val(n, 0);
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (a[j] > 0.0) (*ga)[j] += g[j];
          }
        }
        return;
      }
      case OpKind::Softmax: {
        if (Tensor* ga = in_grad(n, 0)) {
          const Tensor& y = n.value;
          const std::size_t width = y.shape().back();
          for (std::size_t r = 0; r < y.size() / width; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j) dot += g[r * width + j] * y[r * width + j];
            for (std::size_t j = 0; j < width; ++j) {
              (*ga)[r * width + j] += y[r * width + j] * (g[r * width + j] - dot);
            }
          }
        }
        return;
      }
      case OpKind::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t len = in_val(n, k).size();
          if (Tensor* gk = in_grad(n, k)) {
            for (std::size_t j = 0; j < len; ++j) (*gk)[j] += g[offset + j];
          }
          offset += len;
        }
        return;
      }
      case OpKind::Slice: {
        if (Tensor* ga = in_grad(n, 0)) {
          const std::size_t offset = n.begin * in_val(n, 0).cols();
          for (std::size_t j = 0; j < g.size(); ++j) (*ga)[offset + j] += g[j];
        }
        return;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        if (Tensor* ga = in_grad(n, 0)) {
          double d = g[0];
          if (n.kind == OpKind::Mean) d /= static_cast<double>(ga->size());
          for (auto& v : ga->values()) v += d;
        }
        return;
      }
      case OpKind::Conv2D: return grad_conv(i);
      case OpKind::MaxPool2: {
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) (*ga)[n.argmax[j]] += g[j];
        }
        return;
      }
      case OpKind::Reshape: {
        if (Tensor* ga = in_grad(n, 0)) {
          for (std::size_t j = 0; j < g.size(); ++j) (*ga)[j] += g[j];
        }
        return;
      }
      case OpKind::Embed: {
        if (Tensor* ga = in_grad(n, 0)) {
          const std::size_t d = ga->dim(0);
          for (std::size_t r = 0; r < n.ids.size(); ++r) {
            for (std::size_t k = 0; k < d; ++k) ga->at(k, n.ids[r]) += g.at(r, k);
          }
        }
        return;
      }
      case OpKind::SigmoidCrossEntropy: {
        if (Tensor* ga = in_grad(n, 0)) {
          const Tensor& p = in_val(n, 0);
          for (std::size_t j = 0; j < p.size(); ++j) {
            if (p[j] < kProbClamp || p[j] > 1.0 - kProbClamp) continue;  // clamped: flat
            const double t = n.aux[j];
            (*ga)[j] += g[0] * (-t / p[j] + (1.0 - t) / (1.0 - p[j]));
          }
        }
        return;
      }
      case OpKind::SoftmaxNLL: {
        if (Tensor* ga = in_grad(n, 0)) {
          // n.cache holds the row-wise softmax from the forward pass.
          const std::size_t v = n.cache.dim(1);
          for (std::size_t t = 0; t < n.ids.size(); ++t) {
            const double w = (n.aux.empty() ? 1.0 : n.aux[t]) * g[0];
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < v; ++j) {
              ga->at(t, j) += w * (n.cache.at(t, j) - (j == n.ids[t] ? 1.0 : 0.0));
            }
          }
        }
        return;
      }
    }
  }

  void eval_matmul(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& a = in_val(n, 0);
    const Tensor& b = in_val(n, 1);
    if (a.rank() != 2) fail(i, "left operand must be rank 2, got " + shape_str(a.shape()));
    if (b.rank() > 2) fail(i, "right operand must be rank 1 or 2, got " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1);
    const bool column = b.rank() == 1;
    std::size_t bk, bn;
    if (column) {
      if (n.transpose_b) fail(i, "cannot transpose a rank-1 operand");
      bk = b.dim(0);
      bn = 1;
    } else if (n.transpose_b) {
      bn = b.dim(0);
      bk = b.dim(1);
    } else {
      bk = b.dim(0);
      bn = b.dim(1);
    }
    if (bk != k) fail(i, "inner dimensions differ: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    n.value = column ? Tensor({m}) : Tensor({m, bn});
    auto C = detail::as_mat(n.value, m, bn);
    auto A = detail::as_mat(a, m, k);
    if (n.transpose_b) {
      C.noalias() = A * detail::as_mat(b, bn, bk).transpose();
    } else {
      C.noalias() = A * detail::as_mat(b, bk, bn);
    }
  }

  void grad_matmul(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& a = in_val(n, 0);
    const Tensor& b = in_val(n, 1);
    const std::size_t m = a.dim(0), k = a.dim(1);
    const std::size_t bn = n.value.size() / m;
    auto G = detail::as_mat(n.grad, m, bn);
    if (Tensor* ga = in_grad(n, 0)) {
      auto GA = detail::as_mat(*ga, m, k);
      if (n.transpose_b) {
        GA.noalias() += G * detail::as_mat(b, bn, k);
      } else {
        GA.noalias() += G * detail::as_mat(b, k, bn).transpose();
      }
    }
    if (Tensor* gb = in_grad(n, 1)) {
      auto A = detail::as_mat(a, m, k);
      if (n.transpose_b) {
        detail::as_mat(*gb, bn, k).noalias() += G.transpose() * A;
      } else {
        detail::as_mat(*gb, k, bn).noalias() += A.transpose() * G;
      }
    }
  }

  void eval_add(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& a = in_val(n, 0);
    const Tensor& b = in_val(n, 1);
    const auto& as = a.shape();
    const auto& bs = b.shape();
    bool ok = bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin());
    if (!ok) fail(i, "cannot broadcast " + shape_str(bs) + " onto " + shape_str(as));
    n.value = a;
    const std::size_t m = b.size();
    for (std::size_t j = 0; j < a.size(); ++j) n.value[j] += b[j % m];
  }

  void eval_softmax(std::size_t i) {
    Node& n = nodes_[i];
    n.value = in_val(n, 0);
    const std::size_t width = n.value.shape().back();
    for (std::size_t r = 0; r < n.value.size() / width; ++r) {
      double* row = n.value.data().data() + r * width;
      const double mx = *std::max_element(row, row + width);
      double z = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (std::size_t j = 0; j < width; ++j) row[j] /= z;
    }
  }

  void eval_concat(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& first = in_val(n, 0);
    Shape s = first.shape();
    std::size_t rows = 0;
    std::vector<double> data;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const Tensor& t = in_val(n, k);
      if (t.rank() != s.size() || !std::equal(s.begin() + 1, s.end(), t.shape().begin() + 1)) {
        fail(i, "input " + std::to_string(k) + " shape " + shape_str(t.shape()) + " incompatible with " +
                    shape_str(first.shape()));
      }
      rows += t.dim(0);
      data.insert(data.end(), t.values().begin(), t.values().end());
    }
    s[0] = rows;
    n.value = Tensor(s, std::move(data));
  }

  void eval_conv(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& x = in_val(n, 0);
    const Tensor& w = in_val(n, 1);
    const Tensor& b = in_val(n, 2);
    if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1) {
      fail(i, "expected x [N,C,H,W], kernels [O,C,kh,kw], bias [O]; got " + shape_str(x.shape()) + ", " +
                  shape_str(w.shape()) + ", " + shape_str(b.shape()));
    }
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C) fail(i, "kernel channels " + std::to_string(w.dim(1)) + " vs input " + std::to_string(C));
    if (b.dim(0) != O) fail(i, "bias length " + std::to_string(b.dim(0)) + " vs " + std::to_string(O) + " kernels");
    if (kh > H || kw > W) fail(i, "kernel larger than input " + shape_str(x.shape()));
    const std::size_t OH = H - kh + 1, OW = W - kw + 1;
    const std::size_t patch = C * kh * kw, pixels = OH * OW;
    n.cache = Tensor({N, patch, pixels});
    n.value = Tensor({N, O, OH, OW});
    auto K = detail::as_mat(w, O, patch);
    for (std::size_t s = 0; s < N; ++s) {
      double* cols = n.cache.data().data() + s * patch * pixels;
      const double* img = x.data().data() + s * C * H * W;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
          for (std::size_t kj = 0; kj < kw; ++kj) {
            double* dst = cols + ((c * kh + ki) * kw + kj) * pixels;
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const double* src = img + (c * H + oy + ki) * W + kj;
              std::copy(src, src + OW, dst + oy * OW);
            }
          }
        }
      }
      detail::MatMap out(n.value.data().data() + s * O * pixels, static_cast<Eigen::Index>(O),
                         static_cast<Eigen::Index>(pixels));
      detail::ConstMatMap colm(cols, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(pixels));
      out.noalias() = K * colm;
      for (std::size_t o = 0; o < O; ++o) out.row(static_cast<Eigen::Index>(o)).array() += b[o];
    }
  }

  void grad_conv(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& x = in_val(n, 0);
    const Tensor& w = in_val(n, 1);
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t OH = H - kh + 1, OW = W - kw + 1;
    const std::size_t patch = C * kh * kw, pixels = OH * OW;
    Tensor* gx = in_grad(n, 0);
    Tensor* gw = in_grad(n, 1);
    Tensor* gb = in_grad(n, 2);
    std::vector<double> dcols(gx ? patch * pixels : 0);
    for (std::size_t s = 0; s < N; ++s) {
      detail::ConstMatMap G(n.grad.data().data() + s * O * pixels, static_cast<Eigen::Index>(O),
                            static_cast<Eigen::Index>(pixels));
      detail::ConstMatMap colm(n.cache.data().data() + s * patch * pixels, static_cast<Eigen::Index>(patch),
                               static_cast<Eigen::Index>(pixels));
      if (gw) detail::as_mat(*gw, O, patch).noalias() += G * colm.transpose();
      if (gb) {
        for (std::size_t o = 0; o < O; ++o) (*gb)[o] += G.row(static_cast<Eigen::Index>(o)).sum();
      }
      if (gx) {
        detail::MatMap dc(dcols.data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(pixels));
        dc.noalias() = detail::as_mat(w, O, patch).transpose() * G;
        double* dimg = gx->data().data() + s * C * H * W;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
              const double* src = dcols.data() + ((c * kh + ki) * kw + kj) * pixels;
              for (std::size_t oy = 0; oy < OH; ++oy) {
                double* dst = dimg + (c * H + oy + ki) * W + kj;
                for (std::size_t ox = 0; ox < OW; ++ox) dst[ox] += src[oy * OW + ox];
              }
            }
          }
        }
      }
    }
  }

  void eval_maxpool(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& x = in_val(n, 0);
    if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) fail(i, "expected [N,C,H,W] with H,W >= 2, got " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t PH = H / 2, PW = W / 2;
    n.value = Tensor({N, C, PH, PW});
    n.argmax.assign(n.value.size(), 0);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < N * C; ++plane) {
      const std::size_t base = plane * H * W;
      for (std::size_t py = 0; py < PH; ++py) {
        for (std::size_t px = 0; px < PW; ++px, ++o) {
          std::size_t best = base + (2 * py) * W + 2 * px;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + (2 * py + dy) * W + 2 * px + dx;
              if (x[idx] > x[best]) best = idx;
            }
          }
          n.value[o] = x[best];
          n.argmax[o] = best;
        }
      }
    }
  }

  void eval_softmax_nll(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& logits = in_val(n, 0);
    if (logits.rank() != 2) fail(i, "logits must be [T x V], got " + shape_str(logits.shape()));
    const std::size_t T = logits.dim(0), V = logits.dim(1);
    if (n.ids.size() != T) fail(i, std::to_string(n.ids.size()) + " targets for " + std::to_string(T) + " rows");
    if (!n.aux.empty() && n.aux.size() != T) fail(i, "weight count does not match rows");
    n.cache = Tensor({T, V});
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (n.ids[t] >= V) fail(i, "target id " + std::to_string(n.ids[t]) + " outside vocabulary of " + std::to_string(V));
      auto row = logits.row(t);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (std::size_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t j = 0; j < V; ++j) n.cache.at(t, j) = std::exp(row[j] - lse);
      const double w = n.aux.empty() ? 1.0 : n.aux[t];
      if (w != 0.0) acc += w * (lse - row[n.ids[t]]);
    }
    n.value = Tensor::scalar(acc);
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool evaluated_ = false;
  std::size_t evaluated_count_ = 0;
};

/// Evaluates `graph` with named placeholder bindings and returns the last node's value.
inline Tensor eval_graph(Graph& graph, const std::map<std::string, Tensor>& inputs = {}) {
  return graph.forward(inputs);
}

}  // namespace scrnn
