#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nsnmt/errors.hpp"
#include "nsnmt/tensor.hpp"

// Reverse-mode autodiff over a define-by-run tape. A Tape records one
// operation node per forward call in insertion order; backward() walks the
// records in exact reverse order and accumulates gradients into every
// requires_grad leaf tensor reachable from the loss. Graphs are rebuilt per
// forward pass, which makes unrolling over variable-length sentences trivial.

namespace nsnmt {

constexpr double kLogEpsFloor = 1e-12;  // floor inside log of cross_entropy

enum class OpKind {
  kLeaf,
  kAdd,
  kMul,
  kScale,
  kMatMul,
  kTanh,
  kSigmoid,
  kSoftmax,
  kConcat,
  kSlice,
  kRow,
  kReshape,
  kTranspose,
  kSum,
  kCrossEntropy,
};

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const TensorPtr& t() const;
  const Tensor& v() const;
};

class Tape {
 public:
  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    TensorPtr value;
    bool needs_grad = false;
    std::size_t a0 = 0;  // op-specific: slice start / row index / CE target / concat axis
    std::size_t a1 = 0;  // op-specific: slice length
    double s0 = 0.0;     // scale factor
  };

  // grad_enabled=false builds a forward-only tape (decoding); every node is
  // marked as not needing gradients regardless of its leaves.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var leaf(TensorPtr t) {
    Node n;
    n.kind = OpKind::kLeaf;
    n.value = std::move(t);
    n.needs_grad = grad_enabled_ && n.value->requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var push(OpKind kind, std::vector<int> inputs, TensorPtr value, std::size_t a0 = 0,
           std::size_t a1 = 0, double s0 = 0.0) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.a0 = a0;
    n.a1 = a1;
    n.s0 = s0;
    if (grad_enabled_) {
      for (int in : n.inputs) {
        if (nodes_[static_cast<std::size_t>(in)].needs_grad) {
          n.needs_grad = true;
          break;
        }
      }
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const TensorPtr& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  // Reverse sweep from a scalar loss node. Gradients of tensors feeding
  // several consumers accumulate by summation. May be called more than once;
  // each call adds a fresh pass worth of gradient into the leaves.
  void backward(const Var& loss);

 private:
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

inline const TensorPtr& Var::t() const { return tape->value(id); }
inline const Tensor& Var::v() const { return *tape->value(id); }

namespace detail {

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands live on different graphs");
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace detail

// ---- forward ops ----------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "add");
  const Tensor& ta = a.v();
  const Tensor& tb = b.v();
  if (ta.shape != tb.shape) {
    throw DimensionError("add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  auto out = make_tensor(ta.shape);
  for (std::size_t i = 0; i < ta.data.size(); ++i) out->data[i] = ta.data[i] + tb.data[i];
  return a.tape->push(OpKind::kAdd, {a.id, b.id}, std::move(out));
}

// Elementwise product. A scalar (1-element) operand broadcasts over the other.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "mul");
  const Tensor& ta = a.v();
  const Tensor& tb = b.v();
  if (ta.shape == tb.shape) {
    auto out = make_tensor(ta.shape);
    for (std::size_t i = 0; i < ta.data.size(); ++i) out->data[i] = ta.data[i] * tb.data[i];
    return a.tape->push(OpKind::kMul, {a.id, b.id}, std::move(out));
  }
  if (ta.size() == 1) {
    auto out = make_tensor(tb.shape);
    for (std::size_t i = 0; i < tb.data.size(); ++i) out->data[i] = ta.data[0] * tb.data[i];
    return a.tape->push(OpKind::kMul, {a.id, b.id}, std::move(out));
  }
  if (tb.size() == 1) {
    auto out = make_tensor(ta.shape);
    for (std::size_t i = 0; i < ta.data.size(); ++i) out->data[i] = ta.data[i] * tb.data[0];
    return a.tape->push(OpKind::kMul, {a.id, b.id}, std::move(out));
  }
  throw DimensionError("mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
}

inline Var scale(const Var& a, double s) {
  auto out = make_tensor(a.v().shape);
  for (std::size_t i = 0; i < a.v().data.size(); ++i) out->data[i] = s * a.v().data[i];
  return a.tape->push(OpKind::kScale, {a.id}, std::move(out), 0, 0, s);
}

// a: (r x k), b: (k x c) or (k). Vector right-hand sides are treated as a
// single column and produce a vector of length r.
inline Var matmul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "matmul");
  const Tensor& ta = a.v();
  const Tensor& tb = b.v();
  if (ta.shape.size() != 2) {
    throw DimensionError("matmul: left operand must be a matrix, got " + shape_str(ta.shape));
  }
  const std::size_t r = ta.shape[0];
  const std::size_t k = ta.shape[1];
  if (tb.shape.size() == 1) {
    if (tb.shape[0] != k) {
      throw DimensionError("matmul: inner dimensions disagree, " + shape_str(ta.shape) + " vs " +
                           shape_str(tb.shape));
    }
    auto out = make_tensor(Shape{r});
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      const double* arow = ta.data.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) acc += arow[j] * tb.data[j];
      out->data[i] = acc;
    }
    return a.tape->push(OpKind::kMatMul, {a.id, b.id}, std::move(out));
  }
  if (tb.shape.size() == 2) {
    if (tb.shape[0] != k) {
      throw DimensionError("matmul: inner dimensions disagree, " + shape_str(ta.shape) + " vs " +
                           shape_str(tb.shape));
    }
    const std::size_t c = tb.shape[1];
    auto out = make_tensor(Shape{r, c});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double av = ta.data[i * k + j];
        if (av == 0.0) continue;
        const double* brow = tb.data.data() + j * c;
        double* orow = out->data.data() + i * c;
        for (std::size_t cc = 0; cc < c; ++cc) orow[cc] += av * brow[cc];
      }
    }
    return a.tape->push(OpKind::kMatMul, {a.id, b.id}, std::move(out));
  }
  throw DimensionError("matmul: right operand must be matrix or vector, got " + shape_str(tb.shape));
}

inline Var tanh(const Var& a) {
  auto out = make_tensor(a.v().shape);
  for (std::size_t i = 0; i < a.v().data.size(); ++i) out->data[i] = std::tanh(a.v().data[i]);
  return a.tape->push(OpKind::kTanh, {a.id}, std::move(out));
}

inline Var sigmoid(const Var& a) {
  auto out = make_tensor(a.v().shape);
  for (std::size_t i = 0; i < a.v().data.size(); ++i) {
    out->data[i] = detail::stable_sigmoid(a.v().data[i]);
  }
  return a.tape->push(OpKind::kSigmoid, {a.id}, std::move(out));
}

// Max-subtracted softmax over a vector.
inline Var softmax(const Var& a) {
  const Tensor& ta = a.v();
  if (ta.shape.size() != 1) {
    throw DimensionError("softmax: expects a vector, got " + shape_str(ta.shape));
  }
  auto out = make_tensor(ta.shape);
  double mx = ta.data[0];
  for (double x : ta.data) mx = std::max(mx, x);
  double z = 0.0;
  for (std::size_t i = 0; i < ta.data.size(); ++i) {
    out->data[i] = std::exp(ta.data[i] - mx);
    z += out->data[i];
  }
  for (double& x : out->data) x /= z;
  return a.tape->push(OpKind::kSoftmax, {a.id}, std::move(out));
}

// Concatenation of vectors (axis 0) or matrices (axis 0 or 1). Gradient
// splits back to the parts.
inline Var concat(const std::vector<Var>& parts, std::size_t axis = 0) {
  if (parts.empty()) throw ContractError("concat: needs at least one part");
  Tape* tape = parts[0].tape;
  std::vector<int> ids;
  for (const Var& p : parts) {
    detail::require_same_tape(parts[0], p, "concat");
    ids.push_back(p.id);
  }
  const Shape& first = parts[0].v().shape;
  if (first.size() == 1) {
    if (axis != 0) throw DimensionError("concat: vector parts only support axis 0");
    std::size_t total = 0;
    for (const Var& p : parts) {
      if (p.v().shape.size() != 1) {
        throw DimensionError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(p.v().shape));
      }
      total += p.v().shape[0];
    }
    auto out = make_tensor(Shape{total});
    std::size_t off = 0;
    for (const Var& p : parts) {
      for (double x : p.v().data) out->data[off++] = x;
    }
    return tape->push(OpKind::kConcat, std::move(ids), std::move(out), axis);
  }
  if (first.size() == 2) {
    if (axis > 1) throw DimensionError("concat: matrix axis must be 0 or 1");
    const std::size_t side = axis == 0 ? first[1] : first[0];
    std::size_t total = 0;
    for (const Var& p : parts) {
      const Shape& s = p.v().shape;
      if (s.size() != 2 || (axis == 0 ? s[1] : s[0]) != side) {
        throw DimensionError("concat: side dimension mismatch " + shape_str(first) + " vs " + shape_str(s));
      }
      total += axis == 0 ? s[0] : s[1];
    }
    Shape oshape = axis == 0 ? Shape{total, side} : Shape{side, total};
    auto out = make_tensor(oshape);
    if (axis == 0) {
      std::size_t off = 0;
      for (const Var& p : parts) {
        for (double x : p.v().data) out->data[off++] = x;
      }
    } else {
      std::size_t col_off = 0;
      for (const Var& p : parts) {
        const std::size_t pc = p.v().shape[1];
        for (std::size_t i = 0; i < side; ++i) {
          for (std::size_t j = 0; j < pc; ++j) {
            out->data[i * total + col_off + j] = p.v().data[i * pc + j];
          }
        }
        col_off += pc;
      }
    }
    return tape->push(OpKind::kConcat, std::move(ids), std::move(out), axis);
  }
  throw DimensionError("concat: only vectors and matrices are supported");
}

inline Var slice(const Var& a, std::size_t start, std::size_t len) {
  const Tensor& ta = a.v();
  if (ta.shape.size() != 1) throw DimensionError("slice: expects a vector, got " + shape_str(ta.shape));
  if (start + len > ta.shape[0] || len == 0) {
    throw IndexError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of bounds for length " + std::to_string(ta.shape[0]));
  }
  auto out = make_tensor(Shape{len});
  for (std::size_t i = 0; i < len; ++i) out->data[i] = ta.data[start + i];
  return a.tape->push(OpKind::kSlice, {a.id}, std::move(out), start, len);
}

// One row of a matrix; the embedding lookup.
inline Var row(const Var& m, std::size_t r) {
  const Tensor& tm = m.v();
  if (tm.shape.size() != 2) throw DimensionError("row: expects a matrix, got " + shape_str(tm.shape));
  if (r >= tm.shape[0]) {
    throw IndexError("row: index " + std::to_string(r) + " out of range for " + shape_str(tm.shape));
  }
  const std::size_t c = tm.shape[1];
  auto out = make_tensor(Shape{c});
  for (std::size_t j = 0; j < c; ++j) out->data[j] = tm.data[r * c + j];
  return m.tape->push(OpKind::kRow, {m.id}, std::move(out), r);
}

inline Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.v().size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.v().shape) + " as " + shape_str(shape));
  }
  auto out = make_tensor(std::move(shape));
  out->data = a.v().data;
  return a.tape->push(OpKind::kReshape, {a.id}, std::move(out));
}

inline Var transpose(const Var& a) {
  const Tensor& ta = a.v();
  if (ta.shape.size() != 2) throw DimensionError("transpose: expects a matrix, got " + shape_str(ta.shape));
  const std::size_t r = ta.shape[0], c = ta.shape[1];
  auto out = make_tensor(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out->data[j * r + i] = ta.data[i * c + j];
  }
  return a.tape->push(OpKind::kTranspose, {a.id}, std::move(out));
}

inline Var sum(const Var& a) {
  auto out = make_tensor(Shape{1});
  double acc = 0.0;
  for (double x : a.v().data) acc += x;
  out->data[0] = acc;
  return a.tape->push(OpKind::kSum, {a.id}, std::move(out));
}

// Negative log-likelihood of one target id under a probability vector:
// -ln(dist[target] + eps). The floor keeps pathological distributions from
// producing -Inf.
inline Var cross_entropy(const Var& dist, std::size_t target) {
  const Tensor& td = dist.v();
  if (td.shape.size() != 1) {
    throw DimensionError("cross_entropy: expects a probability vector, got " + shape_str(td.shape));
  }
  if (target >= td.shape[0]) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for vocabulary of " +
                     std::to_string(td.shape[0]));
  }
  double total = 0.0;
  for (double x : td.data) total += x;
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("cross_entropy: input does not sum to 1 (sum=" + std::to_string(total) + ")");
  }
  auto out = make_tensor(Shape{1});
  out->data[0] = -std::log(td.data[target] + kLogEpsFloor);
  return dist.tape->push(OpKind::kCrossEntropy, {dist.id}, std::move(out), target);
}

// ---- backward --------------------------------------------------------------

inline void Tape::backward(const Var& loss) {
  if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("backward: loss is not a node of this graph");
  }
  const Node& loss_node = nodes_[static_cast<std::size_t>(loss.id)];
  if (loss_node.value->size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss_node.value->shape));
  }
  if (!grad_enabled_) return;

  std::vector<std::vector<double>> grads(nodes_.size());
  auto want = [&](int id) { return nodes_[static_cast<std::size_t>(id)].needs_grad; };
  auto buf = [&](int id) -> std::vector<double>& {
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(id)].value->size(), 0.0);
    return g;
  };

  buf(loss.id)[0] = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || grads[static_cast<std::size_t>(i)].empty()) continue;
    const std::vector<double>& g = grads[static_cast<std::size_t>(i)];
    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kAdd: {
        for (int in : n.inputs) {
          if (!want(in)) continue;
          auto& gi = buf(in);
          for (std::size_t j = 0; j < g.size(); ++j) gi[j] += g[j];
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = *nodes_[static_cast<std::size_t>(n.inputs[0])].value;
        const Tensor& b = *nodes_[static_cast<std::size_t>(n.inputs[1])].value;
        if (a.shape == b.shape) {
          if (want(n.inputs[0])) {
            auto& ga = buf(n.inputs[0]);
            for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * b.data[j];
          }
          if (want(n.inputs[1])) {
            auto& gb = buf(n.inputs[1]);
            for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j] * a.data[j];
          }
        } else if (a.size() == 1) {
          if (want(n.inputs[0])) {
            auto& ga = buf(n.inputs[0]);
            for (std::size_t j = 0; j < g.size(); ++j) ga[0] += g[j] * b.data[j];
          }
          if (want(n.inputs[1])) {
            auto& gb = buf(n.inputs[1]);
            for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j] * a.data[0];
          }
        } else {
          if (want(n.inputs[0])) {
            auto& ga = buf(n.inputs[0]);
            for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * b.data[0];
          }
          if (want(n.inputs[1])) {
            auto& gb = buf(n.inputs[1]);
            for (std::size_t j = 0; j < g.size(); ++j) gb[0] += g[j] * a.data[j];
          }
        }
        break;
      }
      case OpKind::kScale: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += n.s0 * g[j];
        }
        break;
      }
      case OpKind::kMatMul: {
        const Tensor& a = *nodes_[static_cast<std::size_t>(n.inputs[0])].value;
        const Tensor& b = *nodes_[static_cast<std::size_t>(n.inputs[1])].value;
        const std::size_t r = a.shape[0], k = a.shape[1];
        if (b.shape.size() == 1) {
          if (want(n.inputs[0])) {
            auto& ga = buf(n.inputs[0]);
            for (std::size_t i2 = 0; i2 < r; ++i2) {
              for (std::size_t j = 0; j < k; ++j) ga[i2 * k + j] += g[i2] * b.data[j];
            }
          }
          if (want(n.inputs[1])) {
            auto& gb = buf(n.inputs[1]);
            for (std::size_t i2 = 0; i2 < r; ++i2) {
              const double gv = g[i2];
              if (gv == 0.0) continue;
              const double* arow = a.data.data() + i2 * k;
              for (std::size_t j = 0; j < k; ++j) gb[j] += arow[j] * gv;
            }
          }
        } else {
          const std::size_t c = b.shape[1];
          if (want(n.inputs[0])) {
            auto& ga = buf(n.inputs[0]);
            for (std::size_t i2 = 0; i2 < r; ++i2) {
              for (std::size_t j = 0; j < k; ++j) {
                double acc = 0.0;
                for (std::size_t cc = 0; cc < c; ++cc) acc += g[i2 * c + cc] * b.data[j * c + cc];
                ga[i2 * k + j] += acc;
              }
            }
          }
          if (want(n.inputs[1])) {
            auto& gb = buf(n.inputs[1]);
            for (std::size_t j = 0; j < k; ++j) {
              for (std::size_t i2 = 0; i2 < r; ++i2) {
                const double av = a.data[i2 * k + j];
                if (av == 0.0) continue;
                for (std::size_t cc = 0; cc < c; ++cc) gb[j * c + cc] += av * g[i2 * c + cc];
              }
            }
          }
        }
        break;
      }
      case OpKind::kTanh: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          const Tensor& y = *n.value;
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * (1.0 - y.data[j] * y.data[j]);
        }
        break;
      }
      case OpKind::kSigmoid: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          const Tensor& y = *n.value;
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * y.data[j] * (1.0 - y.data[j]);
        }
        break;
      }
      case OpKind::kSoftmax: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          const Tensor& y = *n.value;
          double dot = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * y.data[j];
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += y.data[j] * (g[j] - dot);
        }
        break;
      }
      case OpKind::kConcat: {
        const std::size_t axis = n.a0;
        const Shape& oshape = n.value->shape;
        if (oshape.size() == 1 || axis == 0) {
          std::size_t off = 0;
          for (int in : n.inputs) {
            const std::size_t sz = nodes_[static_cast<std::size_t>(in)].value->size();
            if (want(in)) {
              auto& gi = buf(in);
              for (std::size_t j = 0; j < sz; ++j) gi[j] += g[off + j];
            }
            off += sz;
          }
        } else {
          const std::size_t rows2 = oshape[0], total = oshape[1];
          std::size_t col_off = 0;
          for (int in : n.inputs) {
            const std::size_t pc = nodes_[static_cast<std::size_t>(in)].value->shape[1];
            if (want(in)) {
              auto& gi = buf(in);
              for (std::size_t i2 = 0; i2 < rows2; ++i2) {
                for (std::size_t j = 0; j < pc; ++j) gi[i2 * pc + j] += g[i2 * total + col_off + j];
              }
            }
            col_off += pc;
          }
        }
        break;
      }
      case OpKind::kSlice: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          for (std::size_t j = 0; j < n.a1; ++j) ga[n.a0 + j] += g[j];
        }
        break;
      }
      case OpKind::kRow: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          const std::size_t c = n.value->size();
          for (std::size_t j = 0; j < c; ++j) ga[n.a0 * c + j] += g[j];
        }
        break;
      }
      case OpKind::kReshape: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
        }
        break;
      }
      case OpKind::kTranspose: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          const std::size_t r2 = n.value->shape[0], c2 = n.value->shape[1];
          for (std::size_t i2 = 0; i2 < r2; ++i2) {
            for (std::size_t j = 0; j < c2; ++j) ga[j * r2 + i2] += g[i2 * c2 + j];
          }
        }
        break;
      }
      case OpKind::kSum: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          for (double& x : ga) x += g[0];
        }
        break;
      }
      case OpKind::kCrossEntropy: {
        if (want(n.inputs[0])) {
          auto& ga = buf(n.inputs[0]);
          const Tensor& d = *nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          ga[n.a0] += -g[0] / (d.data[n.a0] + kLogEpsFloor);
        }
        break;
      }
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind == OpKind::kLeaf && n.value->requires_grad && !grads[i].empty()) {
      n.value->ensure_grad();
      for (std::size_t j = 0; j < grads[i].size(); ++j) n.value->grad[j] += grads[i][j];
    }
  }
}

}  // namespace nsnmt
