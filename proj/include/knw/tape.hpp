#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "knw/errors.hpp"

namespace knw {

enum class Op : std::uint8_t {
  var,
  cnst,
  add,
  sub,
  mul,
  div,
  neg,
  fmadd,    // a * b + c
  cmul,     // constant * a, constant folded into the stored partial
  cadd,     // a + constant
  sin,
  cos,
  tanh,
  sigmoid,
  sqrt,
  sq,
  powi,
};

inline const char* op_name(Op k) {
  switch (k) {
    case Op::var: return "var";
    case Op::cnst: return "const";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::fmadd: return "fmadd";
    case Op::cmul: return "cmul";
    case Op::cadd: return "cadd";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::sqrt: return "sqrt";
    case Op::sq: return "square";
    case Op::powi: return "powi";
  }
  return "unknown";
}

class Tape;

// Handle to one tape node. Cheap to copy; valid until the owning tape is
// reset or destroyed.
struct Value {
  Tape* tape = nullptr;
  std::uint32_t index = 0;
};

// Reverse-mode scalar tape. The forward pass happens at recording time: every
// emitted node stores its value and the local partials with respect to its
// parents, so the backward sweep is plain multiply-accumulate with no
// re-derivation. Parents always precede children, which makes a single
// reverse loop sufficient.
//
// backward() may be called repeatedly from different roots on one recording;
// each call re-seeds the adjoints. reset() drops all nodes but keeps the
// allocated capacity, so a tape object can be reused across many recordings
// without reallocating.
class Tape {
 public:
  static constexpr std::uint32_t nil = 0xffffffffu;

  struct Node {
    std::uint32_t a = nil, b = nil, c = nil;
    Op kind = Op::cnst;
    double val = 0.0;
    double pa = 0.0, pb = 0.0;
  };

  void reset() {
    nodes_.clear();
    adj_.clear();
    zero_ = nil;
    one_ = nil;
  }

  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  Value var(double v) { return emit(Op::var, nil, nil, nil, v, 0.0, 0.0); }

  Value constant(double v) { return emit(Op::cnst, nil, nil, nil, v, 0.0, 0.0); }

  // Shared constants; algebraic identities against them are folded away at
  // recording time, which keeps derivative-seed graphs minimal.
  Value zero() {
    if (zero_ == nil) zero_ = constant(0.0).index;
    return {this, zero_};
  }
  Value one() {
    if (one_ == nil) one_ = constant(1.0).index;
    return {this, one_};
  }

  bool is_zero(Value v) const { return v.index == zero_; }
  bool is_one(Value v) const { return v.index == one_; }

  double val(Value v) const { return nodes_[v.index].val; }
  Op kind(Value v) const { return nodes_[v.index].kind; }

  // Adjoint of `v` from the most recent backward() call.
  double adj(Value v) const { return adj_[v.index]; }

  // Accumulates adjoints of all nodes up to and including `root`, seeding
  // d(root)/d(root) = 1. Nodes with zero adjoint are skipped, so sweeping
  // from a root that touches only part of the recording costs only stores.
  void backward(Value root) {
    const std::uint32_t r = root.index;
    adj_.assign(r + 1, 0.0);
    adj_[r] = 1.0;
    const Node* nodes = nodes_.data();
    double* adj = adj_.data();
    for (std::uint32_t i = r + 1; i-- > 0;) {
      const double d = adj[i];
      if (d == 0.0) continue;
      const Node& n = nodes[i];
      if (n.a == nil) continue;
      adj[n.a] += n.pa * d;
      if (n.b != nil) adj[n.b] += n.pb * d;
      if (n.c != nil) adj[n.c] += d;
    }
  }

  // Throws NumericalError naming the first offending node if the value at
  // `root` is not finite.
  void check_finite_value(Value root) const {
    if (std::isfinite(nodes_[root.index].val)) return;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!std::isfinite(nodes_[i].val)) {
        throw NumericalError(std::string("non-finite value produced by '") +
                             op_name(nodes_[i].kind) + "' node");
      }
    }
    throw NumericalError("non-finite value in evaluation");
  }

  // Same check for the adjoints of the most recent backward sweep.
  void check_finite_adjoints() const {
    for (std::size_t i = 0; i < adj_.size(); ++i) {
      if (!std::isfinite(adj_[i])) {
        throw NumericalError(std::string("non-finite gradient through '") +
                             op_name(nodes_[i].kind) + "' node");
      }
    }
  }

  Value emit(Op k, std::uint32_t a, std::uint32_t b, std::uint32_t c, double v,
             double pa, double pb) {
    const auto idx = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{a, b, c, k, v, pa, pb});
    return {this, idx};
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> adj_;
  std::uint32_t zero_ = nil;
  std::uint32_t one_ = nil;
};

namespace detail {
inline Tape& same_tape(Value x, Value y) {
  if (x.tape != y.tape) throw ContractViolation("values from different tapes");
  return *x.tape;
}
}  // namespace detail

inline Value operator+(Value x, Value y) {
  Tape& t = detail::same_tape(x, y);
  if (t.is_zero(x)) return y;
  if (t.is_zero(y)) return x;
  return t.emit(Op::add, x.index, y.index, Tape::nil, t.val(x) + t.val(y), 1.0, 1.0);
}

inline Value neg(Value x) {
  Tape& t = *x.tape;
  if (t.is_zero(x)) return x;
  return t.emit(Op::neg, x.index, Tape::nil, Tape::nil, -t.val(x), -1.0, 0.0);
}

inline Value operator-(Value x, Value y) {
  Tape& t = detail::same_tape(x, y);
  if (t.is_zero(y)) return x;
  if (t.is_zero(x)) return neg(y);
  return t.emit(Op::sub, x.index, y.index, Tape::nil, t.val(x) - t.val(y), 1.0, -1.0);
}

inline Value operator*(Value x, Value y) {
  Tape& t = detail::same_tape(x, y);
  if (t.is_zero(x)) return x;
  if (t.is_zero(y)) return y;
  if (t.is_one(x)) return y;
  if (t.is_one(y)) return x;
  return t.emit(Op::mul, x.index, y.index, Tape::nil, t.val(x) * t.val(y), t.val(y),
                t.val(x));
}

inline Value operator/(Value x, Value y) {
  Tape& t = detail::same_tape(x, y);
  if (t.is_zero(x)) return x;
  if (t.is_one(y)) return x;
  const double vy = t.val(y);
  const double v = t.val(x) / vy;
  return t.emit(Op::div, x.index, y.index, Tape::nil, v, 1.0 / vy, -v / vy);
}

// a * b + c in one node; the backbone of every dot product on the tape.
inline Value fmadd(Value a, Value b, Value c) {
  Tape& t = detail::same_tape(a, b);
  if (t.is_zero(a) || t.is_zero(b)) return c;
  if (t.is_one(a)) return b + c;
  if (t.is_one(b)) return a + c;
  if (t.is_zero(c)) return a * b;
  return t.emit(Op::fmadd, a.index, b.index, c.index,
                t.val(a) * t.val(b) + t.val(c), t.val(b), t.val(a));
}

// Scaling by a plain double folds the factor into the stored partial instead
// of materialising a constant node.
inline Value operator*(double k, Value x) {
  Tape& t = *x.tape;
  if (k == 0.0 || t.is_zero(x)) return t.zero();
  if (k == 1.0) return x;
  return t.emit(Op::cmul, x.index, Tape::nil, Tape::nil, k * t.val(x), k, 0.0);
}
inline Value operator*(Value x, double k) { return k * x; }

inline Value operator+(Value x, double k) {
  Tape& t = *x.tape;
  if (k == 0.0) return x;
  return t.emit(Op::cadd, x.index, Tape::nil, Tape::nil, t.val(x) + k, 1.0, 0.0);
}
inline Value operator+(double k, Value x) { return x + k; }
inline Value operator-(Value x, double k) { return x + (-k); }
inline Value operator-(Value x) { return neg(x); }

inline Value sin(Value x) {
  Tape& t = *x.tape;
  if (t.is_zero(x)) return x;
  const double v = t.val(x);
  return t.emit(Op::sin, x.index, Tape::nil, Tape::nil, std::sin(v), std::cos(v), 0.0);
}

inline Value cos(Value x) {
  Tape& t = *x.tape;
  const double v = t.val(x);
  return t.emit(Op::cos, x.index, Tape::nil, Tape::nil, std::cos(v), -std::sin(v), 0.0);
}

inline Value tanh(Value x) {
  Tape& t = *x.tape;
  if (t.is_zero(x)) return x;
  const double v = std::tanh(t.val(x));
  return t.emit(Op::tanh, x.index, Tape::nil, Tape::nil, v, 1.0 - v * v, 0.0);
}

inline Value sigmoid(Value x) {
  Tape& t = *x.tape;
  const double v = 1.0 / (1.0 + std::exp(-t.val(x)));
  return t.emit(Op::sigmoid, x.index, Tape::nil, Tape::nil, v, v * (1.0 - v), 0.0);
}

inline Value sqrt(Value x) {
  Tape& t = *x.tape;
  const double v = std::sqrt(t.val(x));
  return t.emit(Op::sqrt, x.index, Tape::nil, Tape::nil, v, 0.5 / v, 0.0);
}

inline Value sq(Value x) {
  Tape& t = *x.tape;
  if (t.is_zero(x)) return x;
  const double v = t.val(x);
  return t.emit(Op::sq, x.index, Tape::nil, Tape::nil, v * v, 2.0 * v, 0.0);
}

inline Value powi(Value x, int n) {
  Tape& t = *x.tape;
  const double v = t.val(x);
  return t.emit(Op::powi, x.index, Tape::nil, Tape::nil, std::pow(v, n),
                n * std::pow(v, n - 1), 0.0);
}

// Records `build(tape, vars)` with one variable node per parameter, checks
// the result and its gradient for non-finite values, and writes d(root)/d(p_i)
// into `grad`. Returns the objective value. Gradients flow through every
// recorded quantity, including second-derivative jet components.
template <class Builder>
double eval_and_grad(Tape& tape, std::span<const double> params,
                     std::span<double> grad, Builder&& build) {
  if (grad.size() != params.size())
    throw ContractViolation("eval_and_grad: grad size != param size");
  tape.reset();
  std::vector<Value> vars;
  vars.reserve(params.size());
  for (double p : params) vars.push_back(tape.var(p));
  Value root = build(tape, std::span<const Value>(vars));
  tape.check_finite_value(root);
  tape.backward(root);
  for (std::size_t i = 0; i < params.size(); ++i) grad[i] = tape.adj(vars[i]);
  for (double g : grad) {
    if (!std::isfinite(g)) {
      tape.check_finite_adjoints();
      throw NumericalError("non-finite gradient");
    }
  }
  return tape.val(root);
}

}  // namespace knw
