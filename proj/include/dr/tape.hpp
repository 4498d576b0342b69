#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dr/error.hpp"

namespace dr {

class GradTape;

/// Scalar value tracked on a GradTape. idx < 0 marks an untracked constant;
/// operations on constants are folded and never recorded.
struct Var {
  double v = 0.0;
  int idx = -1;
  GradTape* tape = nullptr;

  bool tracked() const { return idx >= 0; }
};

/// Reverse-mode tape over scalar operations. Each node stores its parents and
/// the local partial derivatives computed during the eager forward pass;
/// gradient() runs one reverse sweep and scatters leaf adjoints into a
/// parameter-length vector. Leaves for the same parameter accumulate
/// additively. A tape is owned by a single thread.
class GradTape {
 public:
  struct Node {
    int a = -1;
    int b = -1;
    double da = 0.0;
    double db = 0.0;
    int param = -1;  // >= 0 for leaves
  };

  /// Leaf bound to parameter theta[param_index].
  Var param(int param_index, double value) {
    Node n;
    n.param = param_index;
    return push(n, value);
  }

  Var constant(double value) const { return Var{value, -1, nullptr}; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// d(output)/d(theta) as a vector of length n_params. A constant output
  /// yields the zero vector; a Var recorded on a different tape is an error.
  std::vector<double> gradient(const Var& output, std::size_t n_params) const {
    std::vector<double> grad(n_params, 0.0);
    if (!output.tracked()) return grad;
    if (output.tape != this) throw Error("gradient requested for a value on another tape");
    std::vector<double> adjoint(nodes_.size(), 0.0);
    adjoint[static_cast<std::size_t>(output.idx)] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const double bar = adjoint[i];
      if (bar == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.param >= 0) {
        grad[static_cast<std::size_t>(n.param)] += bar;
        continue;
      }
      if (n.a >= 0) adjoint[static_cast<std::size_t>(n.a)] += bar * n.da;
      if (n.b >= 0) adjoint[static_cast<std::size_t>(n.b)] += bar * n.db;
    }
    return grad;
  }

  Var unary(const Var& x, double value, double dx) {
    if (!x.tracked()) return constant(value);
    check(x);
    Node n;
    n.a = x.idx;
    n.da = dx;
    return push(n, value);
  }

  static Var binary(const Var& x, const Var& y, double value, double dx, double dy) {
    GradTape* tape = x.tracked() ? x.tape : y.tape;
    if (tape == nullptr) return Var{value, -1, nullptr};
    if (x.tracked() && y.tracked() && x.tape != y.tape)
      throw Error("mixing values from two tapes");
    Node n;
    if (x.tracked()) {
      n.a = x.idx;
      n.da = dx;
    }
    if (y.tracked()) {
      n.b = y.idx;
      n.db = dy;
    }
    return tape->push(n, value);
  }

 private:
  void check(const Var& x) const {
    if (x.tape != this) throw Error("value belongs to another tape");
  }

  Var push(const Node& n, double value) {
    nodes_.push_back(n);
    return Var{value, static_cast<int>(nodes_.size()) - 1, this};
  }

  std::vector<Node> nodes_;
};

// Arithmetic. Each overload computes the same double arithmetic as the
// untracked path so taped and untaped evaluations agree bit for bit.

inline Var operator+(const Var& x, const Var& y) {
  return GradTape::binary(x, y, x.v + y.v, 1.0, 1.0);
}
inline Var operator-(const Var& x, const Var& y) {
  return GradTape::binary(x, y, x.v - y.v, 1.0, -1.0);
}
inline Var operator*(const Var& x, const Var& y) {
  return GradTape::binary(x, y, x.v * y.v, y.v, x.v);
}
inline Var operator/(const Var& x, const Var& y) {
  return GradTape::binary(x, y, x.v / y.v, 1.0 / y.v, -x.v / (y.v * y.v));
}
inline Var operator-(const Var& x) {
  if (!x.tracked()) return Var{-x.v, -1, nullptr};
  return x.tape->unary(x, -x.v, -1.0);
}

inline Var operator+(const Var& x, double c) { return x + Var{c, -1, nullptr}; }
inline Var operator+(double c, const Var& x) { return Var{c, -1, nullptr} + x; }
inline Var operator-(const Var& x, double c) { return x - Var{c, -1, nullptr}; }
inline Var operator-(double c, const Var& x) { return Var{c, -1, nullptr} - x; }
inline Var operator*(const Var& x, double c) { return x * Var{c, -1, nullptr}; }
inline Var operator*(double c, const Var& x) { return Var{c, -1, nullptr} * x; }
inline Var operator/(const Var& x, double c) { return x / Var{c, -1, nullptr}; }
inline Var operator/(double c, const Var& x) { return Var{c, -1, nullptr} / x; }

inline Var log(const Var& x) {
  if (!x.tracked()) return Var{std::log(x.v), -1, nullptr};
  return x.tape->unary(x, std::log(x.v), 1.0 / x.v);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.v);
  if (!x.tracked()) return Var{e, -1, nullptr};
  return x.tape->unary(x, e, e);
}
inline Var tanh(const Var& x) {
  const double t = std::tanh(x.v);
  if (!x.tracked()) return Var{t, -1, nullptr};
  return x.tape->unary(x, t, 1.0 - t * t);
}

/// max(x, floor) with the gradient cut below the floor.
inline Var clamp_min(const Var& x, double floor) {
  if (x.v >= floor) return x;
  return Var{floor, -1, nullptr};
}

/// min(x, ceil) with the gradient cut above the ceiling.
inline Var clamp_max(const Var& x, double ceil) {
  if (x.v <= ceil) return x;
  return Var{ceil, -1, nullptr};
}

// Untracked counterparts so generic code evaluates identically on doubles.
inline double clamp_min(double x, double floor) { return x >= floor ? x : floor; }
inline double clamp_max(double x, double ceil) { return x <= ceil ? x : ceil; }

}  // namespace dr
