#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "music/common.hpp"

namespace music {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Lower clamp applied inside log so that p*log(p) evaluates to exactly 0 at
// p = 0; one-hot codes sit at the loss optimum without producing -inf.
inline constexpr Real kLogEps = 1e-12;

enum class OpKind : uint8_t {
  Leaf,
  Matmul,
  Transpose,
  Add,
  AddRow,
  Mul,
  Scale,
  Relu,
  SoftmaxLast,
  LogClamped,
  SumAll,
  SumLast,
  MeanAll,
  Reshape,
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// it came from is alive and has not been reset.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  const Shape& shape() const;
  int64_t size() const;
  std::span<const Real> values() const;
  std::span<const Real> grad() const;  // meaningful after Tape::backward
  Real scalar() const;                 // value of a single-element Var

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Record of array primitives in issue order. Single-writer: one tape is
// built and differentiated by one thread; distinct tapes are independent.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Shape shape, std::vector<Real> values, std::string label = {});
  Var zeros(Shape shape, std::string label = {});

  // a:(m,k) x b:(k,n) -> (m,n)
  Var matmul(Var a, Var b);
  // (m,n) -> (n,m)
  Var transpose(Var a);
  // elementwise, same shape
  Var add(Var a, Var b);
  // a:(m,n) + bias:(n) broadcast over rows
  Var add_row(Var a, Var bias);
  // elementwise, same shape
  Var mul(Var a, Var b);
  Var scale(Var a, Real c);
  Var relu(Var a);
  // softmax over the last axis, max-subtracted
  Var softmax_last(Var a);
  // log(max(x, kLogEps))
  Var log_clamped(Var a);
  Var sum_all(Var a);
  // (..., k) -> (...); a 1-d input reduces to a scalar
  Var sum_last(Var a);
  Var mean_all(Var a);
  Var reshape(Var a, Shape shape);

  // Accumulates d(root)/d(node) into every node reachable from root; all
  // other nodes keep zero gradient. root must hold a single element.
  void backward(Var root);

  size_t size() const { return nodes_.size(); }
  void reset() { nodes_.clear(); }

 private:
  friend class Var;

  struct Node {
    OpKind op = OpKind::Leaf;
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    int a = -1;
    int b = -1;
    Real attr = 0;
    std::string label;
  };

  Var push(Node node);
  const Node& at(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Node& at(int id) { return nodes_[static_cast<size_t>(id)]; }
  void check_mine(Var v) const;

  std::vector<Node> nodes_;
};

// ---- gradient checking -----------------------------------------------------

struct LeafSpec {
  Shape shape;
  std::vector<Real> values;
  std::string label;
};

// Builds a scalar graph from fresh leaves; called once per finite-difference
// evaluation, so it must be a pure function of the leaf values.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_leaf;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool nonfinite = false;
  int64_t evaluations = 0;

  bool pass(double tol) const { return !nonfinite && max_rel_err < tol; }
  std::string summary() const;
};

// Compares tape gradients of f against central finite differences, leaf
// element by leaf element. Relative error denominator is max(|a|,|b|,1e-8).
// fault_bias is a self-test hook: it is added to the first analytic gradient
// so a deliberately wrong derivative is guaranteed to be flagged.
GradCheckReport grad_check(const ScalarGraph& f, const std::vector<LeafSpec>& leaves,
                           double step, double fault_bias = 0.0);

}  // namespace music
