#include "music/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace music {

namespace {

std::atomic<Precision> g_precision{Precision::f64};

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<size_t>(i) * k;
    Real* crow = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real av = arow[l];
      if (av == 0.0) continue;
      const Real* brow = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] += A^T B with A:(m,k), B:(m,n)
void gemm_tn_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<size_t>(i) * k;
    const Real* brow = b + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real av = arow[l];
      if (av == 0.0) continue;
      Real* crow = c + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A B^T with A:(m,n), B:(k,n); goes through an explicit transpose
// so the inner loop stays contiguous.
void gemm_nt_acc(const Real* a, const Real* b, Real* c, int m, int n, int k) {
  std::vector<Real> bt(static_cast<size_t>(n) * k);
  for (int l = 0; l < k; ++l)
    for (int j = 0; j < n; ++j) bt[static_cast<size_t>(j) * k + l] = b[static_cast<size_t>(l) * n + j];
  gemm_nn_acc(a, bt.data(), c, m, n, k);
}

}  // namespace

Precision precision_mode() { return g_precision.load(std::memory_order_relaxed); }

void set_precision_mode(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

void quantize_span(std::span<Real> xs) {
  if (precision_mode() != Precision::f32) return;
  for (Real& x : xs) x = static_cast<Real>(static_cast<float>(x));
}

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

const Shape& Var::shape() const { return tape_->at(id_).shape; }

int64_t Var::size() const { return numel(shape()); }

std::span<const Real> Var::values() const { return tape_->at(id_).value; }

std::span<const Real> Var::grad() const { return tape_->at(id_).grad; }

Real Var::scalar() const {
  if (size() != 1) throw UsageError("scalar() on Var of shape " + shape_str(shape()));
  return values()[0];
}

Var Tape::push(Node node) {
  quantize_span(node.value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_mine(Var v) const {
  if (!v.valid() || v.tape_ != this) throw UsageError("Var does not belong to this tape");
}

Var Tape::leaf(Shape shape, std::vector<Real> values, std::string label) {
  if (numel(shape) != static_cast<int64_t>(values.size()))
    throw ConfigError("leaf '" + label + "': " + std::to_string(values.size()) +
                      " values for shape " + shape_str(shape));
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.label = std::move(label);
  return push(std::move(n));
}

Var Tape::zeros(Shape shape, std::string label) {
  std::vector<Real> v(static_cast<size_t>(numel(shape)), 0.0);
  return leaf(std::move(shape), std::move(v), std::move(label));
}

Var Tape::matmul(Var a, Var b) {
  check_mine(a);
  check_mine(b);
  const Node& na = at(a.id_);
  const Node& nb = at(b.id_);
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
    throw ConfigError("matmul shapes " + shape_str(na.shape) + " x " + shape_str(nb.shape));
  const int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
  Node out;
  out.op = OpKind::Matmul;
  out.shape = {m, n};
  out.value.assign(static_cast<size_t>(m) * n, 0.0);
  gemm_nn_acc(na.value.data(), nb.value.data(), out.value.data(), m, k, n);
  out.a = a.id_;
  out.b = b.id_;
  return push(std::move(out));
}

Var Tape::transpose(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  if (na.shape.size() != 2) throw ConfigError("transpose of shape " + shape_str(na.shape));
  const int m = na.shape[0], n = na.shape[1];
  Node out;
  out.op = OpKind::Transpose;
  out.shape = {n, m};
  out.value.resize(na.value.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.value[static_cast<size_t>(j) * m + i] = na.value[static_cast<size_t>(i) * n + j];
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::add(Var a, Var b) {
  check_mine(a);
  check_mine(b);
  const Node& na = at(a.id_);
  const Node& nb = at(b.id_);
  if (na.shape != nb.shape)
    throw ConfigError("add shapes " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node out;
  out.op = OpKind::Add;
  out.shape = na.shape;
  out.value.resize(na.value.size());
  for (size_t i = 0; i < out.value.size(); ++i) out.value[i] = na.value[i] + nb.value[i];
  out.a = a.id_;
  out.b = b.id_;
  return push(std::move(out));
}

Var Tape::add_row(Var a, Var bias) {
  check_mine(a);
  check_mine(bias);
  const Node& na = at(a.id_);
  const Node& nb = at(bias.id_);
  if (na.shape.size() != 2 || numel(nb.shape) != na.shape[1])
    throw ConfigError("add_row shapes " + shape_str(na.shape) + " + " + shape_str(nb.shape));
  const int m = na.shape[0], n = na.shape[1];
  Node out;
  out.op = OpKind::AddRow;
  out.shape = na.shape;
  out.value.resize(na.value.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t off = static_cast<size_t>(i) * n + j;
      out.value[off] = na.value[off] + nb.value[static_cast<size_t>(j)];
    }
  out.a = a.id_;
  out.b = bias.id_;
  return push(std::move(out));
}

Var Tape::mul(Var a, Var b) {
  check_mine(a);
  check_mine(b);
  const Node& na = at(a.id_);
  const Node& nb = at(b.id_);
  if (na.shape != nb.shape)
    throw ConfigError("mul shapes " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node out;
  out.op = OpKind::Mul;
  out.shape = na.shape;
  out.value.resize(na.value.size());
  for (size_t i = 0; i < out.value.size(); ++i) out.value[i] = na.value[i] * nb.value[i];
  out.a = a.id_;
  out.b = b.id_;
  return push(std::move(out));
}

Var Tape::scale(Var a, Real c) {
  check_mine(a);
  const Node& na = at(a.id_);
  Node out;
  out.op = OpKind::Scale;
  out.shape = na.shape;
  out.attr = c;
  out.value.resize(na.value.size());
  for (size_t i = 0; i < out.value.size(); ++i) out.value[i] = c * na.value[i];
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::relu(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  Node out;
  out.op = OpKind::Relu;
  out.shape = na.shape;
  out.value.resize(na.value.size());
  for (size_t i = 0; i < out.value.size(); ++i) out.value[i] = na.value[i] > 0.0 ? na.value[i] : 0.0;
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::softmax_last(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  if (na.shape.empty()) throw ConfigError("softmax_last of scalar");
  const int last = na.shape.back();
  const int64_t rows = numel(na.shape) / last;
  Node out;
  out.op = OpKind::SoftmaxLast;
  out.shape = na.shape;
  out.value.resize(na.value.size());
  for (int64_t r = 0; r < rows; ++r) {
    const Real* x = na.value.data() + r * last;
    Real* y = out.value.data() + r * last;
    Real mx = x[0];
    for (int j = 1; j < last; ++j) mx = std::max(mx, x[j]);
    Real sum = 0.0;
    for (int j = 0; j < last; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const Real inv = 1.0 / sum;
    for (int j = 0; j < last; ++j) y[j] *= inv;
  }
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::log_clamped(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  Node out;
  out.op = OpKind::LogClamped;
  out.shape = na.shape;
  out.value.resize(na.value.size());
  for (size_t i = 0; i < out.value.size(); ++i)
    out.value[i] = std::log(std::max(na.value[i], kLogEps));
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::sum_all(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  Real s = 0.0;
  for (Real v : na.value) s += v;
  Node out;
  out.op = OpKind::SumAll;
  out.shape = {1};
  out.value = {s};
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::sum_last(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  if (na.shape.empty()) throw ConfigError("sum_last of scalar");
  const int last = na.shape.back();
  const int64_t rows = numel(na.shape) / last;
  Node out;
  out.op = OpKind::SumLast;
  out.shape = Shape(na.shape.begin(), na.shape.end() - 1);
  if (out.shape.empty()) out.shape = {1};
  out.value.assign(static_cast<size_t>(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const Real* x = na.value.data() + r * last;
    Real s = 0.0;
    for (int j = 0; j < last; ++j) s += x[j];
    out.value[static_cast<size_t>(r)] = s;
  }
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::mean_all(Var a) {
  check_mine(a);
  const Node& na = at(a.id_);
  Real s = 0.0;
  for (Real v : na.value) s += v;
  Node out;
  out.op = OpKind::MeanAll;
  out.shape = {1};
  out.value = {s / static_cast<Real>(na.value.size())};
  out.a = a.id_;
  return push(std::move(out));
}

Var Tape::reshape(Var a, Shape shape) {
  check_mine(a);
  const Node& na = at(a.id_);
  if (numel(shape) != numel(na.shape))
    throw ConfigError("reshape " + shape_str(na.shape) + " -> " + shape_str(shape));
  Node out;
  out.op = OpKind::Reshape;
  out.shape = std::move(shape);
  out.value = na.value;
  out.a = a.id_;
  return push(std::move(out));
}

void Tape::backward(Var root) {
  check_mine(root);
  if (numel(at(root.id_).shape) != 1)
    throw UsageError("backward root must be scalar, got shape " + shape_str(at(root.id_).shape));

  std::vector<char> touched(nodes_.size(), 0);
  for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  at(root.id_).grad[0] = 1.0;
  touched[static_cast<size_t>(root.id_)] = 1;

  // Issue order is already topological, so one reverse sweep suffices and
  // visits each node exactly once.
  for (int id = root.id_; id >= 0; --id) {
    if (!touched[static_cast<size_t>(id)]) continue;
    Node& n = at(id);
    const auto mark = [&](int in) { touched[static_cast<size_t>(in)] = 1; };
    switch (n.op) {
      case OpKind::Leaf:
        break;
      case OpKind::Matmul: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        const int m = na.shape[0], k = na.shape[1], cols = nb.shape[1];
        gemm_nt_acc(n.grad.data(), nb.value.data(), na.grad.data(), m, cols, k);
        gemm_tn_acc(na.value.data(), n.grad.data(), nb.grad.data(), m, k, cols);
        mark(n.a);
        mark(n.b);
        break;
      }
      case OpKind::Transpose: {
        Node& na = at(n.a);
        const int m = na.shape[0], cols = na.shape[1];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < cols; ++j)
            na.grad[static_cast<size_t>(i) * cols + j] += n.grad[static_cast<size_t>(j) * m + i];
        mark(n.a);
        break;
      }
      case OpKind::Add: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        for (size_t i = 0; i < n.grad.size(); ++i) {
          na.grad[i] += n.grad[i];
          nb.grad[i] += n.grad[i];
        }
        mark(n.a);
        mark(n.b);
        break;
      }
      case OpKind::AddRow: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        const int m = na.shape[0], cols = na.shape[1];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < cols; ++j) {
            const size_t off = static_cast<size_t>(i) * cols + j;
            na.grad[off] += n.grad[off];
            nb.grad[static_cast<size_t>(j)] += n.grad[off];
          }
        mark(n.a);
        mark(n.b);
        break;
      }
      case OpKind::Mul: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        for (size_t i = 0; i < n.grad.size(); ++i) {
          na.grad[i] += n.grad[i] * nb.value[i];
          nb.grad[i] += n.grad[i] * na.value[i];
        }
        mark(n.a);
        mark(n.b);
        break;
      }
      case OpKind::Scale: {
        Node& na = at(n.a);
        for (size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += n.attr * n.grad[i];
        mark(n.a);
        break;
      }
      case OpKind::Relu: {
        Node& na = at(n.a);
        for (size_t i = 0; i < n.grad.size(); ++i)
          if (na.value[i] > 0.0) na.grad[i] += n.grad[i];
        mark(n.a);
        break;
      }
      case OpKind::SoftmaxLast: {
        Node& na = at(n.a);
        const int last = n.shape.back();
        const int64_t rows = numel(n.shape) / last;
        for (int64_t r = 0; r < rows; ++r) {
          const Real* y = n.value.data() + r * last;
          const Real* g = n.grad.data() + r * last;
          Real* gx = na.grad.data() + r * last;
          Real dot = 0.0;
          for (int j = 0; j < last; ++j) dot += g[j] * y[j];
          for (int j = 0; j < last; ++j) gx[j] += y[j] * (g[j] - dot);
        }
        mark(n.a);
        break;
      }
      case OpKind::LogClamped: {
        Node& na = at(n.a);
        for (size_t i = 0; i < n.grad.size(); ++i)
          if (na.value[i] > kLogEps) na.grad[i] += n.grad[i] / na.value[i];
        mark(n.a);
        break;
      }
      case OpKind::SumAll: {
        Node& na = at(n.a);
        const Real g = n.grad[0];
        for (size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g;
        mark(n.a);
        break;
      }
      case OpKind::SumLast: {
        Node& na = at(n.a);
        const int last = na.shape.back();
        const int64_t rows = numel(na.shape) / last;
        for (int64_t r = 0; r < rows; ++r) {
          const Real g = n.grad[static_cast<size_t>(r)];
          Real* gx = na.grad.data() + r * last;
          for (int j = 0; j < last; ++j) gx[j] += g;
        }
        mark(n.a);
        break;
      }
      case OpKind::MeanAll: {
        Node& na = at(n.a);
        const Real g = n.grad[0] / static_cast<Real>(na.grad.size());
        for (size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g;
        mark(n.a);
        break;
      }
      case OpKind::Reshape: {
        Node& na = at(n.a);
        for (size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += n.grad[i];
        mark(n.a);
        break;
      }
    }
  }
}

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "max_rel_err=%.3e at %s[%lld] analytic=%.9e numeric=%.9e%s (%lld evals)",
                max_rel_err, worst_leaf.empty() ? "<none>" : worst_leaf.c_str(),
                static_cast<long long>(worst_index), worst_analytic, worst_numeric,
                nonfinite ? " NONFINITE" : "", static_cast<long long>(evaluations));
  return buf;
}

GradCheckReport grad_check(const ScalarGraph& f, const std::vector<LeafSpec>& leaves,
                           double step, double fault_bias) {
  if (step <= 0.0) throw UsageError("grad_check step must be > 0");
  GradCheckReport report;

  const auto eval = [&](const std::vector<LeafSpec>& ls, std::vector<std::vector<Real>>* grads) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(ls.size());
    for (const LeafSpec& spec : ls) vars.push_back(tape.leaf(spec.shape, spec.values, spec.label));
    Var out = f(tape, vars);
    if (out.size() != 1) throw UsageError("grad_check function must return a scalar");
    const Real y = out.values()[0];
    if (!std::isfinite(y)) report.nonfinite = true;
    if (grads) {
      tape.backward(out);
      grads->clear();
      for (Var v : vars) {
        grads->emplace_back(v.grad().begin(), v.grad().end());
        for (Real g : grads->back())
          if (!std::isfinite(g)) report.nonfinite = true;
      }
    }
    ++report.evaluations;
    return y;
  };

  std::vector<std::vector<Real>> analytic;
  (void)eval(leaves, &analytic);
  if (fault_bias != 0.0 && !analytic.empty() && !analytic.front().empty())
    analytic.front().front() += fault_bias;

  std::vector<LeafSpec> work = leaves;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (size_t j = 0; j < leaves[li].values.size(); ++j) {
      const Real x0 = leaves[li].values[j];
      work[li].values[j] = x0 + step;
      const Real fp = eval(work, nullptr);
      work[li].values[j] = x0 - step;
      const Real fm = eval(work, nullptr);
      work[li].values[j] = x0;
      const Real numeric = (fp - fm) / (2.0 * step);
      if (!std::isfinite(numeric)) report.nonfinite = true;
      const Real a = analytic[li][j];
      const Real denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const Real rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_leaf = leaves[li].label.empty() ? ("leaf" + std::to_string(li)) : leaves[li].label;
        report.worst_index = static_cast<int64_t>(j);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace music
