#include "hydradoc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hydradoc/error.hpp"

namespace hydradoc::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw InvalidArgument("operation on an unbound Var");
  return *a.tape();
}

Tape& common_tape(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw InvalidArgument("operands live on different tapes");
  return t;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const Matrix& Var::value() const { return tape_of(*this).value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a " + shape_str(v) + " tensor");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_of(*this).requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::view(const Matrix& value) {
  Node n;
  n.external = &value;
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.requires_grad = p.requires_grad;
  n.param = p.requires_grad ? &p : nullptr;
  return push(std::move(n));
}

Var Tape::parameter(const Parameter& p) {
  Node n;
  n.external = &p.value;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw InvalidArgument("operands live on different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw InvalidArgument("loss belongs to a different tape");
  Node& root = nodes_[loss.id()];
  if (value(loss.id()).size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(value(loss.id())));
  if (!root.requires_grad) return;
  for (auto& n : nodes_) n.grad.resize(0, 0);
  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.param->value.rows() || n.param->grad.cols() != n.param->value.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    }
  }
}

const Matrix* Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (!n.requires_grad) return nullptr;
  return &n.grad;
}

Var add(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return t.record(av + bv, {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g);
      tp.accumulate(ib, g);
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix out = av.rowwise() + bv.row(0);
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g);
      tp.accumulate_expr(ib, g.colwise().sum());
    });
  }
  throw ShapeError("add: " + shape_str(av) + " vs " + shape_str(bv));
}

Var sub(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ShapeError("sub: " + shape_str(av) + " vs " + shape_str(bv));
  return t.record(av - bv, {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate_expr(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ShapeError("mul: " + shape_str(av) + " vs " + shape_str(bv));
  return t.record(av.cwiseProduct(bv), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: " + shape_str(av) + " x " + shape_str(bv));
  Matrix out = av * bv;
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, tp.value(ia).transpose() * g);
  });
}

Var affine(const Var& a, double alpha, double beta) {
  Tape& t = tape_of(a);
  Matrix out = (alpha * a.value().array() + beta).matrix();
  return t.record(std::move(out), {a}, [ia = a.id(), alpha](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, alpha * g);
  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().transpose();
  return t.record(std::move(out), {a}, [ia = a.id()](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, g.transpose());
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.id(), c);
    c += p.cols();
  }
  return t.record(std::move(out), parts, [layout](Tape& tp, const Matrix& g) {
    for (const auto& [id, start] : layout) {
      if (tp.requires_grad(id)) tp.accumulate_expr(id, g.middleCols(start, tp.value(id).cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id(), r);
    r += p.rows();
  }
  return t.record(std::move(out), parts, [layout](Tape& tp, const Matrix& g) {
    for (const auto& [id, start] : layout) {
      if (tp.requires_grad(id)) tp.accumulate_expr(id, g.middleRows(start, tp.value(id).rows()));
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols out of range");
  Matrix out = a.value().middleCols(start, count);
  return t.record(std::move(out), {a}, [ia = a.id(), start, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
    full.middleCols(start, count) = g;
    tp.accumulate(ia, full);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows out of range");
  Matrix out = a.value().middleRows(start, count);
  return t.record(std::move(out), {a}, [ia = a.id(), start, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
    full.middleRows(start, count) = g;
    tp.accumulate(ia, full);
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([](double x) {
    // Split by sign so exp() never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const std::size_t self = t.size();
  return t.record(std::move(out), {a}, [ia = a.id(), self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    tp.accumulate_expr(ia, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t self = t.size();
  return t.record(std::move(out), {a}, [ia = a.id(), self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    tp.accumulate_expr(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), {a}, [ia = a.id()](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, (tp.value(ia).array() > 0.0).select(g, 0.0));
  });
}

Var log(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().log().matrix();
  return t.record(std::move(out), {a}, [ia = a.id()](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, (g.array() / tp.value(ia).array()).matrix());
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tape& t = tape_of(a);
  if (!(lo <= hi)) throw InvalidArgument("clamp: lo > hi");
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(out), {a}, [ia = a.id(), lo, hi](Tape& tp, const Matrix& g) {
    const auto& x = tp.value(ia).array();
    tp.accumulate_expr(ia, ((x >= lo) && (x <= hi)).select(g, 0.0));
  });
}

Var softmax(const Var& a, Axis axis) {
  Tape& t = tape_of(a);
  // Work row-wise on the transposed view for Axis::Rows.
  const bool by_rows = axis == Axis::Rows;
  Matrix x = by_rows ? Matrix(a.value().transpose()) : a.value();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    x.row(r) = (x.row(r).array() - m).exp().matrix();
    // Eigen's vectorized exp returns subnormals rather than 0 for very negative
    // inputs such as masked scores; keep those weights exactly zero.
    x.row(r) = (x.row(r).array() < std::numeric_limits<double>::min()).select(0.0, x.row(r));
    x.row(r) /= x.row(r).sum();
  }
  if (by_rows) x.transposeInPlace();
  const std::size_t self = t.size();
  return t.record(std::move(x), {a}, [ia = a.id(), self, by_rows](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    Matrix yg = y.cwiseProduct(g);
    if (by_rows) {
      Matrix s = yg.colwise().sum();
      tp.accumulate_expr(ia, yg - (y.array().rowwise() * s.row(0).array()).matrix());
    } else {
      Matrix s = yg.rowwise().sum();
      tp.accumulate_expr(ia, yg - (y.array().colwise() * s.col(0).array()).matrix());
    }
  });
}

Var masked_fill(const Var& a, const Matrix& mask, double fill) {
  Tape& t = tape_of(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("masked_fill: mask " + shape_str(mask) + " vs " + shape_str(a.value()));
  }
  Matrix out = (mask.array() != 0.0).select(a.value(), fill);
  return t.record(std::move(out), {a}, [ia = a.id(), mask](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, (mask.array() != 0.0).select(g, 0.0));
  });
}

Var mean_pool(const Var& a, Axis axis, std::span<const std::uint8_t> mask) {
  Tape& t = tape_of(a);
  const bool rows = axis == Axis::Rows;
  const Eigen::Index n = rows ? a.rows() : a.cols();
  if (static_cast<Eigen::Index>(mask.size()) != n) throw ShapeError("mean_pool: mask length mismatch");
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  const auto count = static_cast<double>(std::count_if(keep.begin(), keep.end(), [](auto m) { return m != 0; }));
  if (count == 0) throw InvalidArgument("mean_pool: every position is masked");
  const Matrix& x = a.value();
  Matrix out = rows ? Matrix::Zero(1, x.cols()) : Matrix::Zero(x.rows(), 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    if (rows) {
      out.row(0) += x.row(i);
    } else {
      out.col(0) += x.col(i);
    }
  }
  out /= count;
  return t.record(std::move(out), {a}, [ia = a.id(), keep, count, rows](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value(ia);
    Matrix full = Matrix::Zero(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (!keep[i]) continue;
      const auto k = static_cast<Eigen::Index>(i);
      if (rows) {
        full.row(k) = g.row(0) / count;
      } else {
        full.col(k) = g.col(0) / count;
      }
    }
    tp.accumulate(ia, full);
  });
}

Var dropout(const Var& a, double p, bool training, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix scale(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = unit_interval(mix64(seed ^ mix64(static_cast<std::uint64_t>(i))));
    scale.data()[i] = u >= p ? keep_scale : 0.0;
  }
  Matrix out = x.cwiseProduct(scale);
  return t.record(std::move(out), {a}, [ia = a.id(), scale = std::move(scale)](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, g.cwiseProduct(scale));
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [ia = a.id()](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(ia, Matrix::Constant(tp.value(ia).rows(), tp.value(ia).cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return affine(sum(a), 1.0 / n);
}

double grad_check(const std::function<Var(Tape&)>& loss_fn, std::span<Parameter* const> params, double h) {
  if (!(h > 0)) throw InvalidArgument("grad_check: step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape tape;
    return loss_fn(tape).scalar();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    if (!p->requires_grad) continue;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& theta = p->value.data()[i];
      const double saved = theta;
      theta = saved + h;
      const double up = evaluate();
      theta = saved - h;
      const double down = evaluate();
      theta = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace hydradoc::ad
