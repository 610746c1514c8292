#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "hydradoc/tensor.hpp"

// Dense 2-D reverse-mode differentiation. A Tape records every op applied to its
// Vars; backward() walks the record in exact reverse order and accumulates
// gradients additively. Vectors are 1 x n rows.
namespace hydradoc::ad {

// A model weight living outside any tape. Gradients from every tape that reads
// it accumulate into `grad` until zero_grad().
struct Parameter {
  Matrix value;
  Matrix grad;
  bool requires_grad = true;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Called with the gradient of the op's output; pushes into inputs via accumulate().
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Constant that refers to `value` without copying; value must outlive the tape.
  Var view(const Matrix& value);
  Var variable(Matrix value);
  // Frozen parameters enter as constants and never receive gradient. The node
  // refers to p.value directly, so p must outlive the tape.
  Var parameter(Parameter& p);
  // Read-only view: always a constant.
  Var parameter(const Parameter& p);

  // Requires a 1x1 loss.
  void backward(const Var& loss);

  // Gradient w.r.t. v after backward(); nullptr if v does not require grad.
  const Matrix* grad(const Var& v) const;

  const Matrix& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op plumbing.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);
  void accumulate(std::size_t id, const Matrix& g);
  template <class Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  Var push(Node node);

  // deque keeps references to node values stable while recording.
  std::deque<Node> nodes_;
};

// Same-shape operands, or `b` a 1 x cols row broadcast over the rows of `a`.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Elementwise product; same-shape operands only.
Var mul(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
// alpha * a + beta
Var affine(const Var& a, double alpha, double beta = 0.0);
Var transpose(const Var& a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var log(const Var& a);
// Zero gradient outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);

enum class Axis { Rows = 0, Cols = 1 };

// Axis::Cols normalizes each row across its columns; Axis::Rows each column.
Var softmax(const Var& a, Axis axis = Axis::Cols);
// Entries where mask == 0 are replaced by `fill` (and get no gradient).
Var masked_fill(const Var& a, const Matrix& mask, double fill);
// Mean over the entries along `axis` whose mask flag is 1. Axis::Rows pools the
// rows of an n x d matrix into 1 x d using an n-long mask.
Var mean_pool(const Var& a, Axis axis, std::span<const std::uint8_t> mask);
// Inverted dropout: keeps with probability 1-p and scales by 1/(1-p). Identity
// when !training. The keep pattern is a pure function of (seed, element index).
Var dropout(const Var& a, double p, bool training, std::uint64_t seed);

Var sum(const Var& a);
Var mean(const Var& a);

// Central-difference check of d loss / d params against reverse mode. Returns
// the max over coordinates of |a-n| / max(|a|, |n|, 1e-8). Parameters that do
// not require grad are skipped.
double grad_check(const std::function<Var(Tape&)>& loss_fn, std::span<Parameter* const> params,
                  double h = 1e-5);

// splitmix64 finalizer; shared by dropout and seeded initialisation.
std::uint64_t mix64(std::uint64_t x) noexcept;
// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace hydradoc::ad
