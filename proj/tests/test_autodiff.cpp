#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hydradoc/autodiff.hpp"
#include "hydradoc/error.hpp"
#include "support.hpp"

using namespace hydradoc;
using namespace hydradoc::ad;
using hydradoc::testing::random_matrix;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Central differences computed here, independent of grad_check.
Matrix numeric_grad(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double up = f(x);
    x.data()[i] = orig - h;
    const double down = f(x);
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

double max_rel(const Matrix& a, const Matrix& n) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), 1e-8});
    worst = std::max(worst, std::abs(a.data()[i] - n.data()[i]) / denom);
  }
  return worst;
}

using UnaryOp = std::function<Var(Tape&, const Var&)>;

// Reverse-mode gradient of sum(w (.) op(x)) with a fixed random weighting.
void expect_op_gradient(const UnaryOp& op, const Matrix& x0, double tol = 1e-6) {
  Tape probe;
  const Matrix w = random_matrix(op(probe, probe.constant(x0)).rows(), op(probe, probe.constant(x0)).cols(), 99);
  auto value = [&](const Matrix& x) {
    Tape t;
    return sum(mul(op(t, t.constant(x)), t.constant(w))).scalar();
  };
  Tape t;
  const Var x = t.variable(x0);
  t.backward(sum(mul(op(t, x), t.constant(w))));
  EXPECT_LT(max_rel(*t.grad(x), numeric_grad(value, x0)), tol);
}

}  // namespace

TEST(Autodiff, AddSubMulValues) {
  Tape t;
  const Var a = t.constant(mat({{1, 2}, {3, 4}}));
  const Var b = t.constant(mat({{10, 20}}));
  EXPECT_EQ(add(a, b).value(), mat({{11, 22}, {13, 24}}));
  EXPECT_EQ(sub(a, a).value(), Matrix::Zero(2, 2));
  EXPECT_EQ(mul(a, a).value(), mat({{1, 4}, {9, 16}}));
  EXPECT_EQ(matmul(a, a).value(), mat({{7, 10}, {15, 22}}));
  EXPECT_EQ(affine(a, 2.0, 1.0).value(), mat({{3, 5}, {7, 9}}));
  EXPECT_EQ(transpose(a).value(), mat({{1, 3}, {2, 4}}));
}

TEST(Autodiff, ShapeErrors) {
  Tape t;
  const Var a = t.constant(Matrix::Zero(2, 3));
  const Var b = t.constant(Matrix::Zero(3, 2));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(slice_cols(a, 2, 2), ShapeError);
  EXPECT_THROW(t.backward(a), ShapeError);
}

TEST(Autodiff, SumGradientIsOnes) {
  Tape t;
  const Var x = t.variable(mat({{1, 2, 3}}));
  t.backward(sum(x));
  EXPECT_EQ(*t.grad(x), mat({{1, 1, 1}}));
}

TEST(Autodiff, ProductRuleOnSharedInput) {
  // d/dx sum(x*x) = 2x, reaching x through two tape edges.
  Tape t;
  const Var x = t.variable(mat({{1.5, -2.0}}));
  t.backward(sum(mul(x, x)));
  EXPECT_EQ(*t.grad(x), mat({{3.0, -4.0}}));
}

TEST(Autodiff, MatmulGradient) {
  Tape t;
  const Matrix a0 = mat({{1, 2}, {3, 4}});
  const Matrix b0 = mat({{5, 6}, {7, 8}});
  const Var a = t.variable(a0);
  const Var b = t.variable(b0);
  t.backward(sum(matmul(a, b)));
  const Matrix ones = Matrix::Ones(2, 2);
  EXPECT_EQ(*t.grad(a), ones * b0.transpose());
  EXPECT_EQ(*t.grad(b), a0.transpose() * ones);
}

TEST(Autodiff, ConstantsHaveNoGradient) {
  Tape t;
  const Var c = t.constant(mat({{1}}));
  const Var x = t.variable(mat({{2}}));
  t.backward(sum(mul(c, x)));
  EXPECT_EQ(t.grad(c), nullptr);
  EXPECT_EQ(*t.grad(x), mat({{1}}));
}

TEST(Autodiff, ParametersAccumulateAcrossTapes) {
  Parameter p(mat({{3.0}}));
  p.zero_grad();
  for (int i = 0; i < 2; ++i) {
    Tape t;
    const Var v = t.parameter(p);
    t.backward(sum(mul(v, v)));
  }
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 12.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 0.0);
}

TEST(Autodiff, FrozenParameterGetsNoGradient) {
  Parameter p(mat({{3.0}}));
  p.zero_grad();
  p.requires_grad = false;
  Tape t;
  const Var v = t.parameter(p);
  EXPECT_FALSE(v.requires_grad());
  const Var x = t.variable(mat({{2.0}}));
  t.backward(sum(mul(v, x)));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 0.0);
  EXPECT_DOUBLE_EQ((*t.grad(x))(0, 0), 3.0);
}

TEST(Autodiff, ActivationValues) {
  Tape t;
  const Var x = t.constant(mat({{-1.0, 0.0, 2.0}}));
  EXPECT_EQ(relu(x).value(), mat({{0.0, 0.0, 2.0}}));
  EXPECT_DOUBLE_EQ(sigmoid(x).value()(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(tanh(x).value()(0, 2), std::tanh(2.0));
  EXPECT_EQ(clamp(x, -0.5, 1.0).value(), mat({{-0.5, 0.0, 1.0}}));
}

TEST(Autodiff, SigmoidSaturatesWithoutNan) {
  Tape t;
  const Var x = t.variable(mat({{-800.0, 800.0}}));
  const Var y = sigmoid(x);
  EXPECT_EQ(y.value(), mat({{0.0, 1.0}}));
  t.backward(sum(y));
  EXPECT_TRUE(t.grad(x)->allFinite());
}

TEST(Autodiff, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  Tape t;
  const Matrix x0 = random_matrix(4, 7, 1, 30.0);
  const Matrix s = softmax(t.constant(x0)).value();
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12);
  const Matrix shifted = softmax(t.constant((x0.array() + 1000.0).matrix())).value();
  EXPECT_LT((s - shifted).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix cols = softmax(t.constant(x0), Axis::Rows).value();
  for (Eigen::Index c = 0; c < 7; ++c) EXPECT_NEAR(cols.col(c).sum(), 1.0, 1e-12);
}

TEST(Autodiff, MaskedFillBlocksGradient) {
  Tape t;
  const Var x = t.variable(mat({{1.0, 2.0}}));
  const Var y = masked_fill(x, mat({{1.0, 0.0}}), -1e9);
  EXPECT_EQ(y.value(), mat({{1.0, -1e9}}));
  t.backward(sum(y));
  EXPECT_EQ(*t.grad(x), mat({{1.0, 0.0}}));
}

TEST(Autodiff, MaskedSoftmaxGivesExactZeros) {
  Tape t;
  const Var x = t.constant(random_matrix(1, 6, 3));
  const Matrix m = mat({{1, 1, 0, 1, 0, 0}});
  const Matrix s = softmax(masked_fill(x, m, -1e9)).value();
  EXPECT_EQ(s(0, 2), 0.0);
  EXPECT_EQ(s(0, 4), 0.0);
  EXPECT_EQ(s(0, 5), 0.0);
  EXPECT_NEAR(s.sum(), 1.0, 1e-12);
}

TEST(Autodiff, MeanPoolUsesOnlyMaskedRows) {
  Tape t;
  const Var x = t.variable(mat({{1, 2}, {3, 4}, {100, 100}}));
  const std::vector<std::uint8_t> mask{1, 1, 0};
  const Var p = mean_pool(x, Axis::Rows, mask);
  EXPECT_EQ(p.value(), mat({{2, 3}}));
  t.backward(sum(p));
  EXPECT_EQ(*t.grad(x), mat({{0.5, 0.5}, {0.5, 0.5}, {0, 0}}));
  const std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_THROW(mean_pool(x, Axis::Rows, none), InvalidArgument);
}

TEST(Autodiff, ConcatAndSlice) {
  Tape t;
  const Var a = t.variable(mat({{1, 2}}));
  const Var b = t.variable(mat({{3}}));
  const std::vector<Var> parts{a, b};
  const Var c = concat_cols(parts);
  EXPECT_EQ(c.value(), mat({{1, 2, 3}}));
  const Var s = slice_cols(c, 1, 2);
  EXPECT_EQ(s.value(), mat({{2, 3}}));
  t.backward(sum(s));
  EXPECT_EQ(*t.grad(a), mat({{0, 1}}));
  EXPECT_EQ(*t.grad(b), mat({{1}}));
  const std::vector<Var> rows{a, a};
  const Var r = concat_rows(rows);
  EXPECT_EQ(r.value(), mat({{1, 2}, {1, 2}}));
  EXPECT_EQ(slice_rows(r, 1, 1).value(), mat({{1, 2}}));
}

TEST(Autodiff, PrimitiveGradientsMatchFiniteDifferences) {
  const Matrix x0 = random_matrix(3, 4, 7, 2.0);
  const Matrix pos = (random_matrix(3, 4, 8).array().abs() + 0.2).matrix();
  const Matrix other = random_matrix(4, 2, 9);
  const Matrix row = random_matrix(1, 4, 10);
  const std::vector<std::uint8_t> mask{1, 0, 1};

  expect_op_gradient([](Tape&, const Var& x) { return sigmoid(x); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return tanh(x); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return log(x); }, pos);
  expect_op_gradient([](Tape&, const Var& x) { return softmax(x); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return softmax(x, Axis::Rows); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return transpose(x); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return affine(x, -1.5, 2.0); }, x0);
  expect_op_gradient([&](Tape& t, const Var& x) { return matmul(x, t.constant(other)); }, x0);
  expect_op_gradient([&](Tape& t, const Var& x) { return matmul(t.constant(other.transpose()), x); }, x0.transpose());
  expect_op_gradient([&](Tape& t, const Var& x) { return add(x, t.constant(row)); }, x0);
  expect_op_gradient([&](Tape& t, const Var& x) { return add(t.constant(x0), x); }, row);
  expect_op_gradient([&](Tape& t, const Var& x) { return mul(x, t.constant(pos)); }, x0);
  expect_op_gradient([&](Tape&, const Var& x) { return mean_pool(x, Axis::Rows, mask); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return slice_cols(x, 1, 2); }, x0);
  expect_op_gradient([](Tape&, const Var& x) { return mean(x); }, x0);
  // Away from the kink.
  expect_op_gradient([](Tape&, const Var& x) { return relu(x); }, (x0.array() + 0.05 * x0.array().sign()).matrix());
}

TEST(Autodiff, GradCheckOnQuadratic) {
  Parameter w(random_matrix(3, 2, 4));
  Parameter b(random_matrix(1, 2, 5));
  const Matrix x = random_matrix(5, 3, 6);
  auto loss = [&](Tape& t) {
    const Var y = add(matmul(t.constant(x), t.parameter(w)), t.parameter(b));
    return sum(mul(y, y));
  };
  std::vector<Parameter*> params{&w, &b};
  EXPECT_LT(grad_check(loss, params), 1e-6);
}

TEST(Autodiff, GradCheckDetectsWrongGradient) {
  // Half the dependence on w goes through a copy the tape cannot see.
  Parameter w(mat({{1.0, 2.0}}));
  auto loss = [&](Tape& t) {
    const Var v = t.parameter(w);
    const Var detached = t.constant(w.value);
    return sum(mul(v, detached));
  };
  std::vector<Parameter*> params{&w};
  EXPECT_GT(grad_check(loss, params), 0.1);
}

TEST(Autodiff, BackwardIsLinearInLoss) {
  const Matrix x0 = random_matrix(2, 3, 11);
  auto grad_of = [&](double scale) {
    Tape t;
    const Var x = t.variable(x0);
    t.backward(affine(sum(tanh(mul(x, x))), scale));
    return Matrix(*t.grad(x));
  };
  const Matrix g1 = grad_of(1.0);
  EXPECT_LT((grad_of(3.0) - 3.0 * g1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autodiff, DropoutIsDeterministicAndUnbiased) {
  Tape t;
  const Var x = t.variable(Matrix::Ones(200, 50));
  const Var a = dropout(x, 0.25, true, 42);
  const Var b = dropout(x, 0.25, true, 42);
  const Var c = dropout(x, 0.25, true, 43);
  EXPECT_EQ(a.value(), b.value());
  EXPECT_NE(a.value(), c.value());
  EXPECT_NEAR(a.value().mean(), 1.0, 0.03);
  for (Eigen::Index i = 0; i < a.value().size(); ++i) {
    const double v = a.value().data()[i];
    ASSERT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12);
  }
  EXPECT_EQ(dropout(x, 0.25, false, 42).value(), x.value());
  t.backward(sum(a));
  EXPECT_EQ(*t.grad(x), a.value());
  EXPECT_THROW(dropout(x, 1.0, true, 1), InvalidArgument);
}

TEST(Autodiff, ViewRefersWithoutCopy) {
  Matrix m = mat({{1, 2}});
  Tape t;
  const Var v = t.view(m);
  EXPECT_EQ(&v.value(), &m);
  EXPECT_FALSE(v.requires_grad());
}

TEST(Autodiff, ReplayIsBitIdentical) {
  const Matrix x0 = random_matrix(6, 5, 12);
  auto run = [&] {
    Tape t;
    const Var x = t.variable(x0);
    const Var y = softmax(matmul(tanh(x), transpose(x)));
    t.backward(sum(mul(y, y)));
    return Matrix(*t.grad(x));
  };
  EXPECT_EQ(run(), run());
}
