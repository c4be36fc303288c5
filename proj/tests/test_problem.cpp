#include <cmath>
#include <memory>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "apbm/problem.hpp"

using namespace apbm;

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

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(LeastSquares, ScalarCaseClosedForm) {
  const double e = 1.7, v = -0.4;
  LeastSquaresInstance inst(mat({{e}}), vec({v}));
  EXPECT_NEAR(inst.smoothness(), e * e, 1e-12);
  for (double x : {-2.0, 0.0, 0.3, 5.0}) {
    Vector g;
    const double f = inst.value_grad(vec({x}), g);
    EXPECT_NEAR(f, 0.5 * (e * x - v) * (e * x - v), 1e-14);
    EXPECT_NEAR(g[0], e * (e * x - v), 1e-14);
  }
  EXPECT_NEAR(inst.optimal_value(), 0.0, 1e-15);
  EXPECT_NEAR(inst.optimal_point()[0], v / e, 1e-14);
}

TEST(LeastSquares, GenerationIsDeterministic) {
  const auto a = least_squares_new(30, 20, 99);
  const auto b = least_squares_new(30, 20, 99);
  const auto c = least_squares_new(30, 20, 100);
  EXPECT_TRUE((a.E().array() == b.E().array()).all());
  EXPECT_TRUE((a.w().array() == b.w().array()).all());
  EXPECT_FALSE((a.E().array() == c.E().array()).all());
  EXPECT_EQ(a.samples(), 30u);
  EXPECT_EQ(a.dimension(), 20u);
  EXPECT_EQ(a.seed(), 99u);
}

TEST(LeastSquares, EntriesLookStandardNormal) {
  const auto inst = least_squares_new(200, 200, 5);
  const double mean = inst.E().mean();
  const double var = (inst.E().array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(LeastSquares, FullScaleShape) {
  const auto inst = least_squares_new(800, 800, 1);
  EXPECT_EQ(inst.E().rows(), 800);
  EXPECT_EQ(inst.E().cols(), 800);
  EXPECT_EQ(inst.w().size(), 800);
  EXPECT_GT(inst.smoothness(), 0.0);
}

TEST(LeastSquares, OptimalValueMatchesNormalEquationsAndGradientDescent) {
  const auto inst = least_squares_new(100, 100, 42);
  const Matrix& E = inst.E();
  const Vector x_ne = (E.transpose() * E).ldlt().solve(E.transpose() * inst.w());
  const double f_ne = inst.value(x_ne);
  EXPECT_NEAR(inst.optimal_value(), f_ne, 1e-9 * (1.0 + std::abs(f_ne)));

  // cond(E^T E) ~ 9e3 here, so 10k plain gradient steps stop near 7e-4; they stay above f* and
  // decrease monotonically. The 1e-6 agreement is checked on a well-conditioned tall instance.
  auto descend = [](const LeastSquaresInstance& p, int iters) {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(p.dimension())), g;
    const double gamma = 1.0 / p.smoothness();
    double f = p.value_grad(x, g);
    for (int k = 0; k < iters; ++k) {
      x -= gamma * g;
      const double next = p.value_grad(x, g);
      EXPECT_LE(next, f + 1e-15);
      f = next;
    }
    return f;
  };
  const double f_square = descend(inst, 10000);
  EXPECT_GE(f_square, inst.optimal_value() - 1e-12);
  EXPECT_LT(f_square, inst.value(Vector::Zero(100)));

  const auto tall = least_squares_new(200, 50, 42);
  const double f_tall = descend(tall, 10000);
  EXPECT_NEAR(f_tall, tall.optimal_value(), 1e-6 * std::abs(tall.optimal_value()));
}

TEST(SmoothnessConstant, Identity) {
  for (int N : {1, 3, 10}) {
    LeastSquaresInstance inst(Matrix::Identity(N, N), Vector::Ones(N));
    EXPECT_NEAR(smoothness_constant(inst), 1.0 / N, 1e-12);
  }
}

TEST(SmoothnessConstant, Diagonal) {
  LeastSquaresInstance inst(mat({{3, 0}, {0, 1}}), vec({1, 1}));
  EXPECT_NEAR(smoothness_constant(inst), 4.5, 1e-9);
}

TEST(SmoothnessConstant, MatchesDenseEigensolver) {
  const auto inst = least_squares_new(50, 50, 7);
  Eigen::SelfAdjointEigenSolver<Matrix> es(inst.E().transpose() * inst.E());
  const double expected = es.eigenvalues().maxCoeff() / 50.0;
  EXPECT_NEAR(smoothness_constant(inst), expected, 1e-8 * expected);
}

TEST(SmoothnessConstant, SignalsNonConvergence) {
  const auto inst = least_squares_new(40, 40, 3);
  EXPECT_THROW(smoothness_constant(inst.E(), 1e-14, 2), NumericalError);
}

TEST(OptimalValue, IdentityRecoversTarget) {
  const Vector w0 = vec({1.5, -2.0, 0.25});
  LeastSquaresInstance inst(Matrix::Identity(3, 3), w0);
  EXPECT_NEAR(optimal_value(inst), 0.0, 1e-15);
  EXPECT_LE((inst.optimal_point() - w0).norm(), 1e-14);
}

TEST(OptimalValue, UnderdeterminedConsistent) {
  LeastSquaresInstance inst(mat({{1, 1}}), vec({2}));
  EXPECT_NEAR(optimal_value(inst), 0.0, 1e-15);
  EXPECT_NEAR(inst.optimal_point().sum(), 2.0, 1e-14);
}

TEST(OptimalValue, OverdeterminedHandSolve) {
  LeastSquaresInstance inst(mat({{1}, {1}, {1}}), vec({0, 1, 2}));
  EXPECT_NEAR(inst.optimal_point()[0], 1.0, 1e-14);
  EXPECT_NEAR(optimal_value(inst), 1.0 / 3.0, 1e-14);
  // Independent 1-D grid search.
  double best = std::numeric_limits<double>::infinity();
  for (int i = -3000; i <= 3000; ++i) best = std::min(best, inst.value(vec({i * 1e-3})));
  EXPECT_NEAR(best, 1.0 / 3.0, 1e-9);
  EXPECT_GE(best, optimal_value(inst) - 1e-15);
}

TEST(OptimalValue, RankDeficientStillFinite) {
  Matrix E(4, 3);
  E << 1, 2, 3, 2, 4, 6, 1, 0, 1, 2, 0, 2;  // column 3 = column 1 + column 2
  LeastSquaresInstance inst(E, vec({1, 2, 3, 4}));
  EXPECT_TRUE(std::isfinite(inst.optimal_value()));
  const Vector g = E.transpose() * (E * inst.optimal_point() - inst.w());
  EXPECT_LE(g.norm(), 1e-10);
}

TEST(OptimalValue, RejectsNonFiniteData) {
  Matrix E = Matrix::Identity(2, 2);
  E(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(LeastSquaresInstance(E, vec({1, 1})), std::exception);
}

TEST(ProblemOracle, RejectsBadConstruction) {
  auto eval = [](const Vector& x, Vector& g) {
    g = x;
    return 0.5 * x.squaredNorm();
  };
  EXPECT_THROW(ProblemOracle(0, eval, 1.0), InvalidArgument);
  EXPECT_THROW(ProblemOracle(2, eval, 0.0), InvalidArgument);
  EXPECT_THROW(ProblemOracle(2, eval, -1.0), InvalidArgument);
  ProblemOracle ok(2, eval, 1.0, 0.0, Vector::Zero(2));
  EXPECT_THROW(ok.value(Vector::Zero(3)), InvalidArgument);
}

class OracleProperties : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(OracleProperties, SampledInvariants) {
  const auto [N, n, seed] = GetParam();
  auto inst = std::make_shared<const LeastSquaresInstance>(least_squares_new(N, n, seed));
  const ProblemOracle f = make_oracle(inst);
  EXPECT_EQ(f.dimension(), static_cast<std::size_t>(n));
  ASSERT_TRUE(f.f_star().has_value());

  EXPECT_TRUE(check_lipschitz_gradient(f, 200, 11).passed);
  EXPECT_TRUE(check_convexity(f, 200, 12).passed);

  NormalStream rs(1234);
  const double fs = *f.f_star();
  for (int s = 0; s < 1000; ++s) {
    Vector x(n);
    for (int j = 0; j < n; ++j) x[j] = 3.0 * rs.next();
    EXPECT_GE(f.value(x) - fs, -1e-9 * (1.0 + std::abs(fs)));
  }

  for (int s = 0; s < 20; ++s) {
    Vector x(n), d(n);
    for (int j = 0; j < n; ++j) x[j] = rs.next();
    for (int j = 0; j < n; ++j) d[j] = rs.next();
    d.normalize();
    const double h = 1e-5 * (1.0 + x.norm());
    const double fd = (f.value(x + h * d) - f.value(x - h * d)) / (2.0 * h);
    const double an = f.value_grad(x).second.dot(d);
    EXPECT_LE(std::abs(fd - an), 1e-6 * std::max(1.0, std::abs(an)));
  }
}

INSTANTIATE_TEST_SUITE_P(Sizes, OracleProperties,
                         ::testing::Values(std::make_tuple(50, 50, 1), std::make_tuple(100, 100, 2),
                                           std::make_tuple(200, 100, 3), std::make_tuple(30, 60, 4)));

TEST(ProblemOracle, ConcurrentEvaluationIsConsistent) {
  auto inst = std::make_shared<const LeastSquaresInstance>(least_squares_new(60, 40, 8));
  const ProblemOracle f = make_oracle(inst);
  const Vector x = Vector::LinSpaced(40, -1.0, 1.0);
  const double ref = f.value(x);
  std::vector<double> got(4);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) pool.emplace_back([&, t] { got[t] = f.value(x); });
  for (auto& th : pool) th.join();
  for (double v : got) EXPECT_EQ(v, ref);
}
