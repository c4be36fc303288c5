#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "apbm/problem.hpp"
#include "apbm/subproblem.hpp"

using namespace apbm;

namespace {

// Sort-based O(M log M) projection (Held, Wolfe, Crowder).
Vector project_simplex_sorted(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  return (v.array() - tau).max(0.0).matrix();
}

Vector random_vector(NormalStream& rs, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rs.next();
  return v;
}

Vector random_simplex_point(NormalStream& rs, Eigen::Index M) {
  Vector p(M);
  for (Eigen::Index i = 0; i < M; ++i) p[i] = -std::log(rs.uniform());
  return p / p.sum();
}

Matrix random_matrix(NormalStream& rs, Eigen::Index r, Eigen::Index c) {
  Matrix A(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) A(i, j) = rs.next();
  return A;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(ProjectSimplex, AlreadyOnSimplex) {
  const Vector p = project_simplex(vec({0.5, 0.5}));
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(ProjectSimplex, SingleActiveCoordinate) {
  const Vector p = project_simplex(vec({2.0, 0.0}));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
}

TEST(ProjectSimplex, UniformShift) {
  const Vector p = project_simplex(vec({0.6, 0.6}));
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
  EXPECT_LE((p - project_simplex_sorted(vec({0.6, 0.6}))).norm(), 1e-15);
}

TEST(ProjectSimplex, ScalarAndNegativeInputs) {
  EXPECT_DOUBLE_EQ(project_simplex(vec({-7.0}))[0], 1.0);
  const Vector p = project_simplex(vec({-1.0, -2.0, -3.0}));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p.sum(), 1.0);
}

TEST(ProjectSimplex, RejectsBadInput) {
  EXPECT_THROW(project_simplex(vec({1.0, std::nan("")})), InvalidArgument);
  EXPECT_THROW(project_simplex(vec({std::numeric_limits<double>::infinity()})), InvalidArgument);
  EXPECT_THROW(project_simplex(Vector()), InvalidArgument);
}

TEST(ProjectSimplex, MatchesSortedOracleAndIsIdempotent) {
  NormalStream rs(31);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto M = static_cast<Eigen::Index>(1 + trial % 20);
    const double scale = trial % 3 == 0 ? 0.1 : (trial % 3 == 1 ? 1.0 : 10.0);
    const Vector v = random_vector(rs, M, scale);
    const Vector p = project_simplex(v);
    ASSERT_LE((p - project_simplex_sorted(v)).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
    ASSERT_TRUE((p.array() >= 0.0).all());
    ASSERT_NEAR(p.sum(), 1.0, 1e-12);
    const Vector pp = project_simplex(p);
    ASSERT_TRUE((pp.array() == p.array()).all()) << "trial " << trial;
  }
}

TEST(ProjectSimplex, DominatesRandomSimplexProbes) {
  NormalStream rs(32);
  for (int trial = 0; trial < 200; ++trial) {
    const auto M = static_cast<Eigen::Index>(1 + trial % 20);
    const Vector v = random_vector(rs, M, 2.0);
    const double d = (project_simplex(v) - v).squaredNorm();
    for (int probe = 0; probe < 100; ++probe)
      ASSERT_LE(d, (random_simplex_point(rs, M) - v).squaredNorm() + 1e-12);
  }
}

TEST(RecoverPrimal, VertexAndZeroSlopes) {
  NormalStream rs(4);
  const Matrix A = random_matrix(rs, 3, 5);
  const Vector y = random_vector(rs, 5);
  const Vector e1 = vec({1.0, 0.0, 0.0});
  EXPECT_LE((recover_primal(A, e1, y, 0.7) - (y - 0.7 * A.row(0).transpose())).norm(), 1e-15);
  EXPECT_EQ(recover_primal(Matrix::Zero(4, 5), Vector::Constant(4, 0.25), y, 3.0), y);
}

TEST(RecoverPrimal, MatchesElementwiseArithmetic) {
  NormalStream rs(5);
  const Matrix A = random_matrix(rs, 4, 6);
  const Vector y = random_vector(rs, 6);
  const Vector l = random_simplex_point(rs, 4);
  const double step = 0.3;
  const Vector x = recover_primal(A, l, y, step);
  for (Eigen::Index j = 0; j < 6; ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) acc += A(i, j) * l[i];
    EXPECT_NEAR(x[j], y[j] - step * acc, 1e-14);
  }
  EXPECT_THROW(recover_primal(A, Vector::Ones(3), y, step), InvalidArgument);
  EXPECT_THROW(recover_primal(A, l, Vector::Ones(5), step), InvalidArgument);
}

TEST(DualSolve, SingleCutIsGradientStep) {
  const Matrix A = vec({1.0, -2.0}).transpose();
  const Vector b = vec({0.5});
  const Vector y = vec({3.0, 1.0});
  const DualResult r = dual_solve(A, b, y, 0.25);
  EXPECT_EQ(r.lambda.size(), 1);
  EXPECT_EQ(r.lambda[0], 1.0);
  EXPECT_LE((r.x - vec({2.75, 1.5})).norm(), 1e-15);
  EXPECT_LE((qp_oracle_small(A, b, y, 0.25) - r.x).norm(), 1e-12);
}

TEST(DualSolve, SymmetricQuadraticCuts) {
  // Cuts of x^2/2 at -1 and 1: slopes -1, 1 and intercepts -1/2.
  Matrix A(2, 1);
  A << -1.0, 1.0;
  const Vector b = vec({-0.5, -0.5});
  const DualResult r = dual_solve(A, b, vec({0.0}), 1.0);
  EXPECT_NEAR(r.lambda[0], 0.5, 1e-10);
  EXPECT_NEAR(r.lambda[1], 0.5, 1e-10);
  EXPECT_NEAR(r.x[0], 0.0, 1e-10);
  EXPECT_NEAR(qp_oracle_small(A, b, vec({0.0}), 1.0)[0], 0.0, 1e-14);
}

TEST(DualSolve, ValidatesInputs) {
  const Matrix A = Matrix::Ones(2, 3);
  const Vector b = Vector::Zero(2), y = Vector::Zero(3);
  EXPECT_THROW(dual_solve(A, Vector::Zero(3), y, 1.0), InvalidArgument);
  EXPECT_THROW(dual_solve(A, b, Vector::Zero(2), 1.0), InvalidArgument);
  EXPECT_THROW(dual_solve(A, b, y, 0.0), InvalidArgument);
  DualOptions bad;
  bad.tolerance = 0.0;
  EXPECT_THROW(dual_solve(A, b, y, 1.0, bad), InvalidArgument);
  const Vector warm = Vector::Ones(3);
  EXPECT_THROW(dual_solve(A, b, y, 1.0, {}, &warm), InvalidArgument);
}

TEST(DualSolve, ZeroSlopeRowsAreConstantPieces) {
  Matrix A(2, 2);
  A << 0.0, 0.0, 1.0, 1.0;
  const Vector b = vec({0.25, -1.0});
  const Vector y = vec({1.0, 1.0});
  const DualResult r = dual_solve(A, b, y, 0.5);
  EXPECT_LE((r.x - qp_oracle_small(A, b, y, 0.5)).norm(), 1e-8);
}

TEST(DualSolve, CapIsReportedNotThrown) {
  NormalStream rs(9);
  const Matrix A = random_matrix(rs, 6, 4);
  const Vector b = random_vector(rs, 6);
  DualOptions opts;
  opts.tolerance = 1e-14;
  opts.max_iterations = 1;
  const DualResult r = dual_solve(A, b, Vector::Zero(4), 1.0, opts);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.kkt_residual, 10.0 * opts.tolerance);
}

class DualAgreement : public ::testing::TestWithParam<bool> {};

TEST_P(DualAgreement, MatchesActiveSetOracle) {
  NormalStream rs(2024);
  DualOptions opts;
  opts.tolerance = 1e-12;
  opts.accelerated = GetParam();
  for (int trial = 0; trial < 100; ++trial) {
    const auto M = static_cast<Eigen::Index>(1 + trial % 5);
    const auto n = static_cast<Eigen::Index>(1 + (trial / 5) % 8);
    const Matrix A = random_matrix(rs, M, n);
    const Vector b = random_vector(rs, M);
    const Vector y = random_vector(rs, n);
    const double step = 0.1 + 2.0 * rs.uniform();
    const DualResult r = dual_solve(A, b, y, step, opts);
    const Vector xo = qp_oracle_small(A, b, y, step);
    ASSERT_LE((r.x - xo).norm(), 1e-8) << "trial " << trial;
    ASSERT_TRUE((r.lambda.array() >= 0.0).all());
    ASSERT_NEAR(r.lambda.sum(), 1.0, 1e-12);
    ASSERT_TRUE(r.converged);
    EXPECT_LE((recover_primal(A, r.lambda, y, step) - r.x).norm(), 0.0);

    const double gap = primal_objective(A, b, y, step, r.x) - dual_objective(A, b, y, step, r.lambda);
    EXPECT_GE(gap, -1e-9);
    EXPECT_LE(gap, 1e-8);
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, DualAgreement, ::testing::Values(true, false),
                         [](const auto& info) { return info.param ? "accelerated" : "plain"; });

TEST(DualSolve, PlainAscentIsMonotone) {
  NormalStream rs(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto M = static_cast<Eigen::Index>(2 + trial % 8);
    const Matrix A = random_matrix(rs, M, 6);
    const Vector b = random_vector(rs, M);
    const Vector y = random_vector(rs, 6);
    DualOptions opts;
    opts.accelerated = false;
    opts.tolerance = 1e-12;
    double prev = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    opts.on_iterate = [&](const Vector& l) {
      const double q = dual_objective(A, b, y, 0.5, l);
      worst = std::max(worst, prev - q);
      prev = q;
    };
    dual_solve(A, b, y, 0.5, opts);
    EXPECT_LE(worst, 1e-12) << "trial " << trial;
  }
}

TEST(DualSolve, WarmStartNeedsFewerIterations) {
  NormalStream rs(12);
  const Matrix A = random_matrix(rs, 8, 20);
  const Vector b = random_vector(rs, 8);
  const Vector y = random_vector(rs, 20);
  const DualResult cold = dual_solve(A, b, y, 1.0);
  const DualResult warm = dual_solve(A, b, y, 1.0, {}, &cold.lambda);
  EXPECT_LE(warm.iterations, cold.iterations);
  EXPECT_LE((warm.x - cold.x).norm(), 1e-8);
}

TEST(DualSolve, LargeDimensionTiming) {
  NormalStream rs(10000);
  const Matrix A = random_matrix(rs, 10, 10000);
  const Vector b = random_vector(rs, 10);
  const Vector y = random_vector(rs, 10000);
  const auto t0 = std::chrono::steady_clock::now();
  const DualResult r = dual_solve(A, b, y, 1.0 / 10000.0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 1.0);
  EXPECT_TRUE(r.converged);
}

TEST(QpOracleSmall, DominatesRandomProbes) {
  NormalStream rs(11);
  const Matrix A = random_matrix(rs, 3, 5);
  const Vector b = random_vector(rs, 3);
  const Vector y = random_vector(rs, 5);
  const double step = 0.8;
  const Vector x = qp_oracle_small(A, b, y, step);
  const double best = primal_objective(A, b, y, step, x);
  double probe_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000000; ++i) {
    const Vector p = x + random_vector(rs, 5, i % 2 == 0 ? 0.01 : 1.0);
    probe_min = std::min(probe_min, primal_objective(A, b, y, step, p));
  }
  EXPECT_LE(best, probe_min);
}

TEST(QpOracleSmall, RejectsOversizedBundles) {
  EXPECT_THROW(qp_oracle_small(Matrix::Ones(13, 2), Vector::Zero(13), Vector::Zero(2), 1.0),
               InvalidArgument);
}
