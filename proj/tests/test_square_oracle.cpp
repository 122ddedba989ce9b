#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "jntk/errors.hpp"
#include "jntk/limiting_kernels.hpp"
#include "jntk/mlp.hpp"
#include "jntk/square_oracle.hpp"
#include "test_util.hpp"

using namespace jntk;
using jntk::testing::random_unit;
using jntk::testing::random_units;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::VectorXd random_gaussian(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

}  // namespace

TEST_CASE("analytic kernels on hand-worked inputs") {
  const Eigen::VectorXd x = vec({1.0, 0.0}), y = vec({0.0, 2.0});
  const SquareKernelPair p = analytic_pair(x, y);
  // <x,y> = 0, |x|^2 = 1, |y|^2 = 4.
  CHECK(p.sigma(0, 0) == 4.0);
  CHECK(p.sigma(0, 1) == 0.0);
  CHECK(p.sigma(0, 2) == 4.0);  // d/dy_2 of 2c^2 + |x|^2|y|^2 = 2 y_2
  CHECK(p.sigma(1, 0) == 8.0);  // d/dx_1: 2|y|^2 x_1
  CHECK(p.sigma(1, 2) == 8.0);  // 4 x_1 y_2 + 4 x_2 y_1
  CHECK(p.sigma(1, 1) == 0.0);
  CHECK(p.sigma_dot(0, 0) == 0.0);
  CHECK(p.sigma_dot(1, 1) == 4.0);
  CHECK(p.sigma_dot(1, 2) == 0.0);
  CHECK(p.theta_sum == p.sigma + p.sigma_dot);
  // theta = sigma + 4<x,y>^2 with its derivatives. At <x,y> = 0 only
  // d/dx_a d/dy_b = 8 x_b y_a survives, nonzero for a = 2, b = 1.
  KernelBlock extra = KernelBlock::Zero(3, 3);
  extra(2, 1) = 16.0;
  CHECK(p.theta - p.sigma == extra);
  const SquareKernelPair r = analytic_pair(x, vec({1.0, 2.0}));
  CHECK(r.theta(1, 1) - r.sigma(1, 1) == 8.0 * 1.0 * 1.0 + 8.0 * 1.0);
  CHECK(r.theta(2, 1) - r.sigma(2, 1) == 8.0 * 1.0 * 2.0);

  const SquareKernelPair q = analytic_pair(x, x);
  CHECK(q.sigma(0, 0) == 3.0);
  CHECK(q.sigma_dot(0, 0) == 4.0);
  CHECK(q.theta(0, 0) == 3.0 + 4.0);
  CHECK_THROWS_AS(analytic_pair(x, vec({1.0, 0.0, 0.0})), DomainError);
}

TEST_CASE("analytic kernels at a repeated basis vector and at orthogonal inputs") {
  const Eigen::VectorXd e1 = vec({1.0, 0.0});
  const SquareKernelPair p = analytic_pair(e1, e1);
  CHECK(p.sigma(0, 0) == 3.0);
  CHECK(p.sigma(1, 0) == 6.0);
  CHECK(p.sigma(1, 1) == 12.0);
  CHECK(p.sigma(2, 2) == 4.0);
  CHECK(p.sigma_dot(0, 0) == 4.0);

  const double s = 1.0 / std::sqrt(2.0);
  const SquareKernelPair q = analytic_pair(vec({s, s}), vec({s, -s}));
  CHECK(q.sigma(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(q.sigma_dot(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("analytic kernels match the quadrature recursion") {
  std::mt19937_64 rng(11);
  KernelOptions opts;
  opts.allow_off_sphere = true;
  opts.allow_unsafe_activation = true;
  const LimitingKernel k(Activation::make(ActivationKind::square, false), 1, opts);
  double worst = 0.0;
  for (int d0 : {2, 3, 5}) {
    for (int rep = 0; rep < 34; ++rep) {
      // Moderate norms keep the variances where the Gauss-Hermite rule is exact.
      const Eigen::VectorXd x = random_gaussian(d0, rng) / std::sqrt(d0);
      const Eigen::VectorXd y = random_gaussian(d0, rng) / std::sqrt(d0);
      const SquareKernelPair p = analytic_pair(x, y);
      const KernelChain c = k.chain(x, y);
      worst = std::max(worst, jntk::testing::max_rel_err(c.sigma[1], p.sigma));
      worst = std::max(worst, jntk::testing::max_rel_err(c.gamma[0], p.sigma_dot));
      worst = std::max(worst, jntk::testing::max_rel_err(k.jntk(x, y), p.theta));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("normalised square is the analytic kernel divided by three") {
  std::mt19937_64 rng(12);
  KernelOptions opts;
  opts.allow_unsafe_activation = true;
  const LimitingKernel k(Activation::make(ActivationKind::square, true), 1, opts);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd x = random_unit(4, rng), y = random_unit(4, rng);
    const SquareKernelPair p = analytic_pair(x, y);
    CHECK(jntk::testing::max_rel_err(k.jntk(x, y), KernelBlock(p.theta / 3.0)) <= 1e-10);
    CHECK(jntk::testing::max_rel_err(k.sigma_chain(x, y)[1], KernelBlock(p.sigma / 3.0)) <= 1e-10);
  }
}

TEST_CASE("a wide square network realises theta, not theta_sum") {
  std::mt19937_64 rng(13);
  const Eigen::VectorXd x = random_unit(3, rng), y = random_unit(3, rng);
  const SquareKernelPair p = analytic_pair(x, y);
  const Activation act = Activation::make(ActivationKind::square, false);
  KernelBlock mean = KernelBlock::Zero(4, 4);
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) mean += finite_jntk(init_mlp(100 + s, 4096, 1, 3, 1.0), act, x, y);
  mean /= seeds;
  const double to_theta = (mean - p.theta).norm();
  const double to_sum = (mean - p.theta_sum).norm();
  CHECK(to_theta < 0.25 * to_sum);
  CHECK(to_theta <= 0.05 * p.theta.norm());
}

TEST_CASE("explicit null vectors of the sigma Gram") {
  std::mt19937_64 rng(14);
  for (int d0 : {2, 3, 5}) {
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < 5; ++i) pts.push_back(random_gaussian(d0, rng));
    const Eigen::MatrixXd g = analytic_gram(pts, SquareKernel::sigma).matrix();
    const NullVectors nv = null_vectors(pts);
    CHECK(nv.v.size() == 5);
    CHECK(nv.w.size() == 4);
    for (const auto& v : nv.v) CHECK((g * v).norm() <= 1e-8 * g.norm() * v.norm());
    for (const auto& w : nv.w) CHECK((g * w).norm() <= 1e-8 * g.norm() * w.norm());
    Eigen::MatrixXd all(g.rows(), 9);
    for (int i = 0; i < 5; ++i) all.col(i) = nv.v[i];
    for (int i = 0; i < 4; ++i) all.col(5 + i) = nv.w[i];
    CHECK(numeric_rank(all.transpose() * all) == 9);
  }
  std::vector<Eigen::VectorXd> bad{vec({1.0, 0.0}), vec({0.0, 0.0})};
  CHECK_THROWS_AS(null_vectors(bad), DomainError);
  CHECK_THROWS_AS(null_vectors({}), DomainError);
}

TEST_CASE("rank report for six points in three dimensions") {
  std::mt19937_64 rng(15);
  const std::vector<Eigen::VectorXd> pts = random_units(6, 3, rng);
  const RankReport r = rank_report(pts);
  CHECK(r.rank_sigma_dot == 3);
  CHECK(r.rank_sigma == 6);
  CHECK(r.predicted_rank_sigma == 6);
  CHECK(r.sigma_rank_matches);
  CHECK(r.min_eig_theta <= 1e-8);
  CHECK(r.min_eig_theta00 > 1e-6);
  CHECK(r.parallel_pairs.empty());

  std::vector<Eigen::VectorXd> par = pts;
  par[1] = -par[0];
  CHECK(rank_report(par).parallel_pairs == std::vector<std::pair<int, int>>{{0, 1}});
}

TEST_CASE("numeric rank") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-9;
  CHECK(numeric_rank(m) == 1);
  m(1, 1) = 1e-7;
  CHECK(numeric_rank(m) == 2);
}
