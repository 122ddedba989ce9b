#include "jntk/gaussian_expectations.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "jntk/errors.hpp"

namespace jntk {

namespace {

// Orthonormal probabilists' Hermite polynomials p_0..p_n at x.
// Returns p_n, fills p_{n-1} and sum_{k<n} p_k^2.
double orthonormal_hermite(int n, double x, double& p_prev, double& christoffel_sum) {
  double p_km1 = 0.0;
  double p_k = 1.0;
  christoffel_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    christoffel_sum += p_k * p_k;
    const double p_kp1 = (x * p_k - std::sqrt(static_cast<double>(k)) * p_km1) /
                         std::sqrt(static_cast<double>(k + 1));
    p_km1 = p_k;
    p_k = p_kp1;
  }
  p_prev = p_km1;
  return p_k;
}

}  // namespace

QuadratureRule gh_rule(int order) {
  if (order < 1 || order > kMaxQuadOrder) {
    throw DomainError("Gauss-Hermite order must lie in [1, 256], got " + std::to_string(order));
  }
  QuadratureRule rule;
  rule.order = order;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  if (order == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = 1.0;
    return rule;
  }

  // Jacobi matrix of the monic recurrence He_{k+1} = x He_k - k He_{k-1}.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("Gauss-Hermite eigen solve failed");

  for (int i = 0; i < order; ++i) {
    double x = es.eigenvalues()[i];
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      double p_prev = 0.0, csum = 0.0;
      const double p_n = orthonormal_hermite(order, x, p_prev, csum);
      const double dx = p_n / (std::sqrt(static_cast<double>(order)) * p_prev);
      x -= dx;
      if (std::abs(dx) <= 4e-16 * std::max(1.0, std::abs(x))) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NumericError("Gauss-Hermite Newton refinement did not converge at order " +
                         std::to_string(order));
    }
    rule.nodes[i] = x;
  }
  std::sort(rule.nodes.begin(), rule.nodes.end());
  // Enforce exact antisymmetry of the node set.
  for (int i = 0; i < order / 2; ++i) {
    const double a = 0.5 * (rule.nodes[order - 1 - i] - rule.nodes[i]);
    rule.nodes[i] = -a;
    rule.nodes[order - 1 - i] = a;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;

  double total = 0.0;
  for (int i = 0; i < order; ++i) {
    double p_prev = 0.0, csum = 0.0;
    orthonormal_hermite(order, rule.nodes[i], p_prev, csum);
    rule.weights[i] = 1.0 / csum;
  }
  for (int i = 0; i < order / 2; ++i) {
    const double w = 0.5 * (rule.weights[i] + rule.weights[order - 1 - i]);
    rule.weights[i] = w;
    rule.weights[order - 1 - i] = w;
  }
  for (double w : rule.weights) total += w;
  if (std::abs(total - 1.0) > 1e-12) {
    throw NumericError("Gauss-Hermite weights sum to " + std::to_string(total) + " at order " +
                       std::to_string(order));
  }
  return rule;
}

const QuadratureRule& cached_gh_rule(int order) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    it = cache.emplace(order, std::make_unique<QuadratureRule>(gh_rule(order))).first;
  }
  return *it->second;
}

void require_psd(const Eigen::MatrixXd& cov, double tol, const char* what) {
  const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo >= -tol * scale)) {
    throw DomainError(std::string(what) + " is not positive semi-definite (min eigenvalue " +
                      std::to_string(lo) + ")");
  }
}

BivariateGrid::BivariateGrid(const Eigen::Matrix2d& cov, const QuadratureRule& rule) {
  if (!cov.allFinite()) throw NumericError("non-finite covariance in Gaussian expectation");
  if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw DomainError("bivariate covariance is not symmetric");
  }
  Eigen::Matrix2d sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
  const Eigen::Vector2d evals = es.eigenvalues();
  const Eigen::Matrix2d q = es.eigenvectors();
  const double scale = std::max(1.0, evals.cwiseAbs().maxCoeff());
  if (evals.minCoeff() < -1e-10 * scale) {
    throw DomainError("bivariate covariance is not positive semi-definite (min eigenvalue " +
                      std::to_string(evals.minCoeff()) + ")");
  }
  Eigen::Vector2d root, inv_root;
  for (int k = 0; k < 2; ++k) {
    if (evals[k] <= kMarginalEigenFloor * scale) {
      root[k] = 0.0;
      inv_root[k] = 0.0;
      ++floored_;
    } else {
      root[k] = std::sqrt(evals[k]);
      inv_root[k] = 1.0 / root[k];
    }
  }
  const Eigen::Matrix2d sqrt_c = q * root.asDiagonal() * q.transpose();
  pinv_sqrt_ = q * inv_root.asDiagonal() * q.transpose();

  const int n = rule.order;
  u_.resize(n * n);
  v_.resize(n * n);
  z1_.resize(n * n);
  z2_.resize(n * n);
  weight_.resize(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int k = i * n + j;
      const double a = rule.nodes[i];
      const double b = rule.nodes[j];
      z1_[k] = a;
      z2_[k] = b;
      u_[k] = sqrt_c(0, 0) * a + sqrt_c(0, 1) * b;
      v_[k] = sqrt_c(1, 0) * a + sqrt_c(1, 1) * b;
      weight_[k] = rule.weights[i] * rule.weights[j];
    }
  }
}

Eigen::Vector2d BivariateGrid::coefficients(double cov_uw, double cov_vw) const {
  return pinv_sqrt_ * Eigen::Vector2d(cov_uw, cov_vw);
}

PairMoments pair_moments(const BivariateGrid& grid, std::span<const double> a_vals,
                         std::span<const double> b_vals, MomentOrder upto) {
  const auto w = grid.weight();
  const auto z1 = grid.z1();
  const auto z2 = grid.z2();
  const int n = grid.size();
  double m0 = 0.0, m1a = 0.0, m1b = 0.0, m2aa = 0.0, m2ab = 0.0, m2bb = 0.0;
  if (upto == MomentOrder::zeroth) {
    for (int k = 0; k < n; ++k) m0 += w[k] * a_vals[k] * b_vals[k];
  } else if (upto == MomentOrder::first) {
    for (int k = 0; k < n; ++k) {
      const double t = w[k] * a_vals[k] * b_vals[k];
      m0 += t;
      m1a += t * z1[k];
      m1b += t * z2[k];
    }
  } else {
    for (int k = 0; k < n; ++k) {
      const double t = w[k] * a_vals[k] * b_vals[k];
      const double ta = t * z1[k];
      const double tb = t * z2[k];
      m0 += t;
      m1a += ta;
      m1b += tb;
      m2aa += ta * z1[k];
      m2ab += ta * z2[k];
      m2bb += tb * z2[k];
    }
  }
  PairMoments out;
  out.m0 = m0;
  out.m1 = Eigen::Vector2d(m1a, m1b);
  out.m2 << m2aa, m2ab, m2ab, m2bb;
  return out;
}

double expect_pair(const ScalarFn& a, const ScalarFn& b, const Eigen::Matrix2d& cov,
                   const QuadratureRule& rule) {
  const BivariateGrid grid(cov, rule);
  double acc = 0.0;
  const auto u = grid.u();
  const auto v = grid.v();
  const auto w = grid.weight();
  for (int k = 0; k < grid.size(); ++k) acc += w[k] * a(u[k]) * b(v[k]);
  return acc;
}

double expect_mixed(const ScalarFn& a, const ScalarFn& b, bool a_factor, bool b_factor,
                    const JointCov4& cov, const QuadratureRule& rule) {
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw DomainError("JointCov4 is not symmetric");
  }
  require_psd(cov, 1e-10, "JointCov4");
  const BivariateGrid grid(cov.topLeftCorner<2, 2>(), rule);
  std::vector<double> av(grid.size()), bv(grid.size());
  for (int k = 0; k < grid.size(); ++k) {
    av[k] = a(grid.u()[k]);
    bv[k] = b(grid.v()[k]);
  }
  const MomentOrder order = (a_factor && b_factor) ? MomentOrder::second
                            : (a_factor || b_factor) ? MomentOrder::first
                                                     : MomentOrder::zeroth;
  const PairMoments m = pair_moments(grid, av, bv, order);
  const Eigen::Vector2d cw = grid.coefficients(cov(0, 2), cov(1, 2));
  const Eigen::Vector2d cw2 = grid.coefficients(cov(0, 3), cov(1, 3));
  if (a_factor && b_factor) {
    const double residual = cov(2, 3) - cw.dot(cw2);
    return cw.dot(m.m2 * cw2) + residual * m.m0;
  }
  if (a_factor) return cw.dot(m.m1);
  if (b_factor) return cw2.dot(m.m1);
  return m.m0;
}

}  // namespace jntk
