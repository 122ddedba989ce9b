#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

namespace jntk {

/// Probabilists' Gauss-Hermite rule: sum_k w_k f(z_k) ~= E[f(z)], z ~ N(0,1).
struct QuadratureRule {
  int order = 0;
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline constexpr int kDefaultQuadOrder = 64;
inline constexpr int kMaxQuadOrder = 256;

// Golub-Welsch followed by Newton polishing. 1 <= order <= 256.
QuadratureRule gh_rule(int order);

// Process-wide cache of gh_rule results; thread-safe.
const QuadratureRule& cached_gh_rule(int order);

using ScalarFn = std::function<double(double)>;

/// Covariance of (u, v, w, w') where (u, v) are the arguments of the two
/// integrand functions and w, w' are optional linear factors.
using JointCov4 = Eigen::Matrix4d;

// Eigenvalues of the (u, v) marginal at or below this fraction of
// max(1, largest eigenvalue) are treated as exact zeros.
inline constexpr double kMarginalEigenFloor = 1e-12;

/// Tensor Gauss-Hermite grid for (u, v) ~ N(0, C), built from the symmetric
/// square root of C so that it varies smoothly with C. Degenerate directions
/// of C are dropped (pseudo-inverse whitening).
class BivariateGrid {
 public:
  BivariateGrid(const Eigen::Matrix2d& cov, const QuadratureRule& rule);

  int size() const { return static_cast<int>(weight_.size()); }
  std::span<const double> u() const { return u_; }
  std::span<const double> v() const { return v_; }
  std::span<const double> z1() const { return z1_; }
  std::span<const double> z2() const { return z2_; }
  std::span<const double> weight() const { return weight_; }

  // Regression coefficients c with E[w | u, v] = c . z, given Cov(u,w), Cov(v,w).
  Eigen::Vector2d coefficients(double cov_uw, double cov_vw) const;

  // Number of marginal directions dropped by the eigenvalue floor (0, 1 or 2).
  int floored_directions() const { return floored_; }

 private:
  Eigen::Matrix2d pinv_sqrt_;
  std::vector<double> u_, v_, z1_, z2_, weight_;
  int floored_ = 0;
};

/// E[A(u) B(v)], E[A(u) B(v) z], E[A(u) B(v) z z^T] on a BivariateGrid.
struct PairMoments {
  double m0 = 0.0;
  Eigen::Vector2d m1 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
};

enum class MomentOrder { zeroth, first, second };

PairMoments pair_moments(const BivariateGrid& grid, std::span<const double> a_vals,
                         std::span<const double> b_vals, MomentOrder upto);

// E[a(u) b(v)] for (u, v) ~ N(0, cov).
double expect_pair(const ScalarFn& a, const ScalarFn& b, const Eigen::Matrix2d& cov,
                   const QuadratureRule& rule);

// E[a(u) w^{a_factor} b(v) w'^{b_factor}] for (u, v, w, w') ~ N(0, cov),
// computed by conditioning (w, w') on (u, v).
double expect_mixed(const ScalarFn& a, const ScalarFn& b, bool a_factor, bool b_factor,
                    const JointCov4& cov, const QuadratureRule& rule);

// Throws DomainError when cov has an eigenvalue below -tol * max(1, max|diag|).
void require_psd(const Eigen::MatrixXd& cov, double tol, const char* what);

}  // namespace jntk
