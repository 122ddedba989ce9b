#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "jntk/kernel_types.hpp"

namespace jntk {

/// Closed-form shallow (L = 1) kernels of the unnormalised square activation
/// phi(z) = z^2, valid for inputs of any norm.
///
/// `sigma` is Sigma^(1) and `sigma_dot` is the Jacobian kernel of
/// E[phi'(<w,x>) phi'(<w,y>)] = 4<x,y>. `theta_sum` is sigma + sigma_dot.
/// `theta` is the JNTK of the network, whose first-layer term is the product
/// <x,y> * 4<x,y> together with all its derivatives.
struct SquareKernelPair {
  KernelBlock sigma;
  KernelBlock sigma_dot;
  KernelBlock theta_sum;
  KernelBlock theta;
};

SquareKernelPair analytic_pair(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

enum class SquareKernel { sigma, sigma_dot, theta_sum, theta };

GramMatrix analytic_gram(const std::vector<Eigen::VectorXd>& inputs, SquareKernel which);

struct NullVectors {
  std::vector<Eigen::VectorXd> v;  // v_1..v_N
  std::vector<Eigen::VectorXd> w;  // w_2..w_N
};

// Explicit vectors annihilated by the Sigma Gram.
NullVectors null_vectors(const std::vector<Eigen::VectorXd>& inputs);

struct RankReport {
  int rank_sigma = 0;
  int rank_sigma_dot = 0;
  double min_eig_theta = 0.0;
  double min_eig_theta00 = 0.0;
  int predicted_rank_sigma = 0;  // sum_{i<N} max(d0 - i, 0)
  bool sigma_rank_matches = false;
  std::vector<std::pair<int, int>> parallel_pairs;
};

// Numeric ranks count eigenvalues above 1e-8 * lambda_max.
int numeric_rank(const Eigen::MatrixXd& m, double rel = 1e-8);

RankReport rank_report(const std::vector<Eigen::VectorXd>& inputs);

}  // namespace jntk
