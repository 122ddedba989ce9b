#include "jntk/square_oracle.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "jntk/errors.hpp"
#include "jntk/limiting_kernels.hpp"

namespace jntk {

namespace {

// Kernel block of the pointwise product of two kernels, a(x,y) * b(x,y),
// including the derivative entries by the product rule.
KernelBlock product_block(const KernelBlock& a, const KernelBlock& b) {
  const int n = static_cast<int>(a.rows()) - 1;
  KernelBlock p(n + 1, n + 1);
  p(0, 0) = a(0, 0) * b(0, 0);
  p.block(1, 0, n, 1) = a.block(1, 0, n, 1) * b(0, 0) + a(0, 0) * b.block(1, 0, n, 1);
  p.block(0, 1, 1, n) = a.block(0, 1, 1, n) * b(0, 0) + a(0, 0) * b.block(0, 1, 1, n);
  p.block(1, 1, n, n) = a.block(1, 1, n, n) * b(0, 0) + a.block(1, 0, n, 1) * b.block(0, 1, 1, n) +
                        b.block(1, 0, n, 1) * a.block(0, 1, 1, n) + a(0, 0) * b.block(1, 1, n, n);
  return p;
}

}  // namespace

SquareKernelPair analytic_pair(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw DomainError("input dimensions differ");
  const int n = static_cast<int>(x.size());
  const double c = x.dot(y);
  const double xx = x.squaredNorm();
  const double yy = y.squaredNorm();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);

  SquareKernelPair p;
  p.sigma.resize(n + 1, n + 1);
  p.sigma(0, 0) = 2 * c * c + xx * yy;
  p.sigma.block(0, 1, 1, n) = (4 * c * x + 2 * xx * y).transpose();
  p.sigma.block(1, 0, n, 1) = 4 * c * y + 2 * yy * x;
  p.sigma.block(1, 1, n, n) = 4 * x * y.transpose() + 4 * y * x.transpose() + 4 * c * eye;

  p.sigma_dot.resize(n + 1, n + 1);
  p.sigma_dot(0, 0) = 4 * c;
  p.sigma_dot.block(0, 1, 1, n) = 4 * x.transpose();
  p.sigma_dot.block(1, 0, n, 1) = 4 * y;
  p.sigma_dot.block(1, 1, n, n) = 4 * eye;

  p.theta_sum = p.sigma + p.sigma_dot;
  p.theta = p.sigma + product_block(sigma_base(x, y), p.sigma_dot);
  return p;
}

GramMatrix analytic_gram(const std::vector<Eigen::VectorXd>& inputs, SquareKernel which) {
  if (inputs.empty()) throw DomainError("empty dataset");
  const int n = static_cast<int>(inputs.size());
  GramMatrix g(n, static_cast<int>(inputs[0].size()));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const SquareKernelPair p = analytic_pair(inputs[i], inputs[j]);
      switch (which) {
        case SquareKernel::sigma: g.set_block(i, j, p.sigma); break;
        case SquareKernel::sigma_dot: g.set_block(i, j, p.sigma_dot); break;
        case SquareKernel::theta_sum: g.set_block(i, j, p.theta_sum); break;
        case SquareKernel::theta: g.set_block(i, j, p.theta); break;
      }
    }
  return g;
}

NullVectors null_vectors(const std::vector<Eigen::VectorXd>& inputs) {
  if (inputs.empty()) throw DomainError("empty dataset");
  const int n = static_cast<int>(inputs.size());
  const int d0 = static_cast<int>(inputs[0].size());
  const int b = d0 + 1;
  for (int i = 0; i < n; ++i)
    if (inputs[i].squaredNorm() == 0.0) throw DomainError("input " + std::to_string(i) + " is the zero vector");
  NullVectors nv;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n * b);
    v[i * b] = -2.0;
    v.segment(i * b + 1, d0) = inputs[i];
    nv.v.push_back(std::move(v));
  }
  for (int i = 1; i < n; ++i) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n * b);
    w.segment(1, d0) = -inputs[i];
    w.segment(i * b + 1, d0) = inputs[0];
    nv.w.push_back(std::move(w));
  }
  return nv;
}

int numeric_rank(const Eigen::MatrixXd& m, double rel) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  int r = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > rel * lmax) ++r;
  return r;
}

RankReport rank_report(const std::vector<Eigen::VectorXd>& inputs) {
  RankReport rep;
  const int n = static_cast<int>(inputs.size());
  const int d0 = n ? static_cast<int>(inputs[0].size()) : 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double c = inputs[i].dot(inputs[j]);
      if (std::abs(std::abs(c) - inputs[i].norm() * inputs[j].norm()) <= 1e-12 * inputs[i].norm() * inputs[j].norm())
        rep.parallel_pairs.emplace_back(i, j);
    }
  rep.rank_sigma = numeric_rank(analytic_gram(inputs, SquareKernel::sigma).matrix());
  rep.rank_sigma_dot = numeric_rank(analytic_gram(inputs, SquareKernel::sigma_dot).matrix());
  const GramMatrix theta = analytic_gram(inputs, SquareKernel::theta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(theta.matrix(), Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> f00(theta.function_part(), Eigen::EigenvaluesOnly);
  rep.min_eig_theta = full.eigenvalues().minCoeff();
  rep.min_eig_theta00 = f00.eigenvalues().minCoeff();
  for (int i = 0; i < n; ++i) rep.predicted_rank_sigma += std::max(d0 - i, 0);
  rep.sigma_rank_matches = rep.rank_sigma == rep.predicted_rank_sigma;
  return rep;
}

}  // namespace jntk
