#pragma once

#include <Eigen/Core>
#include <iosfwd>

namespace jntk {

/// (1+d0) x (1+d0) kernel block for one input pair. Index 0 is the function
/// component, index a in 1..d0 is the Jacobian coordinate x_{a-1}.
using KernelBlock = Eigen::MatrixXd;

/// Block matrix over a dataset; block (i, j) occupies rows i*(1+d0).. and
/// columns j*(1+d0)...
class GramMatrix {
 public:
  GramMatrix() = default;
  GramMatrix(int n, int d0);
  GramMatrix(int n, int d0, Eigen::MatrixXd entries);

  int n() const { return n_; }
  int d0() const { return d0_; }
  int block_size() const { return d0_ + 1; }

  const Eigen::MatrixXd& matrix() const { return m_; }
  Eigen::MatrixXd& matrix() { return m_; }

  KernelBlock block(int i, int j) const;
  void set_block(int i, int j, const KernelBlock& b);

  // N x N matrix of the (0,0) entries: the standard NTK / NNGP Gram.
  Eigen::MatrixXd function_part() const;

  // Max |G - G^T|.
  double asymmetry() const;

  // Rows `i,j,a,b,value` in lexicographic order, preceded by the header.
  void write_csv(std::ostream& os) const;

 private:
  int n_ = 0;
  int d0_ = 0;
  Eigen::MatrixXd m_;
};

/// Lambda = diag(1, sqrt(lambda), ..., sqrt(lambda)).
class LambdaScaling {
 public:
  explicit LambdaScaling(double lambda);
  double lambda() const { return lambda_; }
  double root() const { return root_; }

 private:
  double lambda_;
  double root_;
};

KernelBlock apply_lambda(const KernelBlock& block, const LambdaScaling& scaling);
GramMatrix apply_lambda(const GramMatrix& gram, const LambdaScaling& scaling);

}  // namespace jntk
