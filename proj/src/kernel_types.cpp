#include "jntk/kernel_types.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "jntk/errors.hpp"

namespace jntk {

GramMatrix::GramMatrix(int n, int d0) : n_(n), d0_(d0) {
  if (n < 1 || d0 < 1) throw DomainError("Gram matrix needs n >= 1 and d0 >= 1");
  m_ = Eigen::MatrixXd::Zero(n * (d0 + 1), n * (d0 + 1));
}

GramMatrix::GramMatrix(int n, int d0, Eigen::MatrixXd entries) : n_(n), d0_(d0), m_(std::move(entries)) {
  if (m_.rows() != n * (d0 + 1) || m_.cols() != n * (d0 + 1)) {
    throw DomainError("Gram matrix entries have the wrong shape");
  }
}

KernelBlock GramMatrix::block(int i, int j) const {
  const int b = block_size();
  return m_.block(i * b, j * b, b, b);
}

void GramMatrix::set_block(int i, int j, const KernelBlock& blk) {
  const int b = block_size();
  if (blk.rows() != b || blk.cols() != b) throw DomainError("kernel block has the wrong shape");
  m_.block(i * b, j * b, b, b) = blk;
}

Eigen::MatrixXd GramMatrix::function_part() const {
  const int b = block_size();
  Eigen::MatrixXd out(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) out(i, j) = m_(i * b, j * b);
  return out;
}

double GramMatrix::asymmetry() const {
  if (m_.size() == 0) return 0.0;
  return (m_ - m_.transpose()).cwiseAbs().maxCoeff();
}

void GramMatrix::write_csv(std::ostream& os) const {
  os << "i,j,a,b,value\n";
  const int b = block_size();
  char buf[64];
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      for (int a = 0; a < b; ++a)
        for (int c = 0; c < b; ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", m_(i * b + a, j * b + c));
          os << i << ',' << j << ',' << a << ',' << c << ',' << buf << '\n';
        }
}

LambdaScaling::LambdaScaling(double lambda) : lambda_(lambda), root_(std::sqrt(lambda)) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw DomainError("lambda must lie in (0, 1], got " + std::to_string(lambda));
  }
}

KernelBlock apply_lambda(const KernelBlock& block, const LambdaScaling& s) {
  if (s.lambda() == 1.0) return block;
  KernelBlock out = block;
  const int b = static_cast<int>(block.rows());
  out.block(1, 1, b - 1, b - 1) *= s.lambda();
  out.block(0, 1, 1, b - 1) *= s.root();
  out.block(1, 0, b - 1, 1) *= s.root();
  return out;
}

GramMatrix apply_lambda(const GramMatrix& gram, const LambdaScaling& s) {
  if (s.lambda() == 1.0) return gram;
  const int b = gram.block_size();
  Eigen::VectorXd diag(gram.n() * b);
  for (int i = 0; i < gram.n(); ++i) {
    diag[i * b] = 1.0;
    for (int a = 1; a < b; ++a) diag[i * b + a] = s.root();
  }
  Eigen::MatrixXd m = diag.asDiagonal() * gram.matrix() * diag.asDiagonal();
  return GramMatrix(gram.n(), gram.d0(), std::move(m));
}

}  // namespace jntk
