#pragma once

#include <Eigen/Core>
#include <vector>

#include "jntk/activations.hpp"
#include "jntk/gaussian_expectations.hpp"
#include "jntk/kernel_types.hpp"

namespace jntk {

struct KernelOptions {
  int quad_order = kDefaultQuadOrder;
  // The square activation is only valid as a shallow (L = 1) oracle.
  bool allow_unsafe_activation = false;
  // Off-sphere inputs are evaluated by the same recursion but are refused
  // unless explicitly enabled.
  bool allow_off_sphere = false;
};

/// Sigma^(0..L) and Gamma^(0..L-1) for one ordered input pair.
struct KernelChain {
  std::vector<KernelBlock> sigma;
  std::vector<KernelBlock> gamma;
};

// Sigma^(0)(x, x').
KernelBlock sigma_base(const Eigen::VectorXd& x, const Eigen::VectorXd& xp);

/// Infinite-width Jacobian NNGP kernel and JNTK of a bias-free MLP of depth L.
class LimitingKernel {
 public:
  LimitingKernel(Activation act, int depth, KernelOptions opts = {});

  const Activation& activation() const { return act_; }
  int depth() const { return depth_; }
  const KernelOptions& options() const { return opts_; }

  // Sigma^(0..L)(x, x').
  std::vector<KernelBlock> sigma_chain(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const;

  // Gamma^(u)(x, x') from Sigma^(u) at (x,x), (x,x'), (x',x').
  KernelBlock gamma_block(const KernelBlock& s_xx, const KernelBlock& s_xy,
                          const KernelBlock& s_yy) const;

  KernelChain chain(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const;

  // Theta(x, x').
  KernelBlock jntk(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const;

  // Only the (0,0) entries: Sigma^(L)_00 and Theta_00. Cheap; used by the
  // finite-difference checks.
  double sigma00(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const;
  double jntk00(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const;

  // Gram of Theta_lambda over the inputs (columns of X are not used; each
  // entry of `inputs` is one point).
  GramMatrix jntk_gram(const std::vector<Eigen::VectorXd>& inputs, double lambda = 1.0) const;
  GramMatrix sigma_gram(const std::vector<Eigen::VectorXd>& inputs) const;

  // Theta(x*, x^(i)) for every training point, stacked horizontally:
  // (1+d0) x N(1+d0).
  Eigen::MatrixXd jntk_row(const Eigen::VectorXd& xstar,
                           const std::vector<Eigen::VectorXd>& inputs) const;

 private:
  struct Step {
    KernelBlock sigma_next;
    KernelBlock gamma;
  };
  // One layer of the recursion: Sigma^(l+1)(x,x') and Gamma^(l)(x,x').
  Step step(const KernelBlock& s_xx, const KernelBlock& s_xy, const KernelBlock& s_yy,
            bool want_sigma, bool want_gamma) const;
  void check_input(const Eigen::VectorXd& x) const;
  std::vector<KernelChain> self_chains(const std::vector<Eigen::VectorXd>& inputs) const;
  KernelChain pair_chain(const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                         const KernelChain& cx, const KernelChain& cy) const;

  Activation act_;
  int depth_;
  KernelOptions opts_;
  const QuadratureRule* rule_;
};

// Theta from a chain via the explicit sums over layers and Gamma positions.
KernelBlock assemble_jntk(const KernelChain& chain);

enum class CorrespondenceTarget { sigma, theta };

/// Discrepancy between the kernel's derivative entries and central finite
/// differences in ambient coordinates: (a,0) and (0,b) against the (0,0)
/// entry, (a,b) against the (a,0) column. The relative error is measured
/// against the largest entry of the block.
struct CorrespondenceReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

CorrespondenceReport check_derivative_correspondence(const Activation& act, const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& xp, int depth,
                                                     CorrespondenceTarget which, double h = 1e-4,
                                                     KernelOptions opts = {});

}  // namespace jntk
