#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "jntk/activations.hpp"
#include "jntk/kernel_types.hpp"

namespace jntk {

/// Bias-free MLP f(x) = kappa * W^(L+1) h^(L)(x) / sqrt(d) with
/// g^(1) = W^(1) x, g^(l) = W^(l) h^(l-1) / sqrt(d), h^(l) = phi(g^(l)).
/// weights[l-1] holds W^(l).
struct MlpState {
  int d = 0;
  int depth = 0;
  int d0 = 0;
  double kappa = 1.0;
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> weights;

  // C_{l-1}: the normaliser of layer l's fan-in (1 for the first layer).
  double fan_in_scale(int layer) const { return layer == 1 ? 1.0 : static_cast<double>(d); }
  std::size_t parameter_count() const;
};

// Standard-normal weights; W^(l) is filled row-major from Philox stream l.
MlpState init_mlp(std::uint64_t seed, int d, int depth, int d0, double kappa);

/// Forward pass over a batch of n inputs. For every layer the pre-activations
/// are stored stacked as [g | jac_g]: the first n columns are g^(l)(x_i), the
/// column n + i*d0 + a is dg^(l)(x_i)/dx_a. The same layout is used for h.
struct ForwardTrace {
  int n = 0;
  int d0 = 0;
  int depth = 0;
  std::vector<Eigen::MatrixXd> pre;   // pre[l], l = 1..L+1 (pre[0] unused)
  std::vector<Eigen::MatrixXd> post;  // post[l], l = 0..L
  std::vector<Eigen::MatrixXd> dphi;  // phi'(g^(l)), l = 1..L, width x n
  std::vector<Eigen::MatrixXd> ddphi;
  Eigen::VectorXd f;         // n outputs
  Eigen::MatrixXd jacobian;  // d0 x n input Jacobians of f

  auto g(int l) const { return pre[l].leftCols(n); }
  auto jac_g(int l) const { return pre[l].rightCols(n * d0); }
  auto h(int l) const { return post[l].leftCols(n); }
  auto jac_h(int l) const { return post[l].rightCols(n * d0); }
};

/// Sensitivities stacked as [dg | dag | dajag] with n, n*d0 and n columns:
/// dg = df/dg^(l), dag = dJ_a/dg^(l), dajag = dJ_a/d(dg^(l)/dx_a).
struct BackwardTrace {
  int n = 0;
  int d0 = 0;
  std::vector<Eigen::MatrixXd> sens;  // sens[l], l = 1..L+1

  auto dg(int l) const { return sens[l].leftCols(n); }
  auto dag(int l) const { return sens[l].middleCols(n, n * d0); }
  auto dajag(int l) const { return sens[l].rightCols(n); }
};

// Inputs are the columns of X (d0 x n).
ForwardTrace forward(const MlpState& s, const Activation& act, const Eigen::MatrixXd& X);
BackwardTrace backward(const MlpState& s, const Activation& act, const ForwardTrace& fw);

double output(const MlpState& s, const Activation& act, const Eigen::VectorXd& x);
Eigen::VectorXd input_jacobian(const MlpState& s, const Activation& act, const Eigen::VectorXd& x);

struct ParamGradients {
  std::vector<Eigen::MatrixXd> df;               // df[l-1] = df/dW^(l)
  std::vector<std::vector<Eigen::MatrixXd>> dj;  // dj[a][l-1] = dJ_a/dW^(l)
};

ParamGradients param_gradients(const MlpState& s, const Activation& act, const Eigen::VectorXd& x);

// Finite JNTK over all pairs of the given inputs (not divided by kappa^2).
GramMatrix finite_jntk_gram(const MlpState& s, const Activation& act,
                            const std::vector<Eigen::VectorXd>& inputs);
KernelBlock finite_jntk(const MlpState& s, const Activation& act, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& xp);

// Monte-Carlo covariance of (f, J f) over independent initialisations,
// divided by kappa^2.
GramMatrix estimate_nngp(const Activation& act, int d, int depth,
                         const std::vector<Eigen::VectorXd>& inputs, double kappa, int samples,
                         std::uint64_t seed);

Eigen::MatrixXd stack_inputs(const std::vector<Eigen::VectorXd>& inputs);

void save_weights(const std::string& path, const MlpState& s);
MlpState load_weights(const std::string& path);

}  // namespace jntk
