#include "jntk/limiting_kernels.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "jntk/errors.hpp"

namespace jntk {

namespace {

struct GridValues {
  std::vector<double> phi_u, dphi_u, ddphi_u, phi_v, dphi_v, ddphi_v;
};

GridValues evaluate(const Activation& act, const BivariateGrid& grid, bool want_second) {
  const int n = grid.size();
  GridValues g;
  g.phi_u.resize(n);
  g.dphi_u.resize(n);
  g.phi_v.resize(n);
  g.dphi_v.resize(n);
  if (want_second) {
    g.ddphi_u.resize(n);
    g.ddphi_v.resize(n);
  }
  const auto u = grid.u();
  const auto v = grid.v();
  for (int k = 0; k < n; ++k) {
    const ActivationValues a = act.eval(u[k]);
    const ActivationValues b = act.eval(v[k]);
    g.phi_u[k] = a.value;
    g.dphi_u[k] = a.first;
    g.phi_v[k] = b.value;
    g.dphi_v[k] = b.first;
    if (want_second) {
      g.ddphi_u[k] = a.second;
      g.ddphi_v[k] = b.second;
    }
  }
  return g;
}

void check_joint_psd(const KernelBlock& s_xx, const KernelBlock& s_xy, const KernelBlock& s_yy,
                     int layer) {
  const int b = static_cast<int>(s_xx.rows());
  Eigen::MatrixXd joint(2 * b, 2 * b);
  joint << s_xx, s_xy, s_xy.transpose(), s_yy;
  joint = 0.5 * (joint + joint.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(joint, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (!joint.allFinite() || es.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw NumericError("Sigma^(" + std::to_string(layer) +
                       ") joint covariance is not positive semi-definite (min eigenvalue " +
                       std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
}

}  // namespace

KernelBlock sigma_base(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) {
  if (x.size() != xp.size()) throw DomainError("input dimensions differ");
  const int d0 = static_cast<int>(x.size());
  KernelBlock s = KernelBlock::Zero(d0 + 1, d0 + 1);
  s(0, 0) = x.dot(xp);
  s.block(0, 1, 1, d0) = x.transpose();
  s.block(1, 0, d0, 1) = xp;
  s.block(1, 1, d0, d0).setIdentity();
  return s;
}

LimitingKernel::LimitingKernel(Activation act, int depth, KernelOptions opts)
    : act_(act), depth_(depth), opts_(opts) {
  if (depth < 1) throw DomainError("depth must be at least 1");
  if (act.oracle_only() && depth > 1 && !opts.allow_unsafe_activation) {
    throw DomainError(
        "the square activation is only supported at depth 1 (pass --unsafe-activation to override)");
  }
  rule_ = &cached_gh_rule(opts.quad_order);
}

void LimitingKernel::check_input(const Eigen::VectorXd& x) const {
  if (!x.allFinite()) throw DomainError("non-finite input");
  if (!opts_.allow_off_sphere && std::abs(x.norm() - 1.0) > 1e-12) {
    throw DomainError("input must have unit norm (|x| = " + std::to_string(x.norm()) + ")");
  }
}

LimitingKernel::Step LimitingKernel::step(const KernelBlock& s_xx, const KernelBlock& s_xy,
                                          const KernelBlock& s_yy, bool want_sigma,
                                          bool want_gamma) const {
  const int b = static_cast<int>(s_xy.rows());
  const int d0 = b - 1;
  Eigen::Matrix2d cov;
  cov << s_xx(0, 0), s_xy(0, 0), s_xy(0, 0), s_yy(0, 0);
  const BivariateGrid grid(cov, *rule_);
  const GridValues g = evaluate(act_, grid, want_gamma);

  // Regression coefficients of w_a = g(x)_a and w'_b = g(x')_b on the
  // whitened (u, v) coordinates.
  Eigen::MatrixXd ca(2, d0), cb(2, d0);
  for (int a = 0; a < d0; ++a) {
    ca.col(a) = grid.coefficients(s_xx(0, a + 1), s_xy(a + 1, 0));
    cb.col(a) = grid.coefficients(s_xy(0, a + 1), s_yy(0, a + 1));
  }
  const Eigen::MatrixXd residual = s_xy.block(1, 1, d0, d0) - ca.transpose() * cb;

  Step out;
  if (want_sigma) {
    KernelBlock s(b, b);
    const PairMoments m00 = pair_moments(grid, g.phi_u, g.phi_v, MomentOrder::zeroth);
    const PairMoments m10 = pair_moments(grid, g.dphi_u, g.phi_v, MomentOrder::first);
    const PairMoments m01 = pair_moments(grid, g.phi_u, g.dphi_v, MomentOrder::first);
    const PairMoments m11 = pair_moments(grid, g.dphi_u, g.dphi_v, MomentOrder::second);
    s(0, 0) = m00.m0;
    s.block(1, 0, d0, 1) = ca.transpose() * m10.m1;
    s.block(0, 1, 1, d0) = (cb.transpose() * m01.m1).transpose();
    s.block(1, 1, d0, d0) = ca.transpose() * m11.m2 * cb + residual * m11.m0;
    out.sigma_next = std::move(s);
  }
  if (want_gamma) {
    KernelBlock gm(b, b);
    const PairMoments m11 = pair_moments(grid, g.dphi_u, g.dphi_v, MomentOrder::zeroth);
    const PairMoments m21 = pair_moments(grid, g.ddphi_u, g.dphi_v, MomentOrder::first);
    const PairMoments m12 = pair_moments(grid, g.dphi_u, g.ddphi_v, MomentOrder::first);
    const PairMoments m22 = pair_moments(grid, g.ddphi_u, g.ddphi_v, MomentOrder::second);
    gm(0, 0) = m11.m0;
    gm.block(1, 0, d0, 1) = ca.transpose() * m21.m1;
    gm.block(0, 1, 1, d0) = (cb.transpose() * m12.m1).transpose();
    gm.block(1, 1, d0, d0) = ca.transpose() * m22.m2 * cb + residual * m22.m0;
    out.gamma = std::move(gm);
  }
  return out;
}

std::vector<KernelBlock> LimitingKernel::sigma_chain(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& xp) const {
  return chain(x, xp).sigma;
}

KernelBlock LimitingKernel::gamma_block(const KernelBlock& s_xx, const KernelBlock& s_xy,
                                        const KernelBlock& s_yy) const {
  return step(s_xx, s_xy, s_yy, false, true).gamma;
}

KernelChain LimitingKernel::pair_chain(const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                                       const KernelChain& cx, const KernelChain& cy) const {
  KernelChain c;
  c.sigma.reserve(depth_ + 1);
  c.gamma.reserve(depth_);
  c.sigma.push_back(sigma_base(x, xp));
  for (int l = 0; l < depth_; ++l) {
    check_joint_psd(cx.sigma[l], c.sigma[l], cy.sigma[l], l);
    Step s = step(cx.sigma[l], c.sigma[l], cy.sigma[l], true, true);
    c.sigma.push_back(std::move(s.sigma_next));
    c.gamma.push_back(std::move(s.gamma));
  }
  return c;
}

std::vector<KernelChain> LimitingKernel::self_chains(const std::vector<Eigen::VectorXd>& inputs) const {
  std::vector<KernelChain> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    check_input(x);
    KernelChain c;
    c.sigma.push_back(sigma_base(x, x));
    for (int l = 0; l < depth_; ++l) {
      const KernelBlock& s = c.sigma[l];
      check_joint_psd(s, s, s, l);
      Step st = step(s, s, s, true, true);
      c.sigma.push_back(std::move(st.sigma_next));
      c.gamma.push_back(std::move(st.gamma));
    }
    out.push_back(std::move(c));
  }
  return out;
}

KernelChain LimitingKernel::chain(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const {
  if (x.size() != xp.size()) throw DomainError("input dimensions differ");
  const auto selves = self_chains({x, xp});
  return pair_chain(x, xp, selves[0], selves[1]);
}

KernelBlock assemble_jntk(const KernelChain& chain) {
  const int depth = static_cast<int>(chain.gamma.size());
  const int b = static_cast<int>(chain.sigma[0].rows());
  const int d0 = b - 1;
  KernelBlock theta = KernelBlock::Zero(b, b);

  std::vector<double> g00(depth);
  for (int u = 0; u < depth; ++u) g00[u] = chain.gamma[u](0, 0);
  // Product of Gamma_00 over [lo, depth) excluding up to two positions.
  auto prod_except = [&](int lo, int skip1, int skip2) {
    double p = 1.0;
    for (int u = lo; u < depth; ++u)
      if (u != skip1 && u != skip2) p *= g00[u];
    return p;
  };

  for (int l = 0; l <= depth; ++l) {
    const KernelBlock& s = chain.sigma[l];
    const double p = prod_except(l, -1, -1);
    Eigen::VectorXd sa = Eigen::VectorXd::Zero(d0);  // d/dx of the product
    Eigen::VectorXd sb = Eigen::VectorXd::Zero(d0);  // d/dx' of the product
    Eigen::MatrixXd sab = Eigen::MatrixXd::Zero(d0, d0);
    for (int u = l; u < depth; ++u) {
      const double rest = prod_except(l, u, -1);
      const KernelBlock& gm = chain.gamma[u];
      sa += rest * gm.block(1, 0, d0, 1);
      sb += rest * gm.block(0, 1, 1, d0).transpose();
      sab += rest * gm.block(1, 1, d0, d0);
      for (int v = l; v < depth; ++v) {
        if (v == u) continue;
        sab += prod_except(l, u, v) * gm.block(1, 0, d0, 1) *
               chain.gamma[v].block(0, 1, 1, d0);
      }
    }
    const double s00 = s(0, 0);
    const Eigen::VectorXd sa0 = s.block(1, 0, d0, 1);
    const Eigen::VectorXd s0b = s.block(0, 1, 1, d0).transpose();
    theta(0, 0) += s00 * p;
    theta.block(1, 0, d0, 1) += sa0 * p + s00 * sa;
    theta.block(0, 1, 1, d0) += (s0b * p + s00 * sb).transpose();
    theta.block(1, 1, d0, d0) += s.block(1, 1, d0, d0) * p + sa0 * sb.transpose() +
                                 sa * s0b.transpose() + s00 * sab;
  }
  return theta;
}

KernelBlock LimitingKernel::jntk(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const {
  return assemble_jntk(chain(x, xp));
}

double LimitingKernel::sigma00(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const {
  check_input(x);
  check_input(xp);
  double a = x.squaredNorm(), b = xp.squaredNorm(), c = x.dot(xp);
  for (int l = 0; l < depth_; ++l) {
    auto next = [&](double p, double q, double r) {
      Eigen::Matrix2d cov;
      cov << p, r, r, q;
      const BivariateGrid grid(cov, *rule_);
      const auto u = grid.u();
      const auto v = grid.v();
      const auto w = grid.weight();
      double acc = 0.0;
      for (int k = 0; k < grid.size(); ++k) acc += w[k] * act_.value(u[k]) * act_.value(v[k]);
      return acc;
    };
    const double na = next(a, a, a), nb = next(b, b, b), nc = next(a, b, c);
    a = na;
    b = nb;
    c = nc;
  }
  return c;
}

double LimitingKernel::jntk00(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) const {
  check_input(x);
  check_input(xp);
  double a = x.squaredNorm(), b = xp.squaredNorm(), c = x.dot(xp);
  std::vector<double> s00{c}, g00;
  for (int l = 0; l < depth_; ++l) {
    auto moments = [&](double p, double q, double r, double& sig, double& gam) {
      Eigen::Matrix2d cov;
      cov << p, r, r, q;
      const BivariateGrid grid(cov, *rule_);
      const auto u = grid.u();
      const auto v = grid.v();
      const auto w = grid.weight();
      double s = 0.0, gsum = 0.0;
      for (int k = 0; k < grid.size(); ++k) {
        const ActivationValues eu = act_.eval(u[k]);
        const ActivationValues ev = act_.eval(v[k]);
        s += w[k] * eu.value * ev.value;
        gsum += w[k] * eu.first * ev.first;
      }
      sig = s;
      gam = gsum;
    };
    double na, nb, nc, ga, gb, gc;
    moments(a, a, a, na, ga);
    moments(b, b, b, nb, gb);
    moments(a, b, c, nc, gc);
    a = na;
    b = nb;
    c = nc;
    s00.push_back(c);
    g00.push_back(gc);
  }
  double theta = 0.0;
  for (int l = 0; l <= depth_; ++l) {
    double p = s00[l];
    for (int u = l; u < depth_; ++u) p *= g00[u];
    theta += p;
  }
  return theta;
}

GramMatrix LimitingKernel::jntk_gram(const std::vector<Eigen::VectorXd>& inputs, double lambda) const {
  if (inputs.empty()) throw DomainError("empty dataset");
  const int n = static_cast<int>(inputs.size());
  const int d0 = static_cast<int>(inputs[0].size());
  for (const auto& x : inputs)
    if (x.size() != d0) throw DomainError("inconsistent input dimensions");
  const LambdaScaling scaling(lambda);
  const auto selves = self_chains(inputs);
  GramMatrix g(n, d0);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      KernelBlock blk;
      try {
        blk = (i == j) ? assemble_jntk(selves[i])
                       : assemble_jntk(pair_chain(inputs[i], inputs[j], selves[i], selves[j]));
      } catch (const NumericError& e) {
        throw NumericError("block (" + std::to_string(i) + "," + std::to_string(j) + "): " + e.what());
      }
      blk = apply_lambda(blk, scaling);
      if (i == j) blk = 0.5 * (blk + blk.transpose());
      g.set_block(i, j, blk);
      if (i != j) g.set_block(j, i, blk.transpose());
    }
  }
  return g;
}

GramMatrix LimitingKernel::sigma_gram(const std::vector<Eigen::VectorXd>& inputs) const {
  if (inputs.empty()) throw DomainError("empty dataset");
  const int n = static_cast<int>(inputs.size());
  const int d0 = static_cast<int>(inputs[0].size());
  const auto selves = self_chains(inputs);
  GramMatrix g(n, d0);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      KernelBlock blk = (i == j) ? selves[i].sigma.back()
                                 : pair_chain(inputs[i], inputs[j], selves[i], selves[j]).sigma.back();
      if (i == j) blk = 0.5 * (blk + blk.transpose());
      g.set_block(i, j, blk);
      if (i != j) g.set_block(j, i, blk.transpose());
    }
  }
  return g;
}

Eigen::MatrixXd LimitingKernel::jntk_row(const Eigen::VectorXd& xstar,
                                         const std::vector<Eigen::VectorXd>& inputs) const {
  const int n = static_cast<int>(inputs.size());
  const int b = static_cast<int>(xstar.size()) + 1;
  std::vector<Eigen::VectorXd> all{xstar};
  all.insert(all.end(), inputs.begin(), inputs.end());
  const auto selves = self_chains(all);
  Eigen::MatrixXd row(b, n * b);
  for (int i = 0; i < n; ++i) {
    row.block(0, i * b, b, b) = assemble_jntk(pair_chain(xstar, inputs[i], selves[0], selves[i + 1]));
  }
  return row;
}

CorrespondenceReport check_derivative_correspondence(const Activation& act, const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& xp, int depth,
                                                     CorrespondenceTarget which, double h,
                                                     KernelOptions opts) {
  if (!(h >= 1e-6 && h <= 1e-2)) throw DomainError("finite-difference step must lie in [1e-6, 1e-2]");
  {
    const LimitingKernel base(act, depth, opts);
    // Validates the base points under the caller's options.
    base.sigma00(x, xp);
  }
  KernelOptions ambient = opts;
  ambient.allow_off_sphere = true;
  const LimitingKernel k(act, depth, ambient);
  const KernelChain ch = k.chain(x, xp);
  const KernelBlock blk = (which == CorrespondenceTarget::sigma) ? ch.sigma.back() : assemble_jntk(ch);
  auto f = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return which == CorrespondenceTarget::sigma ? k.sigma00(a, b) : k.jntk00(a, b);
  };

  auto block_at = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const KernelChain c = k.chain(a, b);
    return which == CorrespondenceTarget::sigma ? KernelBlock(c.sigma.back()) : assemble_jntk(c);
  };

  // Errors are relative to the largest entry of the block: individual
  // derivative entries can vanish exactly (identity activation, a != b).
  const double scale = std::max(blk.cwiseAbs().maxCoeff(), 1e-300);
  const int d0 = static_cast<int>(x.size());
  CorrespondenceReport rep;
  auto record = [&](double exact, double fd) {
    const double err = std::abs(exact - fd);
    rep.max_abs_error = std::max(rep.max_abs_error, err);
    rep.max_rel_error = std::max(rep.max_rel_error, err / scale);
  };
  auto shifted = [&](const Eigen::VectorXd& v, int a, double s) {
    Eigen::VectorXd out = v;
    out[a] += s;
    return out;
  };
  for (int a = 0; a < d0; ++a) {
    record(blk(a + 1, 0), (f(shifted(x, a, h), xp) - f(shifted(x, a, -h), xp)) / (2 * h));
    record(blk(0, a + 1), (f(x, shifted(xp, a, h)) - f(x, shifted(xp, a, -h))) / (2 * h));
  }
  // Mixed entries: d/dx'_b of the (a, 0) column, which the loop above ties to
  // d/dx_a of the (0, 0) entry. A four-point mixed difference would divide
  // rounding noise by h^2.
  for (int b = 0; b < d0; ++b) {
    const KernelBlock up = block_at(x, shifted(xp, b, h));
    const KernelBlock down = block_at(x, shifted(xp, b, -h));
    for (int a = 0; a < d0; ++a) record(blk(a + 1, b + 1), (up(a + 1, 0) - down(a + 1, 0)) / (2 * h));
  }
  return rep;
}

}  // namespace jntk
