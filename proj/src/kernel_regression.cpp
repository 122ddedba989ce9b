#include "jntk/kernel_regression.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "jntk/errors.hpp"

namespace jntk {

Eigen::VectorXd stacked_targets(const Eigen::VectorXd& y, int d0) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(y.size() * (d0 + 1));
  for (int i = 0; i < y.size(); ++i) out[i * (d0 + 1)] = y[i];
  return out;
}

std::string to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::cholesky: return "cholesky";
    case SolveMethod::jittered_cholesky: return "jittered_cholesky";
    case SolveMethod::pseudo_inverse: return "pseudo_inverse";
  }
  return "unknown";
}

SolveResult solve_symmetric(const Eigen::MatrixXd& gram, const Eigen::VectorXd& y, bool override_assumption) {
  if (gram.rows() != gram.cols() || gram.rows() != y.size()) throw DomainError("Gram and targets disagree in size");
  const Eigen::MatrixXd g = 0.5 * (gram + gram.transpose());
  const double trace = g.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  if (es.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");

  SolveResult out;
  out.report.min_eig = es.eigenvalues().minCoeff();
  out.report.threshold = kMinEigRelThreshold * trace;
  if (!(out.report.min_eig > out.report.threshold) && !override_assumption) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "minimum Gram eigenvalue %.3g is not above the threshold %.3g", out.report.min_eig,
                  out.report.threshold);
    throw AssumptionViolation(msg, out.report.min_eig, out.report.threshold);
  }

  const double ynorm = std::max(y.norm(), 1e-300);
  auto residual = [&](const Eigen::VectorXd& c) { return (g * c - y).norm() / ynorm; };

  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() == Eigen::Success) {
    out.coef = llt.solve(y);
    out.report.residual = residual(out.coef);
    if (out.report.residual <= 1e-6) return out;
  }
  const double base = 1e-10 * trace / static_cast<double>(g.rows());
  for (int k = 0; k < 4; ++k) {
    const double jitter = base * std::pow(10.0, k);
    Eigen::MatrixXd gj = g;
    gj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> lj(gj);
    if (lj.info() != Eigen::Success) continue;
    out.coef = lj.solve(y);
    out.report.method = SolveMethod::jittered_cholesky;
    out.report.jitter = jitter;
    out.report.residual = residual(out.coef);
    if (out.report.residual <= 1e-6) return out;
  }
  const double lmax = es.eigenvalues().maxCoeff();
  Eigen::VectorXd inv = es.eigenvalues();
  for (int i = 0; i < inv.size(); ++i) inv[i] = inv[i] > 1e-10 * lmax ? 1.0 / inv[i] : 0.0;
  out.coef = es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * y);
  out.report.method = SolveMethod::pseudo_inverse;
  out.report.jitter = 0.0;
  out.report.residual = residual(out.coef);
  return out;
}

NtkRegressor::NtkRegressor(const LimitingKernel& kernel, Dataset ds, double lambda, bool override_assumption)
    : kernel_(kernel), ds_(std::move(ds)), lambda_(lambda) {
  ds_.validate();
  gram_ = kernel_.jntk_gram(ds_.inputs, lambda_);
  y_ = stacked_targets(ds_.targets, ds_.d0());
  SolveResult sr = solve_symmetric(gram_.matrix(), y_, override_assumption);
  coef_ = std::move(sr.coef);
  report_ = sr.report;
}

Eigen::MatrixXd NtkRegressor::kernel_row(const Eigen::VectorXd& xstar) const {
  Eigen::MatrixXd row = kernel_.jntk_row(xstar, ds_.inputs);
  const LambdaScaling scaling(lambda_);
  const int b = ds_.d0() + 1;
  for (int i = 0; i < ds_.n(); ++i) row.block(0, i * b, b, b) = apply_lambda(row.block(0, i * b, b, b), scaling);
  return row;
}

Eigen::VectorXd NtkRegressor::predict(const Eigen::VectorXd& xstar) const {
  if (xstar.size() != ds_.d0()) throw DomainError("query has the wrong dimension");
  return kernel_row(xstar) * coef_;
}

StandardNtkRegressor::StandardNtkRegressor(const LimitingKernel& kernel, Dataset ds, bool override_assumption)
    : kernel_(kernel), ds_(std::move(ds)) {
  ds_.validate();
  gram_ = kernel_.jntk_gram(ds_.inputs, 1.0).function_part();
  SolveResult sr = solve_symmetric(gram_, ds_.targets, override_assumption);
  coef_ = std::move(sr.coef);
  report_ = sr.report;
}

std::pair<double, Eigen::VectorXd> StandardNtkRegressor::value_and_gradient(const Eigen::VectorXd& xstar) const {
  const Eigen::MatrixXd row = kernel_.jntk_row(xstar, ds_.inputs);
  const int b = ds_.d0() + 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(b);
  for (int i = 0; i < ds_.n(); ++i) out += coef_[i] * row.col(i * b);
  return {out[0], out.tail(b - 1)};
}

std::vector<Eigen::VectorXd> perturb_inputs(const DifferentiablePredictor& predictor,
                                            const std::vector<Eigen::VectorXd>& inputs,
                                            const Eigen::VectorXd& labels, double step) {
  if (labels.size() != static_cast<Eigen::Index>(inputs.size())) throw DomainError("labels and inputs differ in count");
  std::vector<Eigen::VectorXd> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (step == 0.0) {
      out.push_back(inputs[i]);
      continue;
    }
    const auto [f, grad] = predictor(inputs[i]);
    const Eigen::VectorXd dir = 2.0 * (f - labels[i]) * grad;
    const double n = dir.norm();
    Eigen::VectorXd x = inputs[i];
    if (n > 0.0) x += step * dir / n;
    out.push_back(x / x.norm());
  }
  return out;
}

void normalise_eigenvector_signs(Eigen::MatrixXd& vecs) {
  for (int k = 0; k < vecs.cols(); ++k) {
    int best = 0;
    for (int i = 1; i < vecs.rows(); ++i)
      if (std::abs(vecs(i, k)) > std::abs(vecs(best, k))) best = i;
    if (vecs(best, k) < 0.0) vecs.col(k) *= -1.0;
  }
}

namespace {

double sign_accuracy(const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
  int ok = 0;
  for (int i = 0; i < f.size(); ++i)
    if (f[i] * y[i] > 0.0) ++ok;
  return f.size() ? static_cast<double>(ok) / static_cast<double>(f.size()) : 0.0;
}

Eigen::MatrixXd function_rows(const NtkRegressor& reg, const std::vector<Eigen::VectorXd>& points) {
  const int m = reg.gram().n() * reg.gram().block_size();
  Eigen::MatrixXd rows(points.size(), m);
  for (std::size_t t = 0; t < points.size(); ++t) rows.row(t) = reg.kernel_row(points[t]).row(0);
  return rows;
}

Eigen::MatrixXd feature_matrix(const NtkRegressor& reg, const EigenfeatureReport& rep, const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd out(rows.rows(), rep.retained.size());
  for (std::size_t k = 0; k < rep.retained.size(); ++k) {
    const int idx = rep.retained[k];
    const Eigen::VectorXd v = rep.eigenvectors.col(idx);
    const double w = v.dot(reg.targets()) / rep.eigenvalues[idx];
    out.col(k) = (rows * v) * w;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd eigenfeature_values(const NtkRegressor& reg, const EigenfeatureReport& rep,
                                    const std::vector<Eigen::VectorXd>& points) {
  return feature_matrix(reg, rep, function_rows(reg, points));
}

EigenfeatureReport eigenfeatures(const NtkRegressor& reg, const Dataset& test,
                                 std::pair<double, double> perturb_steps,
                                 const DifferentiablePredictor& attack) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reg.gram().matrix());
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition of the Gram failed");
  EigenfeatureReport rep;
  const int m = static_cast<int>(es.eigenvalues().size());
  rep.eigenvalues = es.eigenvalues().reverse();
  rep.eigenvectors = es.eigenvectors().rowwise().reverse();
  normalise_eigenvector_signs(rep.eigenvectors);
  const double lmax = rep.eigenvalues[0];
  for (int k = 0; k < m; ++k) {
    if (rep.eigenvalues[k] > kNullEigRel * lmax) rep.retained.push_back(k);
    else rep.skipped.push_back(k);
  }

  const Eigen::MatrixXd rows = function_rows(reg, test.inputs);
  const Eigen::MatrixXd feats = feature_matrix(reg, rep, rows);
  const Eigen::VectorXd full = rows * reg.coefficients();
  rep.acc_full = sign_accuracy(full, test.targets);
  if (feats.cols() > 0)
    rep.completeness_error = (feats.rowwise().sum() - full).cwiseAbs().maxCoeff();

  auto perturbed_feats = [&](double step) {
    if (step == 0.0) return feats;
    return feature_matrix(reg, rep, function_rows(reg, perturb_inputs(attack, test.inputs, test.targets, step)));
  };
  const Eigen::MatrixXd small = perturbed_feats(perturb_steps.first);
  const Eigen::MatrixXd large = perturbed_feats(perturb_steps.second);
  for (int k = 0; k < feats.cols(); ++k) {
    rep.acc.push_back(sign_accuracy(feats.col(k), test.targets));
    rep.acc_small.push_back(sign_accuracy(small.col(k), test.targets));
    rep.acc_large.push_back(sign_accuracy(large.col(k), test.targets));
  }
  return rep;
}

MinEigReport min_eig_sweep(const Activation& act, const Dataset& ds, const std::vector<int>& depths,
                           double lambda, KernelOptions opts) {
  ds.validate();
  MinEigReport rep;
  for (int i = 0; i < ds.n(); ++i)
    for (int j = i + 1; j < ds.n(); ++j)
      if (std::abs(ds.inputs[i].dot(ds.inputs[j])) >= 1.0 - 1e-12) rep.parallel_pairs.emplace_back(i, j);
  for (int depth : depths) {
    const LimitingKernel k(act, depth, opts);
    const GramMatrix g = k.jntk_gram(ds.inputs, lambda);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(g.matrix(), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ntk(g.function_part(), Eigen::EigenvaluesOnly);
    MinEigRow row;
    row.depth = depth;
    row.jntk_min = full.eigenvalues().minCoeff();
    row.ntk_min = ntk.eigenvalues().minCoeff();
    row.threshold = kMinEigRelThreshold * g.matrix().trace();
    row.assumption_ok = row.jntk_min > row.threshold;
    rep.rows.push_back(row);
  }
  return rep;
}

int auto_depth(const Activation& act, const Dataset& ds, double lambda, int max_depth, KernelOptions opts) {
  double last_min = 0.0, last_thr = 0.0;
  for (int depth = 1; depth <= max_depth; ++depth) {
    const MinEigReport rep = min_eig_sweep(act, ds, {depth}, lambda, opts);
    if (rep.rows[0].assumption_ok) return depth;
    last_min = rep.rows[0].jntk_min;
    last_thr = rep.rows[0].threshold;
  }
  throw AssumptionViolation("no depth up to " + std::to_string(max_depth) +
                                " satisfies the minimum-eigenvalue assumption",
                            last_min, last_thr);
}

void write_eigenfeature_csv(std::ostream& os, const EigenfeatureReport& rep) {
  os << "rank,eigenvalue,acc,acc_p_small,acc_p_large\n";
  char buf[160];
  for (std::size_t k = 0; k < rep.retained.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", rep.retained[k],
                  rep.eigenvalues[rep.retained[k]], rep.acc[k], rep.acc_small[k], rep.acc_large[k]);
    os << buf;
  }
}

void write_min_eig_csv(std::ostream& os, const MinEigReport& rep) {
  os << "depth,jntk_mineig,ntk_mineig,assumption_ok\n";
  char buf[128];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d\n", r.depth, r.jntk_min, r.ntk_min, r.assumption_ok ? 1 : 0);
    os << buf;
  }
}

}  // namespace jntk
