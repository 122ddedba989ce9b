#include "jntk/robust_training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "jntk/errors.hpp"
#include "jntk/rng.hpp"

namespace jntk {

void TrainConfig::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in (0, 1]");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("eta must be a finite non-negative number");
  if (steps < 1) throw DomainError("steps must be at least 1");
  if (!std::is_sorted(log_schedule.begin(), log_schedule.end()))
    throw DomainError("log schedule must be sorted");
  for (int t : log_schedule)
    if (t < 0 || t > steps) throw DomainError("log schedule entry " + std::to_string(t) + " outside [0, steps]");
}

std::vector<int> log2_schedule(int steps) {
  std::vector<int> out{0};
  for (long t = 1; t <= steps; t *= 2) out.push_back(static_cast<int>(t));
  if (out.back() != steps) out.push_back(steps);
  return out;
}

namespace {

double accuracy_of(const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
  int ok = 0;
  for (int i = 0; i < f.size(); ++i)
    if (f[i] * y[i] > 0.0) ++ok;
  return static_cast<double>(ok) / static_cast<double>(f.size());
}

}  // namespace

double objective(const Eigen::VectorXd& f, const Eigen::VectorXd& y, const Eigen::MatrixXd& jacobian,
                 double lambda) {
  if (f.size() != y.size() || jacobian.cols() != f.size()) throw DomainError("objective: size mismatch");
  return ((f - y).squaredNorm() + lambda * jacobian.squaredNorm()) / (2.0 * static_cast<double>(f.size()));
}

double loss(const MlpState& s, const Activation& act, const Dataset& ds, double lambda) {
  const ForwardTrace fw = forward(s, act, stack_inputs(ds.inputs));
  return objective(fw.f, ds.targets, fw.jacobian, lambda);
}

std::vector<Eigen::MatrixXd> loss_gradient(const MlpState& s, const Activation& act,
                                           const Dataset& ds, double lambda, double* loss_out,
                                           Eigen::VectorXd* f_out) {
  const ForwardTrace fw = forward(s, act, stack_inputs(ds.inputs));
  const BackwardTrace bw = backward(s, act, fw);
  const int n = fw.n;
  const int d0 = fw.d0;
  const Eigen::VectorXd r = fw.f - ds.targets;
  if (loss_out) *loss_out = objective(fw.f, ds.targets, fw.jacobian, lambda);
  if (f_out) *f_out = fw.f;

  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(s.depth + 1);
  for (int l = 1; l <= s.depth + 1; ++l) {
    const auto dg = bw.dg(l);
    const auto dag = bw.dag(l);
    const auto jh = fw.jac_h(l - 1);
    // Sensitivity paired with h and with jac_h respectively.
    Eigen::MatrixXd a = dg * r.asDiagonal();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(jh.rows(), n);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d0; ++c) {
        const double jv = lambda * fw.jacobian(c, i);
        a.col(i) += jv * dag.col(i * d0 + c);
        b.col(i) += jv * jh.col(i * d0 + c);
      }
    Eigen::MatrixXd g = a * fw.h(l - 1).transpose();
    g.noalias() += bw.dajag(l) * b.transpose();
    g *= 1.0 / (n * std::sqrt(s.fan_in_scale(l)));
    grads.push_back(std::move(g));
  }
  return grads;
}

double operator_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  Eigen::VectorXd v(m.cols());
  NormalStream ns(0x5eed, 0);
  for (int i = 0; i < v.size(); ++i) v[i] = ns.next();
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const Eigen::VectorXd u = m * v;
    const double next = u.norm();
    Eigen::VectorXd w = m.transpose() * u;
    const double wn = w.norm();
    if (wn == 0.0) return next;
    v = w / wn;
    if (std::abs(next - sigma) <= 1e-8 * next) return next;
    sigma = next;
  }
  throw NumericError("power iteration for the operator norm did not converge in 1000 iterations");
}

std::vector<LayerMovement> weight_movement(const MlpState& now, const MlpState& start) {
  if (now.weights.size() != start.weights.size()) throw DomainError("states have different depths");
  std::vector<LayerMovement> out;
  for (std::size_t l = 0; l < now.weights.size(); ++l) {
    if (now.weights[l].rows() != start.weights[l].rows() || now.weights[l].cols() != start.weights[l].cols())
      throw DomainError("states have different shapes");
    const Eigen::MatrixXd diff = now.weights[l] - start.weights[l];
    LayerMovement mv;
    mv.op_norm = operator_norm(diff);
    mv.inf_norm = diff.cwiseAbs().rowwise().sum().maxCoeff();
    mv.one_norm = diff.cwiseAbs().colwise().sum().maxCoeff();
    out.push_back(mv);
  }
  return out;
}

Eigen::MatrixXd jntk_drift(const MlpState& s, const Activation& act, const Dataset& ds,
                           const GramMatrix& reference) {
  const GramMatrix fin = finite_jntk_gram(s, act, ds.inputs);
  if (fin.n() != reference.n() || fin.d0() != reference.d0())
    throw DomainError("reference Gram does not match the dataset");
  const int b = fin.block_size();
  const double k2 = s.kappa * s.kappa;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(b, b);
  for (int i = 0; i < fin.n(); ++i)
    for (int j = 0; j < fin.n(); ++j)
      for (int a = 0; a < b; ++a)
        for (int c = 0; c < b; ++c) {
          const double diff =
              std::abs(fin.matrix()(i * b + a, j * b + c) / k2 - reference.matrix()(i * b + a, j * b + c));
          out(a, c) = std::max(out(a, c), diff);
        }
  return out;
}

TrainLog train(MlpState& s, const Activation& act, const Dataset& ds, const TrainConfig& cfg,
               const GramMatrix* reference) {
  cfg.validate();
  const MlpState start = s;
  TrainLog log;
  std::size_t next_log = 0;
  const Eigen::MatrixXd X = stack_inputs(ds.inputs);

  auto record = [&](int step) {
    while (next_log < cfg.log_schedule.size() && cfg.log_schedule[next_log] < step) ++next_log;
    if (next_log >= cfg.log_schedule.size() || cfg.log_schedule[next_log] != step) return;
    const auto mv = weight_movement(s, start);
    for (std::size_t l = 0; l < mv.size(); ++l)
      log.norms.push_back({step, static_cast<int>(l) + 1, mv[l]});
    if (reference) {
      const Eigen::MatrixXd dr = jntk_drift(s, act, ds, *reference);
      for (int a = 0; a < dr.rows(); ++a)
        for (int b = 0; b < dr.cols(); ++b) log.drift.push_back({step, a, b, dr(a, b)});
    }
  };

  for (int step = 0; step <= cfg.steps; ++step) {
    double value = 0.0;
    Eigen::VectorXd f;
    std::vector<Eigen::MatrixXd> grads;
    if (step < cfg.steps) {
      grads = loss_gradient(s, act, ds, cfg.lambda, &value, &f);
    } else {
      f = forward(s, act, X).f;
      value = loss(s, act, ds, cfg.lambda);
    }
    if (!std::isfinite(value)) throw NumericError("loss became non-finite at step " + std::to_string(step));
    record(step);
    log.loss.push_back(value);
    log.accuracy.push_back(accuracy_of(f, ds.targets));
    if (cfg.eta != 0.0)
      for (std::size_t l = 0; l < grads.size(); ++l) s.weights[l] -= cfg.eta * grads[l];
  }
  return log;
}

void write_train_csv(std::ostream& os, const TrainLog& log) {
  os << "step,loss,layer,op_norm,inf_norm,one_norm\n";
  char buf[256];
  for (const auto& r : log.norms) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%.17g,%.17g,%.17g\n", r.step, log.loss[r.step], r.layer,
                  r.movement.op_norm, r.movement.inf_norm, r.movement.one_norm);
    os << buf;
  }
}

void write_drift_csv(std::ostream& os, const TrainLog& log) {
  os << "step,a,b,drift\n";
  char buf[128];
  for (const auto& r : log.drift) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g\n", r.step, r.a, r.b, r.drift);
    os << buf;
  }
}

}  // namespace jntk
