#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "jntk/datasets.hpp"
#include "jntk/errors.hpp"
#include "jntk/kernel_types.hpp"
#include "jntk/limiting_kernels.hpp"
#include "jntk/mlp.hpp"
#include "jntk/report_io.hpp"
#include "jntk/rng.hpp"
#include "jntk/robust_training.hpp"
#include "test_util.hpp"

using namespace jntk;

namespace {

Activation make(ActivationKind k) { return Activation::make(k, true); }

double r_squared_of_log(const std::vector<double>& loss, int n) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int t = 0; t < n; ++t) {
    const double y = std::log(loss[t]);
    sx += t;
    sy += y;
    sxx += double(t) * t;
    sxy += t * y;
    syy += y * y;
  }
  const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return cov * cov / (vx * vy);
}

// Largest eigenvalue of the Hessian of the loss in function space,
// (1/N) Lambda K Lambda with K the finite JNTK Gram.
double stability_scale(const MlpState& s, const Activation& act, const Dataset& ds, double lambda) {
  const GramMatrix k = apply_lambda(finite_jntk_gram(s, act, ds.inputs), LambdaScaling(lambda));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.matrix());
  return es.eigenvalues().maxCoeff() / ds.n();
}

}  // namespace

TEST_CASE("objective examples") {
  Eigen::VectorXd f(1), y(1);
  f << 0.5;
  y << 1.0;
  Eigen::MatrixXd j(1, 1);
  j << 0.2;
  CHECK(objective(f, y, j, 0.01) == doctest::Approx(0.1252).epsilon(1e-14));
  CHECK(objective(y, y, Eigen::MatrixXd::Zero(3, 1), 0.5) == 0.0);

  const Dataset ds = fibonacci_sphere(8, 4);
  MlpState s = init_mlp(1, 16, 2, 4, 0.1);
  s.weights.back().setZero();
  CHECK(loss(s, make(ActivationKind::gelu), ds, 0.01) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("loss is invariant under permuting the dataset") {
  const Dataset ds = fibonacci_sphere(10, 3);
  Dataset perm = ds;
  std::vector<int> idx(ds.n());
  std::iota(idx.begin(), idx.end(), 0);
  std::reverse(idx.begin(), idx.end());
  std::rotate(idx.begin(), idx.begin() + 3, idx.end());
  for (int i = 0; i < ds.n(); ++i) {
    perm.inputs[i] = ds.inputs[idx[i]];
    perm.targets[i] = ds.targets[idx[i]];
  }
  const MlpState s = init_mlp(2, 32, 2, 3, 1.0);
  const Activation g = make(ActivationKind::gelu);
  const double a = loss(s, g, ds, 0.1), b = loss(s, g, perm, 0.1);
  CHECK(std::abs(a - b) <= 1e-14 * a);
}

TEST_CASE("loss gradient matches finite differences") {
  const Dataset ds = fibonacci_sphere(5, 3);
  for (ActivationKind kind : {ActivationKind::gelu, ActivationKind::erf}) {
    const Activation act = make(kind);
    const MlpState s = init_mlp(3, 8, 2, 3, 0.8);
    REQUIRE(s.parameter_count() <= 1000);
    double lv = 0.0;
    const auto grads = loss_gradient(s, act, ds, 0.3, &lv);
    CHECK(lv == doctest::Approx(loss(s, act, ds, 0.3)).epsilon(1e-14));
    MlpState p = s;
    const double h = 1e-5;
    double worst = 0.0, scale = 0.0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      for (int r = 0; r < p.weights[l].rows(); ++r)
        for (int c = 0; c < p.weights[l].cols(); ++c) {
          const double w = p.weights[l](r, c);
          p.weights[l](r, c) = w + h;
          const double up = loss(p, act, ds, 0.3);
          p.weights[l](r, c) = w - h;
          const double down = loss(p, act, ds, 0.3);
          p.weights[l](r, c) = w;
          worst = std::max(worst, std::abs((up - down) / (2 * h) - grads[l](r, c)));
          scale = std::max(scale, std::abs(grads[l](r, c)));
        }
    }
    INFO(to_string(kind));
    CHECK(worst / scale <= 1e-5);
  }
}

TEST_CASE("zero learning rate leaves the state untouched") {
  const Dataset ds = fibonacci_sphere(6, 3);
  MlpState s = init_mlp(4, 16, 2, 3, 0.1);
  const MlpState before = s;
  TrainConfig cfg;
  cfg.eta = 0.0;
  cfg.steps = 5;
  cfg.log_schedule = log2_schedule(5);
  const TrainLog log = train(s, make(ActivationKind::gelu), ds, cfg);
  for (std::size_t l = 0; l < s.weights.size(); ++l) CHECK(s.weights[l] == before.weights[l]);
  REQUIRE(log.loss.size() == 6);
  for (double v : log.loss) CHECK(v == log.loss[0]);
  for (const auto& r : log.norms) CHECK(r.movement.op_norm == 0.0);
}

TEST_CASE("near-linear model descends monotonically below the stability bound") {
  const Dataset ds = fibonacci_sphere(8, 4);
  const Activation id = make(ActivationKind::identity);
  MlpState s = init_mlp(5, 2048, 1, 4, 1.0);
  const double lmax = stability_scale(s, id, ds, 0.1);
  TrainConfig cfg;
  cfg.lambda = 0.1;
  cfg.eta = 1.0 / lmax;
  cfg.steps = 200;
  const TrainLog log = train(s, id, ds, cfg);
  // Once the loss reaches its floor successive values differ only by rounding.
  for (std::size_t t = 1; t < log.loss.size(); ++t) CHECK(log.loss[t] <= log.loss[t - 1] * (1 + 1e-12));
  CHECK(log.loss.back() < log.loss.front());
}

TEST_CASE("wide network loss decays exponentially at small step size" * doctest::timeout(300)) {
  const Dataset ds = fibonacci_sphere(8, 4);
  const Activation g = make(ActivationKind::gelu);
  MlpState s = init_mlp(6, 1024, 1, 4, 0.1);
  TrainConfig cfg;
  cfg.lambda = 0.01;
  cfg.eta = 1.0;
  cfg.steps = 500;
  CHECK(cfg.eta < 2.0 / stability_scale(s, g, ds, cfg.lambda));
  const TrainLog log = train(s, g, ds, cfg);
  CHECK(r_squared_of_log(log.loss, 500) >= 0.95);
  CHECK(log.loss.back() < 0.5 * log.loss.front());
}

TEST_CASE("training logs follow the schedule") {
  const Dataset ds = fibonacci_sphere(6, 3);
  MlpState s = init_mlp(7, 16, 2, 3, 0.5);
  const Activation g = make(ActivationKind::gelu);
  const GramMatrix ref = LimitingKernel(g, 2).jntk_gram(ds.inputs, 1.0);
  TrainConfig cfg;
  cfg.eta = 0.5;
  cfg.steps = 8;
  cfg.log_schedule = {0, 3, 8};
  const TrainLog log = train(s, g, ds, cfg, &ref);
  CHECK(log.loss.size() == 9);
  CHECK(log.accuracy.size() == 9);
  CHECK(log.norms.size() == 3 * 3);
  CHECK(log.drift.size() == 3 * 16);
  CHECK(log.norms.front().step == 0);
  CHECK(log.norms.back().step == 8);
  for (const auto& r : log.norms) {
    CHECK(r.movement.op_norm >= 0.0);
    CHECK(r.movement.inf_norm >= 0.0);
    CHECK(r.movement.one_norm >= 0.0);
  }

  std::ostringstream tr, dr;
  write_train_csv(tr, log);
  write_drift_csv(dr, log);
  const std::string tcsv = tr.str(), dcsv = dr.str();
  CHECK(tcsv.rfind("step,loss,layer,op_norm,inf_norm,one_norm\n", 0) == 0);
  CHECK(dcsv.rfind("step,a,b,drift\n", 0) == 0);
  CHECK(std::count(tcsv.begin(), tcsv.end(), '\n') == 1 + 9);
  CHECK(std::count(dcsv.begin(), dcsv.end(), '\n') == 1 + 48);
}

TEST_CASE("log2 schedule") {
  CHECK(log2_schedule(1) == std::vector<int>{0, 1});
  CHECK(log2_schedule(5) == std::vector<int>{0, 1, 2, 4, 5});
  const auto s = log2_schedule(2048);
  CHECK(s.size() == 13);
  CHECK(s.back() == 2048);
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.eta = -1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = TrainConfig{};
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = TrainConfig{};
  c.log_schedule = {4, 2};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = TrainConfig{};
  c.steps = 4;
  c.log_schedule = {0, 8};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = TrainConfig{};
  c.lambda = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("divergence aborts with the step index") {
  const Dataset ds = fibonacci_sphere(6, 3);
  MlpState s = init_mlp(8, 64, 2, 3, 1.0);
  TrainConfig cfg;
  cfg.eta = 1e6;
  cfg.steps = 500;
  try {
    train(s, make(ActivationKind::identity), ds, cfg);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("weight movement norms") {
  const MlpState a = init_mlp(9, 12, 2, 3, 1.0);
  for (const auto& m : weight_movement(a, a)) {
    CHECK(m.op_norm == 0.0);
    CHECK(m.inf_norm == 0.0);
    CHECK(m.one_norm == 0.0);
  }
  std::mt19937_64 rng(1);
  Eigen::VectorXd u = Eigen::VectorXd::Random(12), v = Eigen::VectorXd::Random(12);
  MlpState b = a;
  b.weights[1] += u * v.transpose();
  const auto mv = weight_movement(b, a);
  CHECK(mv[0].op_norm == 0.0);
  CHECK(mv[1].op_norm == doctest::Approx(u.norm() * v.norm()).epsilon(1e-8));
  const Eigen::MatrixXd diff = u * v.transpose();
  CHECK(mv[1].inf_norm == doctest::Approx(diff.cwiseAbs().rowwise().sum().maxCoeff()).epsilon(1e-14));
  CHECK(mv[1].one_norm == doctest::Approx(diff.cwiseAbs().colwise().sum().maxCoeff()).epsilon(1e-14));

  const Eigen::MatrixXd m = jntk::testing::random_psd(9, rng) + Eigen::MatrixXd::Random(9, 9);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  CHECK(operator_norm(m) == doctest::Approx(svd.singularValues()[0]).epsilon(1e-8));
  CHECK(operator_norm(Eigen::MatrixXd::Zero(3, 4)) == 0.0);
  CHECK_THROWS_AS(weight_movement(a, init_mlp(9, 13, 2, 3, 1.0)), DomainError);
}

TEST_CASE("JNTK drift") {
  const Dataset ds = fibonacci_sphere(4, 3);
  const Activation g = make(ActivationKind::gelu);
  const MlpState s = init_mlp(10, 32, 2, 3, 0.1);
  const GramMatrix self(ds.n(), ds.d0(), finite_jntk_gram(s, g, ds.inputs).matrix() / (0.1 * 0.1));
  CHECK(jntk_drift(s, g, ds, self).maxCoeff() <= 1e-12);

  const Activation id = make(ActivationKind::identity);
  const GramMatrix limit = LimitingKernel(id, 1).jntk_gram(ds.inputs, 1.0);
  std::vector<double> d;
  for (int k = 0; k < 5; ++k) d.push_back(jntk_drift(init_mlp(derive_seed(10, k), 4096, 1, 3, 0.1), id, ds, limit).maxCoeff());
  CHECK(median(d) <= 0.15);
}
