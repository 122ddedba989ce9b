#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "jntk/errors.hpp"
#include "jntk/limiting_kernels.hpp"
#include "jntk/mlp.hpp"
#include "jntk/report_io.hpp"
#include "jntk/rng.hpp"
#include "test_util.hpp"

using namespace jntk;
using jntk::testing::random_unit;
using jntk::testing::random_units;

namespace {

Activation make(ActivationKind k) { return Activation::make(k, true); }

MlpState toy_net() {
  MlpState s = init_mlp(0, 1, 1, 2, 0.5);
  s.weights[0] << 1.0, 0.0;
  s.weights[1] << 2.0;
  return s;
}

// Max-norm relative error of a against b.
double mrel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return jntk::testing::max_rel_err(a, b); }

// Central-difference derivatives of f and every J_a with respect to every
// weight, flattened layer by layer (row-major). Row 0 is f, row 1+a is J_a.
Eigen::MatrixXd fd_param_gradients(const MlpState& s, const Activation& act, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  const int d0 = s.d0;
  Eigen::MatrixXd out(1 + d0, static_cast<Eigen::Index>(s.parameter_count()));
  MlpState p = s;
  Eigen::Index col = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (int r = 0; r < p.weights[l].rows(); ++r) {
      for (int c = 0; c < p.weights[l].cols(); ++c) {
        const double w = p.weights[l](r, c);
        p.weights[l](r, c) = w + h;
        const double fp = output(p, act, x);
        const Eigen::VectorXd jp = input_jacobian(p, act, x);
        p.weights[l](r, c) = w - h;
        const double fm = output(p, act, x);
        const Eigen::VectorXd jm = input_jacobian(p, act, x);
        p.weights[l](r, c) = w;
        out(0, col) = (fp - fm) / (2 * h);
        out.block(1, col, d0, 1) = (jp - jm) / (2 * h);
        ++col;
      }
    }
  }
  return out;
}

Eigen::RowVectorXd flatten(const std::vector<Eigen::MatrixXd>& mats) {
  Eigen::Index total = 0;
  for (const auto& m : mats) total += m.size();
  Eigen::RowVectorXd out(total);
  Eigen::Index k = 0;
  for (const auto& m : mats)
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) out[k++] = m(r, c);
  return out;
}

}  // namespace

TEST_CASE("initialisation is deterministic with the documented shapes") {
  const MlpState a = init_mlp(9, 16, 3, 5, 0.1);
  const MlpState b = init_mlp(9, 16, 3, 5, 0.1);
  REQUIRE(a.weights.size() == 4);
  CHECK(a.weights[0].rows() == 16);
  CHECK(a.weights[0].cols() == 5);
  CHECK(a.weights[1].rows() == 16);
  CHECK(a.weights[1].cols() == 16);
  CHECK(a.weights[3].rows() == 1);
  CHECK(a.weights[3].cols() == 16);
  CHECK(a.parameter_count() == 16 * 5 + 2 * 16 * 16 + 16);
  for (std::size_t l = 0; l < a.weights.size(); ++l) CHECK(a.weights[l] == b.weights[l]);
  CHECK(a.kappa == 0.1);
  CHECK(init_mlp(10, 16, 3, 5, 0.1).weights[0] != a.weights[0]);
  CHECK_THROWS_AS(init_mlp(0, 0, 1, 1, 1.0), DomainError);
  CHECK_THROWS_AS(init_mlp(0, 4, 1, 1, 0.0), DomainError);
}

TEST_CASE("initial weights look standard normal") {
  const MlpState s = init_mlp(123, 10000, 1, 1, 1.0);
  const Eigen::MatrixXd& w = s.weights[0];
  const double count = static_cast<double>(w.size());
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / (count - 1);
  CHECK(std::abs(mean) <= 5.0 / std::sqrt(count));
  CHECK(var >= 0.97);
  CHECK(var <= 1.03);
}

TEST_CASE("toy network by hand") {
  const MlpState s = toy_net();
  const Activation id = make(ActivationKind::identity);
  Eigen::VectorXd x(2);
  x << 0.3, 0.7;
  CHECK(output(s, id, x) == doctest::Approx(0.3).epsilon(1e-15));
  const Eigen::VectorXd j = input_jacobian(s, id, x);
  CHECK(j[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(j[1] == 0.0);

  const ParamGradients pg = param_gradients(s, id, x);
  CHECK(pg.df[0](0, 0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(pg.df[0](0, 1) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(pg.df[1](0, 0) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(pg.dj[0][0](0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pg.dj[0][0](0, 1) == 0.0);
  CHECK(pg.dj[0][1](0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pg.dj[1][0](0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pg.dj[1][1](0, 0) == 0.0);
}

TEST_CASE("zero head gives zero output and Jacobian") {
  MlpState s = init_mlp(4, 32, 2, 3, 1.0);
  s.weights.back().setZero();
  std::mt19937_64 rng(1);
  const Activation g = make(ActivationKind::gelu);
  const Eigen::VectorXd x = random_unit(3, rng);
  CHECK(output(s, g, x) == 0.0);
  CHECK(input_jacobian(s, g, x).cwiseAbs().maxCoeff() == 0.0);
  // The head gradient does not depend on the head weights.
  const ForwardTrace fw = forward(s, g, x);
  const ParamGradients pg = param_gradients(s, g, x);
  const Eigen::MatrixXd want = (s.kappa / std::sqrt(32.0)) * fw.h(2).transpose();
  CHECK((pg.df.back() - want).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("forward trace relations") {
  std::mt19937_64 rng(2);
  const Activation g = make(ActivationKind::gelu);
  const MlpState s = init_mlp(5, 16, 3, 3, 1.0);
  const auto pts = random_units(4, 3, rng);
  const ForwardTrace fw = forward(s, g, stack_inputs(pts));
  for (int l = 1; l <= 3; ++l) {
    CHECK((fw.h(l) - fw.g(l).unaryExpr([&](double z) { return g.value(z); })).cwiseAbs().maxCoeff() <= 1e-15);
    for (int i = 0; i < 4; ++i)
      for (int a = 0; a < 3; ++a) {
        const Eigen::VectorXd want = fw.g(l).col(i).unaryExpr([&](double z) { return g.first(z); })
                                         .cwiseProduct(fw.jac_g(l).col(i * 3 + a));
        CHECK((fw.jac_h(l).col(i * 3 + a) - want).cwiseAbs().maxCoeff() <= 1e-15);
      }
  }
  // Batched evaluation agrees with single-point evaluation.
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(fw.f[i] - output(s, g, pts[i])) <= 1e-14);
    CHECK((fw.jacobian.col(i) - input_jacobian(s, g, pts[i])).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("input Jacobian matches central differences") {
  std::mt19937_64 rng(3);
  for (ActivationKind kind : {ActivationKind::gelu, ActivationKind::erf, ActivationKind::square}) {
    const Activation act = make(kind);
    for (int seed = 0; seed < 3; ++seed) {
      const MlpState s = init_mlp(seed, 24, 3, 4, 1.0);
      const Eigen::VectorXd x = random_unit(4, rng);
      Eigen::VectorXd fd(4);
      const double h = 1e-5;
      for (int a = 0; a < 4; ++a) {
        Eigen::VectorXd xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        fd[a] = (output(s, act, xp) - output(s, act, xm)) / (2 * h);
      }
      INFO(to_string(kind), " seed=", seed);
      CHECK(mrel(fd, input_jacobian(s, act, x)) <= 1e-6);
    }
  }
}

TEST_CASE("backward sensitivities") {
  std::mt19937_64 rng(4);
  const auto pts = random_units(3, 3, rng);
  const MlpState s = init_mlp(6, 16, 3, 3, 0.7);
  {
    const Activation id = make(ActivationKind::identity);
    const BackwardTrace bw = backward(s, id, forward(s, id, stack_inputs(pts)));
    for (int l = 1; l <= 4; ++l) CHECK(bw.dag(l).cwiseAbs().maxCoeff() == 0.0);
  }
  for (ActivationKind kind : {ActivationKind::gelu, ActivationKind::erf}) {
    const Activation act = make(kind);
    const BackwardTrace bw = backward(s, act, forward(s, act, stack_inputs(pts)));
    for (int l = 1; l <= 4; ++l) CHECK(bw.dajag(l) == bw.dg(l));
  }
}

TEST_CASE("parameter gradients match finite differences") {
  std::mt19937_64 rng(5);
  for (ActivationKind kind : {ActivationKind::gelu, ActivationKind::erf, ActivationKind::identity}) {
    const Activation act = make(kind);
    for (int seed = 0; seed < 2; ++seed) {
      const MlpState s = init_mlp(seed, 8, 2, 3, 0.9);
      const Eigen::VectorXd x = random_unit(3, rng);
      const Eigen::MatrixXd fd = fd_param_gradients(s, act, x);
      const ParamGradients pg = param_gradients(s, act, x);
      INFO(to_string(kind), " seed=", seed);
      CHECK(mrel(flatten(pg.df), fd.row(0)) <= 1e-5);
      for (int a = 0; a < 3; ++a) CHECK(mrel(flatten(pg.dj[a]), fd.row(1 + a)) <= 1e-5);
    }
  }
}

TEST_CASE("layer-wise finite JNTK equals brute-force gradient inner products") {
  std::mt19937_64 rng(6);
  const Activation act = make(ActivationKind::gelu);
  for (int seed = 0; seed < 5; ++seed) {
    const MlpState s = init_mlp(seed, 8, 2, 3, 1.0);
    const Eigen::VectorXd x = random_unit(3, rng), y = random_unit(3, rng);
    const Eigen::MatrixXd gx = fd_param_gradients(s, act, x), gy = fd_param_gradients(s, act, y);
    const Eigen::MatrixXd brute = gx * gy.transpose();
    CHECK(mrel(finite_jntk(s, act, x, y), brute) <= 1e-6);
    const Eigen::MatrixXd self = gx * gx.transpose();
    const KernelBlock fx = finite_jntk(s, act, x, x);
    CHECK(mrel(fx, self) <= 1e-6);
    CHECK(fx(0, 0) >= 0.0);
  }
}

TEST_CASE("finite JNTK symmetry and PSD Gram") {
  std::mt19937_64 rng(7);
  const Activation act = make(ActivationKind::gelu);
  const MlpState s = init_mlp(3, 64, 2, 3, 1.0);
  const Eigen::VectorXd x = random_unit(3, rng), y = random_unit(3, rng);
  CHECK(finite_jntk(s, act, x, y) == finite_jntk(s, act, y, x).transpose());

  const auto pts = random_units(6, 3, rng);
  const GramMatrix g = finite_jntk_gram(s, act, pts);
  CHECK(g.asymmetry() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.matrix());
  CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK((g.block(i, j) - finite_jntk(s, act, pts[i], pts[j])).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("wide identity network matches the (L+1) closed form") {
  std::mt19937_64 rng(8);
  const Activation id = make(ActivationKind::identity);
  const auto pts = random_units(3, 3, rng);
  const double kappa = 0.1;
  const GramMatrix limit = LimitingKernel(id, 2).jntk_gram(pts, 1.0);
  std::vector<double> dist;
  for (int seed = 0; seed < 10; ++seed) {
    const MlpState s = init_mlp(derive_seed(8, seed), 4096, 2, 3, kappa);
    const Eigen::MatrixXd m = finite_jntk_gram(s, id, pts).matrix() / (kappa * kappa);
    dist.push_back((m - limit.matrix()).cwiseAbs().maxCoeff());
  }
  CHECK(median(dist) <= 0.15);
}

TEST_CASE("output variance at initialisation matches Sigma") {
  const Activation g = make(ActivationKind::gelu);
  std::mt19937_64 rng(9);
  const Eigen::VectorXd x = random_unit(4, rng);
  const double kappa = 0.3;
  const int seeds = 200;
  std::vector<double> f;
  for (int s = 0; s < seeds; ++s) f.push_back(output(init_mlp(derive_seed(9, s), 4096, 1, 4, kappa), g, x));
  double mean = 0, var = 0;
  for (double v : f) mean += v / seeds;
  for (double v : f) var += (v - mean) * (v - mean) / (seeds - 1);
  const double want = kappa * kappa * LimitingKernel(g, 1).sigma00(x, x);
  const double se = want * std::sqrt(2.0 / (seeds - 1));
  CHECK(std::abs(var - want) <= 3 * se);
}

TEST_CASE("Monte-Carlo NNGP estimates") {
  std::mt19937_64 rng(10);
  const auto pts = random_units(3, 3, rng);
  const Activation id = make(ActivationKind::identity);
  const GramMatrix est = estimate_nngp(id, 1024, 1, pts, 0.1, 10000, 1);
  const GramMatrix sig = LimitingKernel(id, 1).sigma_gram(pts);
  CHECK((est.matrix() - sig.matrix()).cwiseAbs().maxCoeff() <= 0.1);

  const GramMatrix two = estimate_nngp(id, 64, 1, pts, 1.0, 2, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(two.matrix());
  int rank = 0;
  for (double e : es.eigenvalues()) rank += e > 1e-10 * es.eigenvalues().maxCoeff();
  CHECK(rank <= 1);

  const Activation sq = make(ActivationKind::square);
  const GramMatrix esq = estimate_nngp(sq, 2048, 1, pts, 0.1, 4000, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double rho = pts[i].dot(pts[j]);
      CHECK(std::abs(esq.block(i, j)(0, 0) - (2 * rho * rho + 1) / 3) <= 0.1);
    }
}

TEST_CASE("weights survive a save/load round trip") {
  const MlpState s = init_mlp(77, 12, 2, 3, 0.25);
  const auto path = std::filesystem::temp_directory_path() / "jntk_weights_roundtrip.bin";
  save_weights(path.string(), s);
  const MlpState t = load_weights(path.string());
  std::filesystem::remove(path);
  CHECK(t.d == 12);
  CHECK(t.depth == 2);
  CHECK(t.d0 == 3);
  CHECK(t.kappa == 0.25);
  CHECK(t.seed == 77);
  REQUIRE(t.weights.size() == s.weights.size());
  for (std::size_t l = 0; l < s.weights.size(); ++l) CHECK(t.weights[l] == s.weights[l]);
  CHECK_THROWS(load_weights("/nonexistent/weights.bin"));
}

TEST_CASE("dimension mismatches are rejected") {
  const MlpState s = init_mlp(1, 8, 1, 3, 1.0);
  const Activation g = make(ActivationKind::gelu);
  CHECK_THROWS_AS(output(s, g, Eigen::VectorXd::Ones(2)), DomainError);
  CHECK_THROWS_AS(finite_jntk(s, g, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)), DomainError);
}
