#include "jntk/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "jntk/errors.hpp"
#include "jntk/rng.hpp"

namespace jntk {

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

std::size_t MlpState::parameter_count() const {
  std::size_t total = 0;
  for (const auto& w : weights) total += static_cast<std::size_t>(w.size());
  return total;
}

MlpState init_mlp(std::uint64_t seed, int d, int depth, int d0, double kappa) {
  if (d < 1 || depth < 1 || d0 < 1) throw DomainError("need d >= 1, L >= 1, d0 >= 1");
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  MlpState s;
  s.d = d;
  s.depth = depth;
  s.d0 = d0;
  s.kappa = kappa;
  s.seed = seed;
  for (int l = 1; l <= depth + 1; ++l) {
    const int rows = (l == depth + 1) ? 1 : d;
    const int cols = (l == 1) ? d0 : d;
    Eigen::MatrixXd w(rows, cols);
    NormalStream ns(seed, static_cast<std::uint64_t>(l));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = ns.next();
    s.weights.push_back(std::move(w));
  }
  return s;
}

Eigen::MatrixXd stack_inputs(const std::vector<Eigen::VectorXd>& inputs) {
  if (inputs.empty()) throw DomainError("no inputs");
  Eigen::MatrixXd X(inputs[0].size(), inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != X.rows()) throw DomainError("inconsistent input dimensions");
    X.col(i) = inputs[i];
  }
  return X;
}

ForwardTrace forward(const MlpState& s, const Activation& act, const Eigen::MatrixXd& X) {
  if (X.rows() != s.d0) {
    throw DomainError("input has dimension " + std::to_string(X.rows()) + ", network expects " +
                      std::to_string(s.d0));
  }
  const int n = static_cast<int>(X.cols());
  const int d0 = s.d0;
  const int L = s.depth;
  ForwardTrace fw;
  fw.n = n;
  fw.d0 = d0;
  fw.depth = L;
  fw.pre.resize(L + 2);
  fw.post.resize(L + 1);
  fw.dphi.resize(L + 1);
  fw.ddphi.resize(L + 1);

  Eigen::MatrixXd& in = fw.post[0];
  in = Eigen::MatrixXd::Zero(d0, n * (1 + d0));
  in.leftCols(n) = X;
  for (int i = 0; i < n; ++i) in.block(0, n + i * d0, d0, d0).setIdentity();

  for (int l = 1; l <= L + 1; ++l) {
    const double inv = 1.0 / std::sqrt(s.fan_in_scale(l));
    fw.pre[l].noalias() = s.weights[l - 1] * fw.post[l - 1];
    if (inv != 1.0) fw.pre[l] *= inv;
    if (l == L + 1) break;

    const Eigen::MatrixXd& z = fw.pre[l];
    const int width = static_cast<int>(z.rows());
    Eigen::MatrixXd& a = fw.post[l];
    a.resize(width, n * (1 + d0));
    fw.dphi[l].resize(width, n);
    fw.ddphi[l].resize(width, n);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < width; ++r) {
        const ActivationValues v = act.eval(z(r, i));
        a(r, i) = v.value;
        fw.dphi[l](r, i) = v.first;
        fw.ddphi[l](r, i) = v.second;
      }
      for (int c = 0; c < d0; ++c) {
        const int col = n + i * d0 + c;
        a.col(col) = fw.dphi[l].col(i).cwiseProduct(z.col(col));
      }
    }
  }
  const Eigen::MatrixXd& top = fw.pre[L + 1];
  fw.f = s.kappa * top.leftCols(n).transpose();
  fw.jacobian.resize(d0, n);
  for (int i = 0; i < n; ++i)
    fw.jacobian.col(i) = s.kappa * top.block(0, n + i * d0, 1, d0).transpose();
  return fw;
}

BackwardTrace backward(const MlpState& s, const Activation& act, const ForwardTrace& fw) {
  (void)act;
  const int n = fw.n;
  const int d0 = fw.d0;
  const int L = s.depth;
  BackwardTrace bw;
  bw.n = n;
  bw.d0 = d0;
  bw.sens.resize(L + 2);

  // The head layer is linear: dg = dajag = kappa, dag = 0.
  Eigen::MatrixXd& head = bw.sens[L + 1];
  head = Eigen::MatrixXd::Zero(1, n * (2 + d0));
  head.leftCols(n).setConstant(s.kappa);
  head.rightCols(n).setConstant(s.kappa);

  for (int l = L; l >= 1; --l) {
    // Sensitivities with respect to h^(l) = (dh, dah, dajah).
    Eigen::MatrixXd up = s.weights[l].transpose() * bw.sens[l + 1];
    up *= 1.0 / std::sqrt(s.fan_in_scale(l + 1));
    const auto jg = fw.jac_g(l);
    const Eigen::MatrixXd& dphi = fw.dphi[l];
    const Eigen::MatrixXd& ddphi = fw.ddphi[l];
    Eigen::MatrixXd& out = bw.sens[l];
    out.resize(up.rows(), up.cols());
    for (int i = 0; i < n; ++i) {
      out.col(i) = dphi.col(i).cwiseProduct(up.col(i));
      for (int a = 0; a < d0; ++a) {
        const int c = n + i * d0 + a;
        out.col(c) = ddphi.col(i).cwiseProduct(jg.col(i * d0 + a)).cwiseProduct(up.col(i)) +
                     dphi.col(i).cwiseProduct(up.col(c));
      }
      const int e = n + n * d0 + i;
      out.col(e) = dphi.col(i).cwiseProduct(up.col(e));
    }
  }
  return bw;
}

double output(const MlpState& s, const Activation& act, const Eigen::VectorXd& x) {
  return forward(s, act, x).f[0];
}

Eigen::VectorXd input_jacobian(const MlpState& s, const Activation& act, const Eigen::VectorXd& x) {
  return forward(s, act, x).jacobian.col(0);
}

ParamGradients param_gradients(const MlpState& s, const Activation& act, const Eigen::VectorXd& x) {
  const ForwardTrace fw = forward(s, act, x);
  const BackwardTrace bw = backward(s, act, fw);
  const int d0 = s.d0;
  ParamGradients pg;
  pg.dj.resize(d0);
  for (int l = 1; l <= s.depth + 1; ++l) {
    const double inv = 1.0 / std::sqrt(s.fan_in_scale(l));
    const Eigen::VectorXd h = fw.h(l - 1).col(0);
    const Eigen::VectorXd dg = bw.dg(l).col(0);
    const Eigen::VectorXd dajag = bw.dajag(l).col(0);
    pg.df.push_back(inv * dg * h.transpose());
    for (int a = 0; a < d0; ++a) {
      const Eigen::VectorXd dag = bw.dag(l).col(a);
      const Eigen::VectorXd jh = fw.jac_h(l - 1).col(a);
      pg.dj[a].push_back(inv * (dag * h.transpose() + dajag * jh.transpose()));
    }
  }
  return pg;
}

GramMatrix finite_jntk_gram(const MlpState& s, const Activation& act,
                            const std::vector<Eigen::VectorXd>& inputs) {
  const ForwardTrace fw = forward(s, act, stack_inputs(inputs));
  const BackwardTrace bw = backward(s, act, fw);
  const int n = fw.n;
  const int d0 = fw.d0;
  const int b = d0 + 1;
  const int m = n * b;
  // Column of (sample i, component a) in the stacked layouts.
  auto col = [&](int i, int a) { return a == 0 ? i : n + i * d0 + (a - 1); };

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(m, m);
  for (int l = 1; l <= s.depth + 1; ++l) {
    const double inv = 1.0 / s.fan_in_scale(l);
    const Eigen::MatrixXd& hs = fw.post[l - 1];
    const auto ds = bw.sens[l].leftCols(m);
    const auto es = bw.dajag(l);
    const Eigen::MatrixXd hh = hs.transpose() * hs;
    const Eigen::MatrixXd dd = ds.transpose() * ds;
    const Eigen::MatrixXd de = ds.transpose() * es;
    const Eigen::MatrixXd ee = es.transpose() * es;
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < b; ++a)
        for (int j = 0; j < n; ++j)
          for (int c = 0; c < b; ++c) {
            const int ia = col(i, a), jc = col(j, c);
            double v = hh(col(i, 0), col(j, 0)) * dd(ia, jc);
            if (c > 0) v += hh(col(i, 0), jc) * de(ia, j);
            if (a > 0) v += hh(ia, col(j, 0)) * de(jc, i);
            if (a > 0 && c > 0) v += hh(ia, jc) * ee(i, j);
            theta(i * b + a, j * b + c) += inv * v;
          }
  }
  // Mirror the upper triangle so the Gram is symmetric bit for bit.
  theta.triangularView<Eigen::StrictlyLower>() = theta.transpose();
  return GramMatrix(n, d0, std::move(theta));
}

KernelBlock finite_jntk(const MlpState& s, const Activation& act, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& xp) {
  if (x.size() != xp.size()) throw DomainError("input dimensions differ");
  if (x == xp) return finite_jntk_gram(s, act, {x}).block(0, 0);
  // Evaluate both argument orders on the same batch so that swapping the
  // arguments transposes the block exactly.
  const bool swap = std::lexicographical_compare(xp.begin(), xp.end(), x.begin(), x.end());
  if (swap) return finite_jntk_gram(s, act, {xp, x}).block(1, 0);
  return finite_jntk_gram(s, act, {x, xp}).block(0, 1);
}

GramMatrix estimate_nngp(const Activation& act, int d, int depth,
                         const std::vector<Eigen::VectorXd>& inputs, double kappa, int samples,
                         std::uint64_t seed) {
  if (samples < 2) throw DomainError("estimate_nngp needs at least 2 samples");
  const Eigen::MatrixXd X = stack_inputs(inputs);
  const int n = static_cast<int>(X.cols());
  const int d0 = static_cast<int>(X.rows());
  const int b = d0 + 1;
  Eigen::MatrixXd z(samples, n * b);
  for (int k = 0; k < samples; ++k) {
    const MlpState st = init_mlp(derive_seed(seed, static_cast<std::uint64_t>(k)), d, depth, d0, kappa);
    const ForwardTrace fw = forward(st, act, X);
    for (int i = 0; i < n; ++i) {
      z(k, i * b) = fw.f[i];
      z.block(k, i * b + 1, 1, d0) = fw.jacobian.col(i).transpose();
    }
  }
  const Eigen::RowVectorXd mean = z.colwise().mean();
  z.rowwise() -= mean;
  Eigen::MatrixXd cov = (z.transpose() * z) / (static_cast<double>(samples - 1) * kappa * kappa);
  cov = 0.5 * (cov + cov.transpose());
  return GramMatrix(n, d0, std::move(cov));
}

namespace {

constexpr char kMagic[8] = {'J', 'N', 'T', 'K', 'W', 'T', '0', '1'};

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IngestionError("truncated weight file");
  return v;
}

}  // namespace

void save_weights(const std::string& path, const MlpState& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::int64_t>(os, s.d);
  put<std::int64_t>(os, s.depth);
  put<std::int64_t>(os, s.d0);
  put<double>(os, s.kappa);
  put<std::uint64_t>(os, s.seed);
  for (const auto& w : s.weights)
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) put<double>(os, w(r, c));
  if (!os) throw IngestionError("failed writing " + path);
}

MlpState load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IngestionError(path + " is not a weight file");
  MlpState s;
  s.d = static_cast<int>(get<std::int64_t>(is));
  s.depth = static_cast<int>(get<std::int64_t>(is));
  s.d0 = static_cast<int>(get<std::int64_t>(is));
  s.kappa = get<double>(is);
  s.seed = get<std::uint64_t>(is);
  if (s.d < 1 || s.depth < 1 || s.d0 < 1) throw IngestionError(path + ": bad header");
  for (int l = 1; l <= s.depth + 1; ++l) {
    const int rows = (l == s.depth + 1) ? 1 : s.d;
    const int cols = (l == 1) ? s.d0 : s.d;
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = get<double>(is);
    s.weights.push_back(std::move(w));
  }
  return s;
}

}  // namespace jntk
