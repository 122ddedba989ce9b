#pragma once

#include <Eigen/Core>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "jntk/datasets.hpp"
#include "jntk/kernel_types.hpp"
#include "jntk/limiting_kernels.hpp"

namespace jntk {

// (y_1, 0, ..., 0, y_2, 0, ..., 0, ...): one block of length 1+d0 per sample.
Eigen::VectorXd stacked_targets(const Eigen::VectorXd& y, int d0);

// Assumption threshold on the minimum Gram eigenvalue, relative to the trace.
inline constexpr double kMinEigRelThreshold = 1e-12;

enum class SolveMethod { cholesky, jittered_cholesky, pseudo_inverse };
std::string to_string(SolveMethod m);

struct SolveReport {
  SolveMethod method = SolveMethod::cholesky;
  double jitter = 0.0;
  double residual = 0.0;  // |G c - y| / |y|
  double min_eig = 0.0;
  double threshold = 0.0;
};

struct SolveResult {
  Eigen::VectorXd coef;
  SolveReport report;
};

// Solves G c = y for symmetric G. Throws AssumptionViolation when
// lambda_min(G) <= 1e-12 trace(G) unless `override_assumption` is set.
SolveResult solve_symmetric(const Eigen::MatrixXd& gram, const Eigen::VectorXd& y,
                            bool override_assumption = false);

/// Infinite-width predictor of Jacobian-regularised training:
/// u(x) = Theta_lambda(x, X) Theta_lambda(X, X)^{-1} y.
class NtkRegressor {
 public:
  NtkRegressor(const LimitingKernel& kernel, Dataset ds, double lambda, bool override_assumption = false);

  const LimitingKernel& kernel() const { return kernel_; }
  const Dataset& dataset() const { return ds_; }
  double lambda() const { return lambda_; }
  const GramMatrix& gram() const { return gram_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  const Eigen::VectorXd& targets() const { return y_; }
  const SolveReport& report() const { return report_; }

  // Theta_lambda(x*, x^(i)) blocks side by side: (1+d0) x N(1+d0).
  Eigen::MatrixXd kernel_row(const Eigen::VectorXd& xstar) const;

  // (f_ntk(x*), sqrt(lambda) * grad f_ntk(x*)).
  Eigen::VectorXd predict(const Eigen::VectorXd& xstar) const;

 private:
  LimitingKernel kernel_;
  Dataset ds_;
  double lambda_;
  GramMatrix gram_;
  Eigen::VectorXd y_;
  Eigen::VectorXd coef_;
  SolveReport report_;
};

/// Standard NTK regressor on the (0,0) Gram only: the analytic solution of
/// training without the Jacobian penalty.
class StandardNtkRegressor {
 public:
  StandardNtkRegressor(const LimitingKernel& kernel, Dataset ds, bool override_assumption = false);

  const SolveReport& report() const { return report_; }
  const Eigen::MatrixXd& gram() const { return gram_; }

  // f(x*) and its ambient input gradient.
  std::pair<double, Eigen::VectorXd> value_and_gradient(const Eigen::VectorXd& xstar) const;

 private:
  LimitingKernel kernel_;
  Dataset ds_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd coef_;
  SolveReport report_;
};

using DifferentiablePredictor = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

// One projected ascent step on (f(x) - y)^2: move by `step` along the
// normalised gradient, then renormalise onto the unit sphere.
std::vector<Eigen::VectorXd> perturb_inputs(const DifferentiablePredictor& predictor,
                                            const std::vector<Eigen::VectorXd>& inputs,
                                            const Eigen::VectorXd& labels, double step);

struct EigenfeatureReport {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns, sign-normalised
  std::vector<int> retained;     // indices into eigenvalues
  std::vector<int> skipped;      // null-space eigenvalues
  std::vector<double> acc;
  std::vector<double> acc_small;
  std::vector<double> acc_large;
  double acc_full = 0.0;
  // max over test points of |sum_i f_i(x) - f_ntk(x)|.
  double completeness_error = 0.0;
};

// Eigenvalues at or below this fraction of the largest are treated as null.
inline constexpr double kNullEigRel = 1e-10;

// Largest-magnitude component made positive (ties to the lower index).
void normalise_eigenvector_signs(Eigen::MatrixXd& vecs);

// Matrix of f_i(x) for the given kernel rows: rows are points, columns are
// the retained eigenfeatures.
Eigen::MatrixXd eigenfeature_values(const NtkRegressor& reg, const EigenfeatureReport& rep,
                                    const std::vector<Eigen::VectorXd>& points);

EigenfeatureReport eigenfeatures(const NtkRegressor& reg, const Dataset& test,
                                 std::pair<double, double> perturb_steps,
                                 const DifferentiablePredictor& attack);

struct MinEigRow {
  int depth = 0;
  double jntk_min = 0.0;
  double ntk_min = 0.0;
  double threshold = 0.0;
  bool assumption_ok = false;
};

struct MinEigReport {
  std::vector<MinEigRow> rows;
  std::vector<std::pair<int, int>> parallel_pairs;
};

MinEigReport min_eig_sweep(const Activation& act, const Dataset& ds, const std::vector<int>& depths,
                           double lambda, KernelOptions opts = {});

// Smallest depth in [1, max_depth] whose Theta_lambda Gram passes the
// minimum-eigenvalue assumption; throws AssumptionViolation if none does.
int auto_depth(const Activation& act, const Dataset& ds, double lambda, int max_depth,
               KernelOptions opts = {});

void write_eigenfeature_csv(std::ostream& os, const EigenfeatureReport& rep);
void write_min_eig_csv(std::ostream& os, const MinEigReport& rep);

}  // namespace jntk
