#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "jntk/activations.hpp"
#include "jntk/datasets.hpp"
#include "jntk/kernel_types.hpp"
#include "jntk/mlp.hpp"

namespace jntk {

struct TrainConfig {
  double lambda = 0.01;
  double eta = 1.0;
  int steps = 2048;
  // Steps at which norms (and drift, when a reference is given) are logged.
  std::vector<int> log_schedule;

  void validate() const;
};

// 0, 1, 2, 4, ..., up to and including `steps`.
std::vector<int> log2_schedule(int steps);

struct LayerMovement {
  double op_norm = 0.0;
  double inf_norm = 0.0;  // max row sum
  double one_norm = 0.0;  // max column sum
};

struct NormRecord {
  int step = 0;
  int layer = 0;
  LayerMovement movement;
};

struct DriftRecord {
  int step = 0;
  int a = 0;
  int b = 0;
  double drift = 0.0;
};

struct TrainLog {
  // Loss and sign accuracy before every step, plus after the last one.
  std::vector<double> loss;
  std::vector<double> accuracy;
  std::vector<NormRecord> norms;
  std::vector<DriftRecord> drift;
};

// (1/2N) sum_i [(f_i - y_i)^2 + lambda |J_i|^2]; column i of `jacobian` is J_i.
double objective(const Eigen::VectorXd& f, const Eigen::VectorXd& y, const Eigen::MatrixXd& jacobian,
                 double lambda);

// objective() evaluated on the network's outputs over the dataset.
double loss(const MlpState& s, const Activation& act, const Dataset& ds, double lambda);

// Gradient of `loss` with respect to every weight matrix.
std::vector<Eigen::MatrixXd> loss_gradient(const MlpState& s, const Activation& act,
                                           const Dataset& ds, double lambda, double* loss_out = nullptr,
                                           Eigen::VectorXd* f_out = nullptr);

// Full-batch gradient descent on `s` in place. When `reference` holds the
// limiting Theta Gram of the dataset, JNTK drift is logged on the schedule.
TrainLog train(MlpState& s, const Activation& act, const Dataset& ds, const TrainConfig& cfg,
               const GramMatrix* reference = nullptr);

// Max over pairs (i, j) of |Theta_d(x_i, x_j)_ab / kappa^2 - reference_ab|,
// as a (1+d0) x (1+d0) matrix indexed by (a, b).
Eigen::MatrixXd jntk_drift(const MlpState& s, const Activation& act, const Dataset& ds,
                           const GramMatrix& reference);

// Operator norm by power iteration (fixed start vector, relative tol 1e-8).
double operator_norm(const Eigen::MatrixXd& m);
std::vector<LayerMovement> weight_movement(const MlpState& now, const MlpState& start);

void write_train_csv(std::ostream& os, const TrainLog& log);
void write_drift_csv(std::ostream& os, const TrainLog& log);

}  // namespace jntk
