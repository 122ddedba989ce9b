#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jntk/activations.hpp"
#include "jntk/datasets.hpp"
#include "jntk/limiting_kernels.hpp"

namespace jntk {

struct DatasetSpec {
  std::string kind = "fibonacci";  // fibonacci | csv
  int n = 8;
  int dim = 4;
  std::string path;
  std::string target = "y";
  double parallel_threshold = 0.99;
  int subset = 0;  // 0 keeps every point
};

struct ExperimentConfig {
  std::string activation = "gelu";
  bool normalise = true;
  int depth = 2;
  std::vector<int> depths{1, 2, 3, 4};
  std::vector<std::string> activations{"gelu", "erf"};
  std::vector<int> widths{128, 256, 512, 1024};
  std::uint64_t seed = 0;
  int repetitions = 10;
  int samples = 10000;
  DatasetSpec dataset;
  double lambda = 0.01;
  std::vector<double> lambdas{1.0, 0.1, 0.01, 0.001};
  double kappa = 0.1;
  double eta = 1.0;
  int steps = 2048;
  int quad_order = kDefaultQuadOrder;
  bool unsafe_activation = false;
  bool auto_depth = false;
  int max_depth = 8;
  double perturb_small = 0.01;
  double perturb_large = 0.1;
  int bootstrap_resamples = 10000;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  std::string hash() const;

  Activation make_activation() const;
  KernelOptions kernel_options() const;
  Dataset make_dataset() const;
};

// Per-width, per-(a,b) distances over repetitions.
struct ConvergenceResult {
  std::vector<int> widths;
  int block = 0;
  // deltas[w][a*block+b] holds one value per repetition.
  std::vector<std::vector<std::vector<double>>> deltas;

  double median_at(std::size_t w, int a, int b) const;
  double median_max_at(std::size_t w) const;  // median over reps of the max over (a,b)
};

// Max-norm distance per (a, b) entry family between two Gram matrices.
Eigen::MatrixXd entrywise_max_distance(const GramMatrix& a, const GramMatrix& b);

ConvergenceResult run_nngp_convergence(const ExperimentConfig& cfg, const std::string& out_dir);
ConvergenceResult run_jntk_init(const ExperimentConfig& cfg, const std::string& out_dir);

struct DriftResult {
  std::vector<int> widths;
  std::vector<int> steps;
  int block = 0;
  // drift[w][s][a*block+b] holds one value per repetition.
  std::vector<std::vector<std::vector<std::vector<double>>>> drift;
  double median_max_at(std::size_t w, std::size_t s) const;
};

DriftResult run_jntk_drift(const ExperimentConfig& cfg, const std::string& out_dir);

struct TrainResult {
  std::vector<double> loss;
  std::vector<double> accuracy;
  int depth = 0;
};

TrainResult run_train(const ExperimentConfig& cfg, const std::string& out_dir);

struct RegressionResult {
  int depth = 0;
  std::vector<double> lambdas;
  std::vector<double> completeness_error;
  std::vector<double> residual;
};

RegressionResult run_regression_analysis(const ExperimentConfig& cfg, const std::string& out_dir);

void run_min_eig(const ExperimentConfig& cfg, const std::string& out_dir);

// Alternating split: odd lattice/file positions form the test set.
std::pair<Dataset, Dataset> split_alternating(const Dataset& ds);

void echo_config(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace jntk
