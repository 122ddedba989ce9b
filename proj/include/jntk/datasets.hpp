#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace jntk {

enum class Provenance { synthetic_sphere, csv };

struct Dataset {
  std::vector<Eigen::VectorXd> inputs;
  Eigen::VectorXd targets;
  Provenance provenance = Provenance::synthetic_sphere;
  std::string name;
  // Data-row indices (0-based, header excluded) dropped by the parallel filter.
  std::vector<int> removed_rows;

  int n() const { return static_cast<int>(inputs.size()); }
  int d0() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].size()); }

  // Unit norms to 1e-12 and |y| <= 1; throws DomainError otherwise.
  void validate() const;

  Dataset subset(int k) const;
};

// Deterministic low-discrepancy points on S^{dim-1}, labelled by the sign of
// the last coordinate.
Dataset fibonacci_sphere(int n, int dim);

// Max over `probes` uniform random directions of the geodesic distance to
// the nearest dataset point.
double covering_radius(const Dataset& ds, int probes, std::uint64_t seed);

// Largest |<x_i, x_j>| over i != j.
double max_abs_cosine(const Dataset& ds);

Dataset load_csv(const std::string& path, const std::string& target_column,
                 double parallel_threshold = 0.99);
Dataset parse_csv(std::istream& is, const std::string& target_column, double parallel_threshold,
                  const std::string& name);

// Columns x0..x{d0-1},y.
void write_dataset_csv(std::ostream& os, const Dataset& ds);

// Acklam's rational approximation refined by one Halley step.
double inverse_normal_cdf(double p);

}  // namespace jntk
