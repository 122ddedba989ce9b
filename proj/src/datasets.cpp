#include "jntk/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "jntk/errors.hpp"
#include "jntk/rng.hpp"

namespace jntk {

void Dataset::validate() const {
  if (inputs.empty()) throw DomainError("dataset is empty");
  if (targets.size() != n()) throw DomainError("dataset has " + std::to_string(targets.size()) +
                                               " targets for " + std::to_string(n()) + " inputs");
  for (int i = 0; i < n(); ++i) {
    if (inputs[i].size() != d0()) throw DomainError("inconsistent input dimensions");
    if (std::abs(inputs[i].norm() - 1.0) > 1e-12)
      throw DomainError("input " + std::to_string(i) + " is not unit norm");
    if (!(std::abs(targets[i]) <= 1.0)) throw DomainError("target " + std::to_string(i) + " outside [-1, 1]");
  }
}

Dataset Dataset::subset(int k) const {
  if (k < 1 || k > n()) throw DomainError("subset size " + std::to_string(k) + " out of range");
  Dataset out = *this;
  out.inputs.resize(k);
  out.targets = targets.head(k);
  out.name = name + "[:" + std::to_string(k) + "]";
  return out;
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("inverse_normal_cdf needs p in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

namespace {

// Positive root of t^(k+1) = t + 1; k = 1 gives the golden ratio, k = 2 the
// plastic number.
double generalised_golden(int k) {
  double t = 2.0;
  for (int it = 0; it < 100; ++it) t = std::pow(1.0 + t, 1.0 / (k + 1));
  return t;
}

double frac(double v) { return v - std::floor(v); }

}  // namespace

Dataset fibonacci_sphere(int n, int dim) {
  if (n < 2) throw DomainError("fibonacci_sphere needs n >= 2");
  if (dim < 2) throw DomainError("fibonacci_sphere needs dim >= 2");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Dataset ds;
  ds.provenance = Provenance::synthetic_sphere;
  ds.name = "fibonacci_S" + std::to_string(dim - 1) + "_n" + std::to_string(n);
  ds.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(dim);
    if (dim == 2) {
      // Golden-angle steps rather than an even grid, which would place
      // antipodal (parallel) pairs whenever n is even.
      const double t = two_pi * frac(i / std::numbers::phi);
      x << std::cos(t), std::sin(t);
    } else if (dim == 3) {
      const double z = 1.0 - (2.0 * i + 1.0) / n;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double t = two_pi * frac(i / std::numbers::phi);
      x << r * std::cos(t), r * std::sin(t), z;
    } else if (dim == 4) {
      // |z_2|^2 is uniform on [0,1] for uniform points on S^3; the two phases
      // follow the two-dimensional Kronecker sequence of the plastic number.
      const double g = generalised_golden(2);
      const double s = (i + 0.5) / n;
      const double t1 = two_pi * frac(i / g);
      const double t2 = two_pi * frac(i / (g * g));
      const double r1 = std::sqrt(1.0 - s), r2 = std::sqrt(s);
      x << r1 * std::cos(t1), r1 * std::sin(t1), r2 * std::cos(t2), r2 * std::sin(t2);
    } else {
      const double g = generalised_golden(dim);
      double alpha = 1.0;
      for (int k = 0; k < dim; ++k) {
        alpha /= g;
        x[k] = inverse_normal_cdf(frac(0.5 + (i + 1) * alpha));
      }
    }
    x /= x.norm();
    ds.inputs.push_back(x);
    ds.targets[i] = x[dim - 1] >= 0.0 ? 1.0 : -1.0;
  }
  return ds;
}

double covering_radius(const Dataset& ds, int probes, std::uint64_t seed) {
  const int dim = ds.d0();
  Eigen::MatrixXd pts(dim, ds.n());
  for (int i = 0; i < ds.n(); ++i) pts.col(i) = ds.inputs[i];
  NormalStream ns(seed, 0);
  double worst = 0.0;
  const int chunk = 1024;
  Eigen::MatrixXd probe(dim, chunk);
  for (int done = 0; done < probes; done += chunk) {
    const int m = std::min(chunk, probes - done);
    for (int k = 0; k < m; ++k) {
      for (int r = 0; r < dim; ++r) probe(r, k) = ns.next();
      probe.col(k).normalize();
    }
    const Eigen::MatrixXd dots = pts.transpose() * probe.leftCols(m);
    for (int k = 0; k < m; ++k) {
      const double best = std::clamp(dots.col(k).maxCoeff(), -1.0, 1.0);
      worst = std::max(worst, std::acos(best));
    }
  }
  return worst;
}

double max_abs_cosine(const Dataset& ds) {
  double m = 0.0;
  for (int i = 0; i < ds.n(); ++i)
    for (int j = i + 1; j < ds.n(); ++j) m = std::max(m, std::abs(ds.inputs[i].dot(ds.inputs[j])));
  return m;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = (b == std::string::npos) ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

double parse_cell(const std::string& cell, int row, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw IngestionError("non-numeric value '" + cell + "' at row " + std::to_string(row) +
                         ", column '" + column + "'");
  }
  return v;
}

}  // namespace

Dataset parse_csv(std::istream& is, const std::string& target_column, double parallel_threshold,
                  const std::string& name) {
  if (!(parallel_threshold > 0.0)) throw DomainError("parallel threshold must be positive");
  std::string line;
  if (!std::getline(is, line)) throw IngestionError(name + ": empty file");
  const std::vector<std::string> header = split_line(line);
  const auto it = std::find(header.begin(), header.end(), target_column);
  if (it == header.end()) throw IngestionError(name + ": no column named '" + target_column + "'");
  const int target = static_cast<int>(it - header.begin());
  const int cols = static_cast<int>(header.size());
  if (cols < 2) throw IngestionError(name + ": need at least one feature column");

  std::vector<std::vector<double>> rows;
  int row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != cols) {
      throw IngestionError(name + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                           " cells, header has " + std::to_string(cols));
    }
    std::vector<double> vals(cols);
    for (int c = 0; c < cols; ++c) vals[c] = parse_cell(cells[c], row, header[c]);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw IngestionError(name + ": no data rows");
  const int n = static_cast<int>(rows.size());

  std::vector<double> labels;
  for (const auto& r : rows)
    if (std::find(labels.begin(), labels.end(), r[target]) == labels.end()) labels.push_back(r[target]);
  if (labels.size() != 2) {
    throw IngestionError(name + ": target column '" + target_column + "' must have exactly 2 distinct values, found " +
                         std::to_string(labels.size()));
  }
  const double lo_label = std::min(labels[0], labels[1]);

  std::vector<int> features;
  for (int c = 0; c < cols; ++c)
    if (c != target) features.push_back(c);
  const int d0 = static_cast<int>(features.size());
  std::vector<double> lo(d0), hi(d0);
  for (int k = 0; k < d0; ++k) {
    lo[k] = hi[k] = rows[0][features[k]];
    for (const auto& r : rows) {
      lo[k] = std::min(lo[k], r[features[k]]);
      hi[k] = std::max(hi[k], r[features[k]]);
    }
    if (!(hi[k] > lo[k])) throw IngestionError(name + ": column '" + header[features[k]] + "' is constant");
  }

  Dataset ds;
  ds.provenance = Provenance::csv;
  ds.name = name;
  std::vector<double> ys;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(d0);
    for (int k = 0; k < d0; ++k) x[k] = 2.0 * (rows[i][features[k]] - lo[k]) / (hi[k] - lo[k]) - 1.0;
    const double norm = x.norm();
    if (!(norm > 0.0)) throw IngestionError(name + ": row " + std::to_string(i + 1) + " scales to the zero vector");
    x /= norm;
    bool parallel = false;
    for (const auto& kept : ds.inputs) {
      if (std::abs(kept.dot(x)) > parallel_threshold) {
        parallel = true;
        break;
      }
    }
    if (parallel) {
      ds.removed_rows.push_back(i);
      continue;
    }
    ds.inputs.push_back(x);
    ys.push_back(rows[i][target] == lo_label ? -1.0 : 1.0);
  }
  ds.targets = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return ds;
}

Dataset load_csv(const std::string& path, const std::string& target_column, double parallel_threshold) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open " + path);
  return parse_csv(is, target_column, parallel_threshold, path);
}

void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (int k = 0; k < ds.d0(); ++k) os << 'x' << k << ',';
  os << "y\n";
  char buf[64];
  for (int i = 0; i < ds.n(); ++i) {
    for (int k = 0; k < ds.d0(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.inputs[i][k]);
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", ds.targets[i]);
    os << buf << '\n';
  }
}

}  // namespace jntk
