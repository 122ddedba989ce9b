#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace jntk {

// 64-bit FNV-1a, printed as 16 lowercase hex digits.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

// Writes `# config_hash=<hash>` followed by whatever `body` emits.
void write_csv_file(const std::string& path, const std::string& config_hash,
                    const std::function<void(std::ostream&)>& body);

std::string format_double(double v);

double median(std::vector<double> v);
double percentile(std::vector<double> v, double q);

// Percentile bootstrap interval of the median.
std::pair<double, double> bootstrap_median_ci(const std::vector<double>& values, int resamples,
                                              std::uint64_t seed, double level = 0.95);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  bool lines = true;  // polyline per series, otherwise scatter markers
};

void write_svg_plot(const std::string& path, const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace jntk
