#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "jntk/datasets.hpp"
#include "jntk/errors.hpp"

using namespace jntk;

namespace {

Dataset parse(const std::string& text, double threshold = 0.99) {
  std::istringstream is(text);
  return parse_csv(is, "y", threshold, "inline");
}

}  // namespace

TEST_CASE("fibonacci lattice points are unit, distinct and deterministic") {
  for (int dim : {2, 3, 4, 6}) {
    const Dataset a = fibonacci_sphere(64, dim);
    const Dataset b = fibonacci_sphere(64, dim);
    CHECK(a.n() == 64);
    CHECK(a.d0() == dim);
    CHECK_NOTHROW(a.validate());
    for (int i = 0; i < a.n(); ++i) {
      CHECK(std::abs(a.inputs[i].norm() - 1.0) <= 1e-12);
      CHECK(a.inputs[i] == b.inputs[i]);
      CHECK(a.targets[i] == (a.inputs[i][dim - 1] >= 0 ? 1.0 : -1.0));
    }
    CHECK(max_abs_cosine(a) < 1.0 - 1e-6);
  }
  CHECK_THROWS_AS(fibonacci_sphere(1, 3), DomainError);
  CHECK_THROWS_AS(fibonacci_sphere(8, 1), DomainError);
}

TEST_CASE("fibonacci lattice covers the sphere") {
  const Dataset ds = fibonacci_sphere(256, 4);
  const double r = covering_radius(ds, 100000, 1);
  CHECK(r <= 0.5);
  CHECK(r > 0.0);
  CHECK(covering_radius(ds, 1000, 7) == covering_radius(ds, 1000, 7));

  // Circle: golden-angle gaps are at most about phi times the even spacing.
  const Dataset c = fibonacci_sphere(16, 2);
  CHECK(covering_radius(c, 20000, 2) <= 1.7 * M_PI / 16);
}

TEST_CASE("inverse normal cdf") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(inverse_normal_cdf(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-13));
  CHECK(inverse_normal_cdf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-12));
  for (double p : {1e-6, 0.01, 0.3, 0.7, 0.999}) {
    const double z = inverse_normal_cdf(p);
    CHECK(0.5 * std::erfc(-z / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-13));
  }
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), DomainError);
  CHECK_THROWS_AS(inverse_normal_cdf(1.0), DomainError);
}

TEST_CASE("dataset validation and subsets") {
  Dataset ds = fibonacci_sphere(8, 3);
  CHECK(ds.subset(3).n() == 3);
  CHECK(ds.subset(3).inputs[2] == ds.inputs[2]);
  CHECK_THROWS_AS(ds.subset(0), DomainError);
  CHECK_THROWS_AS(ds.subset(9), DomainError);
  ds.targets[0] = 1.5;
  CHECK_THROWS_AS(ds.validate(), DomainError);
  ds = fibonacci_sphere(8, 3);
  ds.inputs[1] *= 1.001;
  CHECK_THROWS_AS(ds.validate(), DomainError);
}

TEST_CASE("csv ingestion scales, normalises and labels") {
  const Dataset ds = parse("a,y,b\n0,3,0\n10,7,2.5\n5,3,5\n10,7,0\n");
  CHECK(ds.provenance == Provenance::csv);
  REQUIRE(ds.n() == 4);
  CHECK(ds.d0() == 2);
  CHECK_NOTHROW(ds.validate());
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(ds.inputs[0][0] == doctest::Approx(-s));
  CHECK(ds.inputs[0][1] == doctest::Approx(-s));
  CHECK(ds.inputs[1][0] == doctest::Approx(1.0));
  CHECK(ds.inputs[1][1] == doctest::Approx(0.0));
  CHECK(ds.inputs[3][0] == doctest::Approx(s));
  CHECK(ds.inputs[3][1] == doctest::Approx(-s));
  CHECK(ds.targets[0] == -1.0);
  CHECK(ds.targets[1] == 1.0);
  CHECK(ds.targets[2] == -1.0);
  CHECK(ds.removed_rows.empty());
}

TEST_CASE("csv ingestion drops parallel rows") {
  // All three rows scale onto one line through the origin.
  const Dataset a = parse("x0,x1,y\n1,1,0\n2,2,1\n4,4,1\n");
  CHECK(a.n() == 1);
  CHECK(a.removed_rows == std::vector<int>{1, 2});

  const Dataset b = parse("x0,x1,y\n0,0,0\n10,5,1\n5,10,1\n10,0,0\n10,0.01,0\n");
  CHECK(b.n() == 4);
  CHECK(b.removed_rows == std::vector<int>{4});
  CHECK(max_abs_cosine(b) <= 0.99);

  const Dataset c = parse("x0,x1,y\n0,0,0\n10,5,1\n5,10,1\n10,0,0\n10,0.01,0\n", 0.999999999);
  CHECK(c.n() == 5);
}

TEST_CASE("csv ingestion errors") {
  CHECK_THROWS_AS(parse(""), IngestionError);
  CHECK_THROWS_AS(parse("a,b\n1,2\n3,4\n"), IngestionError);           // no target column
  CHECK_THROWS_AS(parse("a,y\n1,0\nfoo,1\n"), IngestionError);         // non-numeric
  CHECK_THROWS_AS(parse("a,b,y\n1,5,0\n2,5,1\n"), IngestionError);     // constant column
  CHECK_THROWS_AS(parse("a,y\n1,0\n2,1\n3,2\n"), IngestionError);      // three labels
  CHECK_THROWS_AS(parse("a,b,y\n1,2,0\n3,1\n"), IngestionError);       // ragged row
  CHECK_THROWS_AS(parse("a,y\n"), IngestionError);                     // no rows
  CHECK_THROWS_AS(parse("a,b,y\n0,0,0\n1,1,1\n0.5,0.5,0\n"), IngestionError);  // zero after scaling
  CHECK_THROWS_AS(parse("a,y\n1,0\n2,1\n", 0.0), DomainError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "y"), IngestionError);
}

TEST_CASE("dataset writer") {
  const Dataset ds = fibonacci_sphere(3, 2);
  std::ostringstream os;
  write_dataset_csv(os, ds);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "x0,x1,y");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}
