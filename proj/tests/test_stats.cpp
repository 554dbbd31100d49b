#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowsentry/stats.hpp"

using namespace flowsentry;

TEST_CASE("type-7 quantiles") {
  // sorted-list oracle: h = (n-1)p, linear between neighbours
  const std::vector<double> v{100, 102, 98, 101, 99, 100, 100, 100};
  CHECK(stats::median(v) == doctest::Approx(100.0));
  CHECK(stats::quantile(v, 0.25) == doctest::Approx(99.75));
  CHECK(stats::quantile(v, 0.75) == doctest::Approx(100.25));
  CHECK(stats::iqr(v) == doctest::Approx(0.5));
  const std::vector<double> w{1, 2, 3, 4};
  CHECK(stats::quantile(w, 0.0) == 1.0);
  CHECK(stats::quantile(w, 1.0) == 4.0);
  CHECK(stats::quantile(w, 0.5) == doctest::Approx(2.5));
  CHECK(stats::quantile(w, 1.0 / 3.0) == doctest::Approx(2.0));
}

TEST_CASE("moments and spread") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(stats::mean(v) == doctest::Approx(5.0));
  CHECK(stats::std_dev(v) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  // |v - 4.5| = {2.5, .5, .5, .5, .5, .5, 2.5, 4.5}
  CHECK(stats::mad(v) == doctest::Approx(0.5));
  const std::vector<double> c(5, 3.0);
  CHECK(stats::std_dev(c) == 0.0);
  CHECK(stats::iqr(c) == 0.0);
  CHECK(stats::mad(c) == 0.0);
}
