#pragma once

#include <span>
#include <vector>

namespace flowsentry::stats {

double mean(std::span<const double> v);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double std_dev(std::span<const double> v);

/// Linear-interpolation quantile (Hyndman-Fan type 7) of already sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

/// Type-7 quantile; copies and sorts.
double quantile(std::span<const double> v, double p);

double median(std::span<const double> v);
double iqr(std::span<const double> v);

/// Median absolute deviation from the median, unscaled.
double mad(std::span<const double> v);

} // namespace flowsentry::stats
