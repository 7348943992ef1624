#ifndef ATTRLAB_STATS_HPP
#define ATTRLAB_STATS_HPP

#include <span>
#include <vector>

namespace attrlab {

double mean(std::span<const double> v);
// Sample variance / sd with the n-1 divisor.
double sample_variance(std::span<const double> v);
double sample_sd(std::span<const double> v);
// Median of a copy; averages the two middle order statistics for even n.
double median(std::span<const double> v);
// Pearson correlation; returns 0 when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

// Standard normal CDF, computed through erfc. |error| < 1e-15.
double normal_cdf(double x);

// Inverse standard normal CDF: rational approximation (Acklam) polished by
// one Newton step against normal_cdf. |error| < 1e-9 on (0,1).
// Throws ParameterError unless p is strictly inside (0, 1).
double normal_quantile(double p);

// Binary entropy in bits; H2(0) = H2(1) = 0.
double binary_entropy(double p);

// log2(m!) via lgamma.
double log2_factorial(int m);

// Binomial coefficient C(n, 2) as a double.
double choose2(double n);

}  // namespace attrlab

#endif
