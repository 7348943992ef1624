#include "attrlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "attrlab/common.hpp"

namespace attrlab {

double mean(std::span<const double> v) {
    if (v.empty()) throw ParameterError("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw ParameterError("sample_variance: need at least 2 values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

double median(std::span<const double> v) {
    if (v.empty()) throw ParameterError("median: empty input");
    std::vector<double> copy(v.begin(), v.end());
    const std::size_t n = copy.size();
    const std::size_t mid = n / 2;
    std::nth_element(copy.begin(), copy.begin() + mid, copy.end());
    const double hi = copy[mid];
    if (n % 2 == 1) return hi;
    std::nth_element(copy.begin(), copy.begin() + mid - 1, copy.begin() + mid);
    return 0.5 * (copy[mid - 1] + hi);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ParameterError("pearson: size mismatch");
    if (x.size() < 2) throw ParameterError("pearson: need at least 2 values");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// Acklam's rational approximation to the inverse normal CDF (~1.15e-9 abs).
double acklam_inverse(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("normal_quantile: p must be in (0, 1)");
    double x = acklam_inverse(p);
    // One Newton step: x -= (Phi(x) - p) / phi(x).
    const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (density > 0.0) x -= (normal_cdf(x) - p) / density;
    return x;
}

double binary_entropy(double p) {
    if (p < 0.0 || p > 1.0) throw ParameterError("binary_entropy: p must be in [0, 1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double log2_factorial(int m) {
    if (m < 0) throw ParameterError("log2_factorial: m must be nonnegative");
    return std::lgamma(static_cast<double>(m) + 1.0) / std::numbers::ln2;
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace attrlab
