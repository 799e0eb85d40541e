#ifndef STRONG_APPROX_SPECIAL_HPP
#define STRONG_APPROX_SPECIAL_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace strong_approx {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Inverse standard normal cdf. Acklam's rational approximation followed by
/// one Halley step against erfc; accurate to a few ulps on (0, 1).
inline double normal_quantile(double p) {
	if (p <= 0.0) return -std::numeric_limits<double>::infinity();
	if (p >= 1.0) return std::numeric_limits<double>::infinity();

	static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
	                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
	static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
	                               6.680131188771972e+01,  -1.328068155288572e+01};
	static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
	                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
	static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
	                               3.754408661907416e+00};
	constexpr double plow = 0.02425;

	double x;
	if (p < plow) {
		const double q = std::sqrt(-2.0 * std::log(p));
		x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
		    ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
	} else if (p <= 1.0 - plow) {
		const double q = p - 0.5;
		const double r = q * q;
		x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
		    (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
	} else {
		const double q = std::sqrt(-2.0 * std::log1p(-p));
		x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
		    ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
	}
	const double e = normal_cdf(x) - p;
	const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
	return x - u / (1.0 + 0.5 * x * u);
}

/// Van der Corput radical inverse of `index` in base `base`.
inline double radical_inverse(std::uint64_t index, unsigned base) {
	double inv = 1.0 / base, f = inv, r = 0.0;
	while (index > 0) {
		r += f * double(index % base);
		index /= base;
		f *= inv;
	}
	return r;
}

/// k-th Halton coordinate (k < 32) of point `index`.
inline double halton(std::uint64_t index, unsigned k) {
	static constexpr unsigned primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
	                                      59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};
	return radical_inverse(index, primes[k % 32]);
}

} // namespace strong_approx

#endif
