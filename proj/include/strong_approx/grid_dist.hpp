#ifndef STRONG_APPROX_GRID_DIST_HPP
#define STRONG_APPROX_GRID_DIST_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strong_approx/error.hpp"

namespace strong_approx {

inline constexpr std::size_t kMaxCells = std::size_t(1) << 24;
/// Masses below this are trimmed from the ends of every convolution result.
inline constexpr double kMassFloor = 1e-15;
/// Conditional laws refuse sum-points lighter than this.
inline constexpr double kConditionFloor = 1e-14;
inline constexpr double kLatticeTol = 1e-9;
inline constexpr int kMaxCumulantOrder = 32;

namespace detail {

/// Largest g such that every value is (within tolerance) an integer multiple
/// of g. Zeros are ignored; returns 0 when every value is zero.
inline double lattice_step(std::span<const double> values, double tol = kLatticeTol) {
	double scale = 0.0;
	for (double v : values) scale = std::max(scale, std::abs(v));
	if (scale == 0.0) return 0.0;
	const double abs_tol = tol * std::max(1.0, scale);

	double g = 0.0;
	for (double v : values) {
		double b = std::abs(v);
		if (b <= abs_tol) continue;
		if (g == 0.0) {
			g = b;
			continue;
		}
		double a = g;
		if (a < b) std::swap(a, b);
		for (int it = 0; it < 2000 && b > abs_tol; ++it) {
			double r = std::fmod(a, b);
			if (b - r <= abs_tol) r = 0.0;
			a = b;
			b = r;
		}
		g = a;
	}
	// labels beyond the cell budget mean the Euclid run only stopped on the tolerance
	if (g == 0.0 || scale / g > double(kMaxCells)) return 0.0;

	// Least-squares refinement of the common step against the integer labels.
	double num = 0.0, den = 0.0;
	for (double v : values) {
		const double k = std::round(v / g);
		num += k * v;
		den += k * k;
	}
	if (den > 0.0) g = num / den;
	for (double v : values) {
		const double k = std::round(v / g);
		if (std::abs(v - k * g) > abs_tol) return 0.0;
	}
	return std::abs(g);
}

inline long long checked_ratio(double big, double small) {
	const double r = big / small;
	const double k = std::round(r);
	if (std::abs(r - k) > 1e-6 * std::max(1.0, std::abs(r))) fail(ErrorCode::NonCommensurableSupport, "steps do not share a lattice");
	return static_cast<long long>(k);
}

inline void fft(std::vector<std::complex<double>>& a, bool invert) {
	const std::size_t n = a.size();
	for (std::size_t i = 1, j = 0; i < n; ++i) {
		std::size_t bit = n >> 1;
		for (; j & bit; bit >>= 1) j ^= bit;
		j ^= bit;
		if (i < j) std::swap(a[i], a[j]);
	}
	for (std::size_t len = 2; len <= n; len <<= 1) {
		const double ang = 2.0 * std::numbers::pi / double(len) * (invert ? -1.0 : 1.0);
		for (std::size_t i = 0; i < n; i += len) {
			for (std::size_t j = 0; j < len / 2; ++j) {
				const std::complex<double> w = std::polar(1.0, ang * double(j));
				const std::complex<double> u = a[i + j], v = a[i + j + len / 2] * w;
				a[i + j] = u + v;
				a[i + j + len / 2] = u - v;
			}
		}
	}
	if (invert)
		for (auto& x : a) x /= double(n);
}

/// Polynomial product of two mass vectors; direct for small inputs, FFT above.
inline std::vector<double> multiply(std::span<const double> a, std::span<const double> b) {
	std::vector<double> out(a.size() + b.size() - 1, 0.0);
	if (double(a.size()) * double(b.size()) <= 6.7e7) {
		for (std::size_t i = 0; i < a.size(); ++i) {
			if (a[i] == 0.0) continue;
			const double ai = a[i];
			double* o = out.data() + i;
			for (std::size_t j = 0; j < b.size(); ++j) o[j] += ai * b[j];
		}
		return out;
	}
	std::size_t n = 1;
	while (n < out.size()) n <<= 1;
	std::vector<std::complex<double>> fa(a.begin(), a.end()), fb(b.begin(), b.end());
	fa.resize(n);
	fb.resize(n);
	fft(fa, false);
	fft(fb, false);
	for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
	fft(fa, true);
	for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, fa[i].real());
	return out;
}

} // namespace detail

/// Finite-support probability law on the lattice origin + step * {0..size-1}.
/// Masses are nonnegative, normalized, and the end masses are nonzero.
class GridDist {
public:
	GridDist(double origin, double step, std::vector<double> probs) : origin_(origin), step_(step), probs_(std::move(probs)) {
		if (!(step_ > 0.0) || !std::isfinite(step_)) fail(ErrorCode::InvalidArgument, "lattice step must be positive");
		if (!std::isfinite(origin_)) fail(ErrorCode::InvalidArgument, "lattice origin must be finite");
		for (double p : probs_)
			if (p < 0.0 || std::isnan(p)) fail(ErrorCode::NegativeMass, "masses must be nonnegative");
		std::size_t first = 0, last = probs_.size();
		while (first < last && probs_[first] == 0.0) ++first;
		while (last > first && probs_[last - 1] == 0.0) --last;
		if (first == last) fail(ErrorCode::InvalidArgument, "distribution has zero total mass");
		if (first > 0 || last < probs_.size()) {
			origin_ += step_ * double(first);
			probs_ = std::vector<double>(probs_.begin() + std::ptrdiff_t(first), probs_.begin() + std::ptrdiff_t(last));
		}
		const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
		cum_.resize(probs_.size());
		double run = 0.0;
		for (std::size_t i = 0; i < probs_.size(); ++i) {
			probs_[i] /= total;
			run += probs_[i];
			cum_[i] = run;
		}
	}

	static GridDist point_mass(double a) { return GridDist(a, 1.0, {1.0}); }

	double origin() const { return origin_; }
	double step() const { return step_; }
	std::size_t size() const { return probs_.size(); }
	double point(std::size_t i) const { return origin_ + step_ * double(i); }
	double front() const { return origin_; }
	double back() const { return point(size() - 1); }
	std::span<const double> probs() const { return probs_; }
	/// Cumulative masses: cumulative()[i] = P(X <= point(i)).
	std::span<const double> cumulative() const { return cum_; }
	double mass(std::size_t i) const { return probs_[i]; }
	bool is_point_mass() const { return probs_.size() == 1; }

	/// Index of `x` on this lattice, or -1 when x is not a lattice point.
	long long index_of(double x) const {
		const double t = (x - origin_) / step_;
		const double k = std::round(t);
		if (std::abs(t - k) > 1e-7 || k < 0 || k >= double(size())) return -1;
		return static_cast<long long>(k);
	}

private:
	double origin_;
	double step_;
	std::vector<double> probs_;
	std::vector<double> cum_;
};

struct MomentSummary {
	double mean = 0.0;
	double variance = 0.0;
	/// E|xi|^3 exp(|xi| / tau)
	double abs_third_exp = 0.0;
};

/// Cumulants gamma_2..gamma_M of a law (gamma_1 is dropped: centered).
struct CumulantSeq {
	std::vector<double> gammas;

	int order() const { return int(gammas.size()) + 1; }
	double gamma(int m) const { return gammas.at(std::size_t(m - 2)); }
};

/// Builds a normalized grid law from (point, mass) pairs, merging them onto
/// the coarsest common lattice.
inline GridDist make_grid(std::span<const std::pair<double, double>> points) {
	if (points.empty()) fail(ErrorCode::InvalidArgument, "no support points");
	std::vector<std::pair<double, double>> pts(points.begin(), points.end());
	for (const auto& [x, p] : pts) {
		if (p < 0.0 || std::isnan(p)) fail(ErrorCode::NegativeMass, "mass at " + std::to_string(x) + " is negative");
		if (!std::isfinite(x)) fail(ErrorCode::InvalidArgument, "support point is not finite");
	}
	std::sort(pts.begin(), pts.end());
	const double lo = pts.front().first, hi = pts.back().first;
	if (hi == lo) return GridDist(lo, 1.0, {1.0});

	std::vector<double> diffs;
	diffs.reserve(pts.size());
	for (const auto& pt : pts) diffs.push_back(pt.first - lo);
	const double step = detail::lattice_step(diffs);
	if (step == 0.0 || (hi - lo) / step + 1.0 > double(kMaxCells))
		fail(ErrorCode::NonCommensurableSupport, "no common lattice with at most 2^24 cells");
	const auto cells = std::size_t(std::llround((hi - lo) / step)) + 1;
	std::vector<double> probs(cells, 0.0);
	for (const auto& [x, p] : pts) probs[std::size_t(std::llround((x - lo) / step))] += p;
	return GridDist(lo, step, std::move(probs));
}

inline GridDist make_grid(std::initializer_list<std::pair<double, double>> points) {
	return make_grid(std::span<const std::pair<double, double>>(points.begin(), points.size()));
}

inline double mean(const GridDist& f) {
	double s = 0.0;
	const auto p = f.probs();
	for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * double(i);
	return f.origin() + f.step() * s;
}

inline double central_moment(const GridDist& f, int m) {
	const double mu = mean(f);
	const auto p = f.probs();
	double s = 0.0;
	for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::pow(f.point(i) - mu, m);
	return s;
}

inline double raw_moment(const GridDist& f, int m) {
	const auto p = f.probs();
	double s = 0.0;
	for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::pow(f.point(i), m);
	return s;
}

inline double variance(const GridDist& f) {
	const double mu = mean(f);
	const auto p = f.probs();
	double s = 0.0;
	for (std::size_t i = 0; i < p.size(); ++i) {
		const double d = f.point(i) - mu;
		s += p[i] * d * d;
	}
	return s;
}

inline MomentSummary moments(const GridDist& f, double tau) {
	if (!(tau > 0.0)) fail(ErrorCode::NonPositive, "tau must be positive");
	MomentSummary out;
	out.mean = mean(f);
	out.variance = variance(f);
	const auto p = f.probs();
	for (std::size_t i = 0; i < p.size(); ++i) {
		const double a = std::abs(f.point(i));
		if (a > 0.0) out.abs_third_exp += p[i] * a * a * a * std::exp(a / tau);
	}
	return out;
}

inline CumulantSeq cumulants(const GridDist& f, int max_order) {
	if (max_order < 2) fail(ErrorCode::InvalidArgument, "cumulant order must be at least 2");
	if (max_order > kMaxCumulantOrder) fail(ErrorCode::OrderTooHigh, "cumulant order above 32");
	// extended precision: high orders cancel heavily in the recursion
	std::vector<long double> mu(std::size_t(max_order) + 1, 0.0L);
	mu[0] = 1.0L;
	const auto p = f.probs();
	long double m1 = 0.0L;
	for (std::size_t i = 0; i < p.size(); ++i) m1 += (long double)p[i] * (long double)f.point(i);
	for (std::size_t i = 0; i < p.size(); ++i) {
		const long double d = (long double)f.point(i) - m1;
		long double pw = d;
		for (int k = 2; k <= max_order; ++k) {
			pw *= d;
			mu[std::size_t(k)] += (long double)p[i] * pw;
		}
	}
	// kappa_n = mu_n - sum_{k=1}^{n-1} C(n-1, k-1) kappa_k mu_{n-k}
	std::vector<long double> kappa(std::size_t(max_order) + 1, 0.0L);
	for (int n = 2; n <= max_order; ++n) {
		long double s = mu[std::size_t(n)];
		long double binom = 1.0L; // C(n-1, k-1) at k = 1
		for (int k = 1; k < n; ++k) {
			s -= binom * kappa[std::size_t(k)] * mu[std::size_t(n - k)];
			binom = binom * (long double)(n - k) / (long double)k;
		}
		kappa[std::size_t(n)] = s;
	}
	std::vector<double> out;
	for (int n = 2; n <= max_order; ++n) out.push_back(double(kappa[std::size_t(n)]));
	return CumulantSeq{out};
}

/// Places `f` on the finer lattice of step `step` (f.step() must be a multiple).
inline std::vector<double> spread_on(const GridDist& f, double step) {
	const long long r = detail::checked_ratio(f.step(), step);
	if (r == 1) return {f.probs().begin(), f.probs().end()};
	if (double(r) * double(f.size() - 1) + 1.0 > double(kMaxCells)) fail(ErrorCode::SupportOverflow, "regridded support exceeds 2^24 cells");
	std::vector<double> out(std::size_t(r) * (f.size() - 1) + 1, 0.0);
	for (std::size_t i = 0; i < f.size(); ++i) out[std::size_t(r) * i] = f.mass(i);
	return out;
}

inline GridDist regrid(const GridDist& f, double step) { return GridDist(f.origin(), step, spread_on(f, step)); }

/// Drops end masses below the floor; interior cells are kept as computed.
inline GridDist trimmed(double origin, double step, std::vector<double> probs, double floor = kMassFloor) {
	std::size_t first = 0, last = probs.size();
	while (first < last && probs[first] < floor) ++first;
	while (last > first && probs[last - 1] < floor) --last;
	if (first == last) {
		// Everything below the floor: keep the heaviest cell.
		const auto it = std::max_element(probs.begin(), probs.end());
		return GridDist::point_mass(origin + step * double(it - probs.begin()));
	}
	std::vector<double> kept(probs.begin() + std::ptrdiff_t(first), probs.begin() + std::ptrdiff_t(last));
	return GridDist(origin + step * double(first), step, std::move(kept));
}

/// Law of the sum of independent draws from f and g.
inline GridDist convolve(const GridDist& f, const GridDist& g) {
	if (f.is_point_mass()) return GridDist(g.origin() + f.origin(), g.step(), {g.probs().begin(), g.probs().end()});
	if (g.is_point_mass()) return GridDist(f.origin() + g.origin(), f.step(), {f.probs().begin(), f.probs().end()});
	const double steps[] = {f.step(), g.step()};
	const double step = detail::lattice_step(steps);
	if (step == 0.0) fail(ErrorCode::NonCommensurableSupport, "convolution of non-commensurable lattices");
	const double width = (f.back() - f.front() + g.back() - g.front()) / step + 1.0;
	if (width > double(kMaxCells)) fail(ErrorCode::SupportOverflow, "convolution support exceeds 2^24 cells");
	const auto a = spread_on(f, step);
	const auto b = spread_on(g, step);
	return trimmed(f.origin() + g.origin(), step, detail::multiply(a, b));
}

/// Right-continuous distribution function.
inline double cdf(const GridDist& f, double x) {
	const double t = (x - f.origin()) / f.step();
	if (t < -1e-9) return 0.0;
	const double k = std::floor(t + 1e-9);
	if (k >= double(f.size() - 1)) return 1.0;
	return f.cumulative()[std::size_t(k)];
}

/// Left-continuous generalized inverse: smallest support point x with cdf(x) >= p.
inline double quantile(const GridDist& f, double p) {
	if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::InvalidArgument, "quantile level outside [0, 1]");
	const auto cum = f.cumulative();
	auto it = std::lower_bound(cum.begin(), cum.end(), p);
	if (it == cum.end()) --it;
	return f.point(std::size_t(it - cum.begin()));
}

/// Law of L given L + R = s, for independent L ~ left, R ~ right.
inline GridDist conditional_left_given_sum(const GridDist& left, const GridDist& right, double s) {
	std::vector<double> w(left.size(), 0.0);
	double total = 0.0;
	for (std::size_t j = 0; j < left.size(); ++j) {
		if (left.mass(j) == 0.0) continue;
		const long long k = right.index_of(s - left.point(j));
		if (k < 0) continue;
		w[j] = left.mass(j) * right.mass(std::size_t(k));
		total += w[j];
	}
	if (total < kConditionFloor) fail(ErrorCode::ZeroMassCondition, "sum point " + std::to_string(s) + " carries mass below 1e-14");
	return GridDist(left.origin(), left.step(), std::move(w));
}

/// log E exp(z xi); refused outside |z| tau_domain < 1.
inline double log_mgf(const GridDist& f, double z, double tau_domain) {
	if (!(std::abs(z) * tau_domain < 1.0)) fail(ErrorCode::OutOfDomain, "log-mgf evaluated outside |z| tau < 1");
	if (z == 0.0) return 0.0;
	const double top = std::max(z * f.front(), z * f.back());
	double s = 0.0;
	const auto p = f.probs();
	for (std::size_t i = 0; i < p.size(); ++i)
		if (p[i] > 0.0) s += p[i] * std::exp(z * f.point(i) - top);
	return top + std::log(s);
}

/// Log-mgf bound to a law and its analyticity radius, with central-difference derivatives.
class LogMgf {
public:
	LogMgf(GridDist f, double tau_domain) : f_(std::move(f)), tau_(tau_domain) {}

	double operator()(double z) const { return log_mgf(f_, z, tau_); }

	/// Central finite-difference derivative of order 1, 2 or 3.
	double derivative(double z, int order, double h = 1e-4) const {
		const auto& phi = *this;
		switch (order) {
		case 1: return (phi(z + h) - phi(z - h)) / (2.0 * h);
		case 2: return (phi(z + h) - 2.0 * phi(z) + phi(z - h)) / (h * h);
		case 3: return (phi(z + 2 * h) - 2.0 * phi(z + h) + 2.0 * phi(z - h) - phi(z - 2 * h)) / (2.0 * h * h * h);
		default: fail(ErrorCode::InvalidArgument, "derivative order must be 1, 2 or 3");
		}
	}

	double radius() const { return 1.0 / tau_; }
	const GridDist& law() const { return f_; }

private:
	GridDist f_;
	double tau_;
};

/// Lattice of step g containing every support point of f and the origin 0.
inline double lattice_with_zero(const GridDist& f) {
	if (f.origin() == 0.0) return f.step();
	const double vals[] = {f.step(), f.origin()};
	const double g = detail::lattice_step(vals);
	if (g == 0.0) fail(ErrorCode::NonCommensurableSupport, "support lattice does not contain 0");
	return g;
}

/// Accompanying compound Poisson law e(F) = exp(-1) sum_k F^{*k} / k!,
/// truncated once the remaining Poisson(1) tail is below tail_cut.
inline GridDist compound_poisson(const GridDist& f, double tail_cut = 1e-12) {
	if (!(tail_cut > 0.0 && tail_cut <= 1e-6)) fail(ErrorCode::InvalidArgument, "tail_cut must lie in (0, 1e-6]");
	if (f.is_point_mass() && f.origin() == 0.0) return f;

	const double g = lattice_with_zero(f);
	// Truncation order: smallest K with P(N > K) < tail_cut.
	std::vector<double> weight{std::exp(-1.0)};
	double tail = 1.0 - weight[0];
	while (tail >= tail_cut) {
		weight.push_back(weight.back() / double(weight.size()));
		tail -= weight.back();
		if (tail < 0.0) tail = 0.0;
	}
	const auto K = weight.size() - 1;
	const long long lo_f = std::llround(f.front() / g), hi_f = std::llround(f.back() / g);
	const long long lo = std::min(0LL, (long long)K * lo_f), hi = std::max(0LL, (long long)K * hi_f);
	if (double(hi - lo) + 1.0 > double(kMaxCells)) fail(ErrorCode::SupportOverflow, "compound Poisson support exceeds 2^24 cells");

	std::vector<double> acc(std::size_t(hi - lo + 1), 0.0);
	acc[std::size_t(-lo)] += weight[0];
	GridDist power = f;
	for (std::size_t k = 1; k <= K; ++k) {
		if (k > 1) power = convolve(power, f);
		const auto p = power.probs();
		for (std::size_t i = 0; i < p.size(); ++i) {
			const long long idx = std::llround(power.point(i) / g) - lo;
			acc[std::size_t(idx)] += weight[k] * p[i];
		}
	}
	return GridDist(double(lo) * g, g, std::move(acc));
}

/// Mixture (1 - w) f + w g on the common lattice of both supports.
inline GridDist mix(const GridDist& f, const GridDist& g, double w) {
	if (!(w >= 0.0 && w <= 1.0)) fail(ErrorCode::InvalidArgument, "mixture weight outside [0, 1]");
	if (w == 0.0) return f;
	if (w == 1.0) return g;
	const double origin = std::min(f.front(), g.front());
	const double vals[] = {f.step(), g.step(), f.front() - origin, g.front() - origin};
	double step = detail::lattice_step(vals);
	if (step == 0.0) fail(ErrorCode::NonCommensurableSupport, "mixture components share no lattice");
	const double hi = std::max(f.back(), g.back());
	if ((hi - origin) / step + 1.0 > double(kMaxCells)) fail(ErrorCode::SupportOverflow, "mixture support exceeds 2^24 cells");
	std::vector<double> acc(std::size_t(std::llround((hi - origin) / step)) + 1, 0.0);
	for (std::size_t i = 0; i < f.size(); ++i) acc[std::size_t(std::llround((f.point(i) - origin) / step))] += (1.0 - w) * f.mass(i);
	for (std::size_t i = 0; i < g.size(); ++i) acc[std::size_t(std::llround((g.point(i) - origin) / step))] += w * g.mass(i);
	return GridDist(origin, step, std::move(acc));
}

/// Law of a * xi.
inline GridDist scale(const GridDist& f, double a) {
	if (a == 0.0) return GridDist::point_mass(0.0);
	std::vector<double> p(f.probs().begin(), f.probs().end());
	if (a > 0.0) return GridDist(a * f.origin(), a * f.step(), std::move(p));
	std::reverse(p.begin(), p.end());
	return GridDist(a * f.back(), -a * f.step(), std::move(p));
}

/// Law of xi + b.
inline GridDist shift(const GridDist& f, double b) { return GridDist(f.origin() + b, f.step(), {f.probs().begin(), f.probs().end()}); }

inline GridDist center(const GridDist& f) { return shift(f, -mean(f)); }

// ---- named families -------------------------------------------------------

inline GridDist rademacher() { return make_grid({{-1.0, 0.5}, {1.0, 0.5}}); }

inline GridDist coin() { return make_grid({{0.0, 0.5}, {1.0, 0.5}}); }

/// Poisson(rate) truncated once the remaining tail is below `cut`, renormalized, centered.
inline GridDist centered_poisson(double rate, double cut = 1e-12) {
	if (!(rate > 0.0)) fail(ErrorCode::NonPositive, "Poisson rate must be positive");
	std::vector<double> p{std::exp(-rate)};
	double tail = 1.0 - p[0];
	while (tail >= cut || double(p.size()) <= rate) {
		p.push_back(p.back() * rate / double(p.size()));
		tail -= p.back();
		if (p.size() > kMaxCells) fail(ErrorCode::SupportOverflow, "Poisson support exceeds 2^24 cells");
	}
	return center(GridDist(0.0, 1.0, std::move(p)));
}

/// Discrete uniform law on the midpoints of n_cells equal cells of [a, b].
inline GridDist uniform_grid(double a, double b, std::size_t n_cells) {
	if (!(b > a) || n_cells == 0) fail(ErrorCode::InvalidArgument, "uniform needs a < b and at least one cell");
	const double h = (b - a) / double(n_cells);
	return GridDist(a + 0.5 * h, h, std::vector<double>(n_cells, 1.0));
}

/// N(mu, sigma^2) sampled at n_cells equispaced points spanning mu +- span*sigma.
inline GridDist gauss_grid(double sigma, std::size_t n_cells, double span, double mu = 0.0) {
	if (!(sigma > 0.0)) fail(ErrorCode::DegenerateVariance, "Gaussian grid needs sigma > 0");
	if (n_cells < 2 || !(span > 0.0)) fail(ErrorCode::InvalidArgument, "Gaussian grid needs >= 2 cells and span > 0");
	const double h = 2.0 * span * sigma / double(n_cells - 1);
	const double origin = mu - span * sigma;
	std::vector<double> p(n_cells);
	for (std::size_t i = 0; i < n_cells; ++i) {
		// Offsets measured from the symmetric centre keep the mean exact.
		const double t = (double(i) - 0.5 * double(n_cells - 1)) * h / sigma;
		p[i] = std::exp(-0.5 * t * t);
	}
	return GridDist(origin, h, std::move(p));
}

} // namespace strong_approx

#endif
