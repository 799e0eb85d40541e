#ifndef STRONG_APPROX_CLASS_GAUGE_HPP
#define STRONG_APPROX_CLASS_GAUGE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "strong_approx/grid_dist.hpp"
#include "strong_approx/special.hpp"

namespace strong_approx {

/// Slack below this fails an exact (closed-form) check.
inline constexpr double kExactSlackTol = -1e-9;
/// Slack below this fails a finite-difference check.
inline constexpr double kNumericSlackTol = -1e-6;

struct Probe {
	std::string at;
	double slack = 0.0; ///< bound - observed
};

struct ClassCertificate {
	std::string class_name; ///< S1, B, A_cumulant or A_numeric
	double tau = 0.0;
	int verified_order = 0;
	std::vector<Probe> probe_report;
	bool pass = true;
	std::vector<std::string> flags;
	std::map<std::string, double> extra;

	double min_slack() const {
		double m = std::numeric_limits<double>::infinity();
		for (const auto& p : probe_report) m = std::min(m, p.slack);
		return m;
	}
};

inline nlohmann::json to_json(const ClassCertificate& c) {
	nlohmann::json probes = nlohmann::json::array();
	for (const auto& p : c.probe_report) probes.push_back({{"at", p.at}, {"slack", p.slack}});
	nlohmann::json j = {{"class", c.class_name}, {"tau", c.tau},    {"pass", c.pass}, {"verified_order", c.verified_order},
	                    {"flags", c.flags},      {"probes", probes}};
	for (const auto& [k, v] : c.extra) j["extra"][k] = v;
	return j;
}

/// max(1, ln b)
inline double log_star(double b) {
	if (!(b > 0.0)) fail(ErrorCode::NonPositive, "log* needs a positive argument");
	return std::max(1.0, std::log(b));
}

namespace detail {

inline void require_centered(const GridDist& f) {
	const double scale = std::max({1.0, std::abs(f.front()), std::abs(f.back())});
	if (std::abs(mean(f)) > 1e-10 * scale) fail(ErrorCode::NotCentered, "law must have mean 0");
}

/// log E|xi|^3 exp(|xi|/tau) - log(tau E xi^2); the S1 condition is "<= 0".
inline double s1_log_gap(const GridDist& f, double tau, double second) {
	double top = -std::numeric_limits<double>::infinity();
	for (std::size_t i = 0; i < f.size(); ++i) {
		const double a = std::abs(f.point(i));
		if (f.mass(i) > 0.0 && a > 0.0) top = std::max(top, std::log(f.mass(i)) + 3.0 * std::log(a) + a / tau);
	}
	double s = 0.0;
	for (std::size_t i = 0; i < f.size(); ++i) {
		const double a = std::abs(f.point(i));
		if (f.mass(i) > 0.0 && a > 0.0) s += std::exp(std::log(f.mass(i)) + 3.0 * std::log(a) + a / tau - top);
	}
	return top + std::log(s) - std::log(tau * second);
}

inline double factorial(int m) {
	double f = 1.0;
	for (int k = 2; k <= m; ++k) f *= k;
	return f;
}

inline std::string vec_str(const std::vector<double>& v) {
	std::ostringstream os;
	os.precision(4);
	os << '(';
	for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
	os << ')';
	return os.str();
}

inline double norm(const std::vector<double>& v) {
	double s = 0.0;
	for (double x : v) s += x * x;
	return std::sqrt(s);
}

/// Deterministic unit vector from Halton coordinates first..first+d-1 of point `index`.
inline std::vector<double> halton_direction(std::uint64_t index, unsigned first, std::size_t d) {
	std::vector<double> v(d);
	for (std::size_t j = 0; j < d; ++j) v[j] = normal_quantile(std::clamp(halton(index, first + unsigned(j)), 1e-12, 1.0 - 1e-12));
	double n = norm(v);
	if (n == 0.0) {
		v[0] = 1.0;
		n = 1.0;
	}
	for (double& x : v) x /= n;
	return v;
}

/// Coordinate axes and their bisectors (e_i +- e_j)/sqrt 2.
inline std::vector<std::vector<double>> axis_directions(std::size_t d) {
	std::vector<std::vector<double>> out;
	for (std::size_t i = 0; i < d; ++i) {
		std::vector<double> e(d, 0.0);
		e[i] = 1.0;
		out.push_back(e);
	}
	for (std::size_t i = 0; i < d; ++i)
		for (std::size_t j = i + 1; j < d; ++j)
			for (double sgn : {1.0, -1.0}) {
				std::vector<double> e(d, 0.0);
				e[i] = 1.0 / std::sqrt(2.0);
				e[j] = sgn / std::sqrt(2.0);
				out.push_back(e);
			}
	return out;
}

} // namespace detail

/// Smallest tau with E|xi|^3 exp(|xi|/tau) <= tau E xi^2, to absolute tolerance tol.
inline double s1_min_tau(const GridDist& f, double tol = 1e-9) {
	detail::require_centered(f);
	if (!(tol >= 1e-12 && tol <= 1e-3)) fail(ErrorCode::InvalidArgument, "tolerance must lie in [1e-12, 1e-3]");
	const double second = raw_moment(f, 2);
	if (second == 0.0) return 0.0;
	double hi = std::max(std::abs(f.front()), std::abs(f.back()));
	while (detail::s1_log_gap(f, hi, second) > 0.0) hi *= 2.0;
	double lo = hi / 2.0;
	while (lo > 0.0 && detail::s1_log_gap(f, lo, second) <= 0.0) lo /= 2.0;
	while (hi - lo > tol) {
		const double mid = 0.5 * (lo + hi);
		if (detail::s1_log_gap(f, mid, second) <= 0.0)
			hi = mid;
		else
			lo = mid;
	}
	return hi;
}

/// Certificate for the S1(tau) inequality at a given tau.
inline ClassCertificate s1_check(const GridDist& f, double tau) {
	detail::require_centered(f);
	if (!(tau > 0.0)) fail(ErrorCode::NonPositive, "tau must be positive");
	const auto m = moments(f, tau);
	ClassCertificate c{"S1", tau, 3, {}, true, {}, {}};
	c.probe_report.push_back({"E|x|^3 exp(|x|/tau) <= tau E x^2", tau * m.variance - m.abs_third_exp});
	c.pass = c.probe_report.back().slack >= kExactSlackTol * std::max(1.0, tau * m.variance);
	c.extra["lhs"] = m.abs_third_exp;
	c.extra["rhs"] = tau * m.variance;
	return c;
}

/// |gamma_m| <= m!/2 tau^(m-2) gamma_2 for m = 3..M.
inline ClassCertificate statulevicius_check(const CumulantSeq& g, double tau) {
	if (g.order() < 3) fail(ErrorCode::InvalidArgument, "need cumulants up to order >= 3");
	if (!(tau >= 0.0)) fail(ErrorCode::NonPositive, "tau must be nonnegative");
	ClassCertificate c{"A_cumulant", tau, g.order(), {}, true, {"constant-normalized"}, {}};
	for (int m = 3; m <= g.order(); ++m) {
		const double bound = 0.5 * detail::factorial(m) * std::pow(tau, m - 2) * g.gamma(2);
		const double slack = bound - std::abs(g.gamma(m));
		c.probe_report.push_back({"m=" + std::to_string(m), slack});
		if (slack < kExactSlackTol) c.pass = false;
	}
	return c;
}

/// max over m of (2|gamma_m| / (m! gamma_2))^(1/(m-2)).
inline double statulevicius_min_tau(const CumulantSeq& g) {
	if (g.order() < 3) fail(ErrorCode::InvalidArgument, "need cumulants up to order >= 3");
	if (!(g.gamma(2) > 0.0)) fail(ErrorCode::DegenerateVariance, "gamma_2 must be positive");
	double tau = 0.0;
	for (int m = 3; m <= g.order(); ++m)
		tau = std::max(tau, std::pow(2.0 * std::abs(g.gamma(m)) / (detail::factorial(m) * g.gamma(2)), 1.0 / (m - 2)));
	return tau;
}

/// Cumulant-route estimate of the A_1 parameter; the equivalence constant is set to 1.
inline double a_class_tau_estimate_1d(const GridDist& f, int max_order) {
	detail::require_centered(f);
	const auto g = cumulants(f, max_order);
	if (!(g.gamma(2) > 1e-300)) fail(ErrorCode::DegenerateVariance, "law has zero variance");
	return statulevicius_min_tau(g);
}

/// Smallest tau satisfying the one-dimensional Bernstein moment condition for m = 3..M.
inline double b_min_tau_1d(const GridDist& f, int max_order) {
	detail::require_centered(f);
	const double second = raw_moment(f, 2);
	if (!(second > 0.0)) fail(ErrorCode::DegenerateVariance, "law has zero variance");
	double tau = 0.0;
	for (int m = 3; m <= max_order; ++m)
		tau = std::max(tau, std::pow(2.0 * std::abs(raw_moment(f, m)) / (detail::factorial(m) * second), 1.0 / (m - 2)));
	return tau;
}

/// Bernstein-type condition of B_d(tau) for the product law of `components`,
/// checked over axis/bisector pairs plus n_directions quasi-random pairs.
/// Mixed moments are exact: they are built from coordinate raw moments.
inline ClassCertificate b_class_check(const std::vector<GridDist>& components, double tau, int max_order, int n_directions) {
	const std::size_t d = components.size();
	if (d == 0 || d > 8) fail(ErrorCode::InvalidArgument, "B check supports 1..8 coordinates");
	if (max_order < 3 || max_order > 12) fail(ErrorCode::InvalidArgument, "B check supports orders 3..12");
	if (!(tau >= 0.0)) fail(ErrorCode::NonPositive, "tau must be nonnegative");
	for (const auto& f : components) detail::require_centered(f);

	std::vector<std::vector<double>> raw(d);
	for (std::size_t j = 0; j < d; ++j)
		for (int k = 0; k <= max_order; ++k) raw[j].push_back(k == 0 ? 1.0 : raw_moment(components[j], k));

	const int bmax = max_order - 2;
	// E <xi,v>^a <xi,u>^b for a <= 2, b <= M-2, by binomial convolution over coordinates.
	auto mixed = [&](const std::vector<double>& u, const std::vector<double>& v) {
		std::vector<std::vector<double>> acc(3, std::vector<double>(std::size_t(bmax) + 1, 0.0));
		acc[0][0] = 1.0;
		for (std::size_t j = 0; j < d; ++j) {
			std::vector<std::vector<double>> t(3, std::vector<double>(std::size_t(bmax) + 1));
			for (int a = 0; a <= 2; ++a)
				for (int b = 0; b <= bmax; ++b) t[a][b] = std::pow(v[j], a) * std::pow(u[j], b) * raw[j][std::size_t(a + b)];
			std::vector<std::vector<double>> next(3, std::vector<double>(std::size_t(bmax) + 1, 0.0));
			for (int a = 0; a <= 2; ++a)
				for (int b = 0; b <= bmax; ++b)
					for (int a1 = 0; a1 <= a; ++a1) {
						const double ca = (a1 == 0 || a1 == a) ? 1.0 : 2.0;
						double cb = 1.0;
						for (int b1 = 0; b1 <= b; ++b1) {
							next[a][b] += ca * cb * acc[a1][b1] * t[a - a1][b - b1];
							cb = cb * double(b - b1) / double(b1 + 1);
						}
					}
			acc.swap(next);
		}
		return acc;
	};

	auto dirs = detail::axis_directions(d);
	std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
	for (const auto& u : dirs)
		for (const auto& v : dirs) pairs.emplace_back(u, v);
	for (int i = 0; i < n_directions; ++i)
		pairs.emplace_back(detail::halton_direction(std::uint64_t(i) + 1, 0, d), detail::halton_direction(std::uint64_t(i) + 1, unsigned(d), d));

	ClassCertificate c{"B", tau, max_order, {}, true, {}, {}};
	for (const auto& [u, v] : pairs) {
		const auto mm = mixed(u, v);
		const double second = mm[2][0];
		const double un = detail::norm(u);
		for (int m = 3; m <= max_order; ++m) {
			const double bound = 0.5 * detail::factorial(m) * std::pow(tau * un, m - 2) * second;
			const double slack = bound - std::abs(mm[2][std::size_t(m - 2)]);
			if (slack < kExactSlackTol) c.pass = false;
			c.probe_report.push_back({"u=" + detail::vec_str(u) + " v=" + detail::vec_str(v) + " m=" + std::to_string(m), slack});
		}
	}
	// Relation a): membership forces sigma^2(F) <= 12 tau^2. Reported, not enforced.
	double sigma2 = 0.0;
	for (std::size_t j = 0; j < d; ++j) sigma2 = std::max(sigma2, raw[j][2]);
	c.extra["sigma2_max"] = sigma2;
	c.extra["sigma2_over_12tau2"] = tau > 0.0 ? sigma2 / (12.0 * tau * tau) : std::numeric_limits<double>::infinity();
	return c;
}

/// A_d(tau) probed on real z: |d_u d_v^2 phi(z)| <= |u| tau <Dv, v> via central
/// differences, for the product law of `components`.
inline ClassCertificate a_class_check_numeric(const std::vector<GridDist>& components, double tau, int probe_count) {
	const std::size_t d = components.size();
	if (d == 0 || d > 4) fail(ErrorCode::InvalidArgument, "numeric A check supports 1..4 coordinates");
	if (!(tau > 0.0)) fail(ErrorCode::OutOfDomain, "numeric A check needs tau > 0");
	std::vector<double> var(d);
	double trace = 0.0;
	for (std::size_t j = 0; j < d; ++j) {
		var[j] = variance(components[j]);
		trace += var[j];
	}
	if (!(trace > 0.0)) fail(ErrorCode::DegenerateVariance, "covariance is zero");

	const double h = std::min(1e-3, 0.04 / tau);
	auto phi = [&](const std::vector<double>& z) {
		double s = 0.0;
		for (std::size_t j = 0; j < d; ++j) s += log_mgf(components[j], z[j], tau);
		return s;
	};
	auto third = [&](const std::vector<double>& z, const std::vector<double>& u, const std::vector<double>& v) {
		auto at = [&](double s, double t) {
			std::vector<double> p(d);
			for (std::size_t j = 0; j < d; ++j) p[j] = z[j] + s * u[j] + t * v[j];
			return phi(p);
		};
		const double plus = at(h, h) - 2.0 * at(h, 0.0) + at(h, -h);
		const double minus = at(-h, h) - 2.0 * at(-h, 0.0) + at(-h, -h);
		return (plus - minus) / (2.0 * h * h * h);
	};

	struct Triple {
		std::vector<double> z, u, v;
	};
	std::vector<Triple> triples;
	const double zmax = 0.9 / tau;
	for (std::size_t j = 0; j < d; ++j)
		for (double f : {0.0, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75, 1.0, -1.0}) {
			std::vector<double> e(d, 0.0), z(d, 0.0);
			e[j] = 1.0;
			z[j] = f * zmax;
			triples.push_back({z, e, e});
		}
	for (int i = 0; i < probe_count; ++i) {
		const auto idx = std::uint64_t(i) + 1;
		auto z = detail::halton_direction(idx, 0, d);
		const double r = zmax * std::pow(halton(idx, unsigned(3 * d)), 1.0 / double(d));
		for (double& x : z) x *= r;
		triples.push_back({z, detail::halton_direction(idx, unsigned(d), d), detail::halton_direction(idx, unsigned(2 * d), d)});
	}

	ClassCertificate c{"A_numeric", tau, 3, {}, true, {"real-probes-only"}, {}};
	for (const auto& t : triples) {
		double dvv = 0.0;
		for (std::size_t j = 0; j < d; ++j) dvv += var[j] * t.v[j] * t.v[j];
		const double bound = detail::norm(t.u) * tau * dvv;
		const double slack = bound - std::abs(third(t.z, t.u, t.v));
		if (slack < kNumericSlackTol) c.pass = false;
		c.probe_report.push_back({"z=" + detail::vec_str(t.z) + " u=" + detail::vec_str(t.u) + " v=" + detail::vec_str(t.v), slack});
	}
	c.extra["fd_step"] = h;
	return c;
}

} // namespace strong_approx

#endif
