#ifndef STRONG_APPROX_TRANSPORT_HPP
#define STRONG_APPROX_TRANSPORT_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <tuple>
#include <vector>

#include "strong_approx/class_gauge.hpp"
#include "strong_approx/grid_dist.hpp"
#include "strong_approx/rng.hpp"

namespace strong_approx {

/// Flow computations work on integer grains: masses scaled by 2^32.
inline constexpr std::uint64_t kGrains = std::uint64_t(1) << 32;

namespace detail {

/// Dinic max-flow on integer capacities.
class MaxFlow {
public:
	explicit MaxFlow(std::size_t nodes) : adj_(nodes), level_(nodes), it_(nodes) {}

	std::size_t add_edge(std::size_t from, std::size_t to, std::uint64_t cap) {
		adj_[from].push_back(edges_.size());
		edges_.push_back({to, cap});
		adj_[to].push_back(edges_.size());
		edges_.push_back({from, 0});
		return edges_.size() - 2;
	}

	std::uint64_t run(std::size_t s, std::size_t t) {
		std::uint64_t total = 0;
		while (bfs(s, t)) {
			std::fill(it_.begin(), it_.end(), 0);
			while (std::uint64_t f = dfs(s, t, std::numeric_limits<std::uint64_t>::max())) total += f;
		}
		return total;
	}

	/// Flow pushed through the edge returned by add_edge.
	std::uint64_t flow(std::size_t edge) const { return edges_[edge ^ 1].cap; }

private:
	struct Edge {
		std::size_t to;
		std::uint64_t cap;
	};

	bool bfs(std::size_t s, std::size_t t) {
		std::fill(level_.begin(), level_.end(), -1);
		std::queue<std::size_t> q;
		level_[s] = 0;
		q.push(s);
		while (!q.empty()) {
			const std::size_t v = q.front();
			q.pop();
			for (std::size_t id : adj_[v]) {
				const auto& e = edges_[id];
				if (e.cap > 0 && level_[e.to] < 0) {
					level_[e.to] = level_[v] + 1;
					q.push(e.to);
				}
			}
		}
		return level_[t] >= 0;
	}

	std::uint64_t dfs(std::size_t v, std::size_t t, std::uint64_t pushed) {
		if (v == t) return pushed;
		for (std::size_t& i = it_[v]; i < adj_[v].size(); ++i) {
			const std::size_t id = adj_[v][i];
			auto& e = edges_[id];
			if (e.cap == 0 || level_[e.to] != level_[v] + 1) continue;
			if (std::uint64_t f = dfs(e.to, t, std::min(pushed, e.cap))) {
				e.cap -= f;
				edges_[id ^ 1].cap += f;
				return f;
			}
		}
		return 0;
	}

	std::vector<std::vector<std::size_t>> adj_;
	std::vector<Edge> edges_;
	std::vector<int> level_;
	std::vector<std::size_t> it_;
};

inline bool within(double x, double y, double lambda) {
	return std::abs(x - y) <= lambda + 1e-12 * std::max({1.0, std::abs(x), std::abs(y)});
}

} // namespace detail

/// Positive-mass atoms of a law with masses in grains (largest-remainder
/// rounding, exact total 2^32).
struct GrainAtoms {
	std::vector<double> x;
	std::vector<std::uint64_t> grains;
};

inline GrainAtoms to_grains(const GridDist& f) {
	GrainAtoms a;
	std::vector<double> frac;
	std::uint64_t used = 0;
	for (std::size_t i = 0; i < f.size(); ++i) {
		if (f.mass(i) <= 0.0) continue;
		const double scaled = f.mass(i) * double(kGrains);
		const double fl = std::floor(scaled);
		a.x.push_back(f.point(i));
		a.grains.push_back(std::uint64_t(fl));
		frac.push_back(scaled - fl);
		used += std::uint64_t(fl);
	}
	std::vector<std::size_t> order(frac.size());
	std::iota(order.begin(), order.end(), 0);
	std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return frac[l] > frac[r]; });
	for (std::size_t k = 0; used < kGrains && k < order.size(); ++k, ++used) ++a.grains[order[k]];
	if (used != kGrains) {
		// Residual beyond one grain per atom goes to the largest atom.
		const auto big = std::size_t(std::max_element(a.grains.begin(), a.grains.end()) - a.grains.begin());
		if (used < kGrains)
			a.grains[big] += kGrains - used;
		else
			a.grains[big] -= used - kGrains;
	}
	return a;
}

struct JointAtom {
	double x = 0.0, y = 0.0;
	std::uint64_t grains = 0;
	double mass() const { return double(grains) / double(kGrains); }
};

/// Finite-support coupling with its two reference marginals.
struct JointDist {
	std::vector<JointAtom> atoms;
	GridDist left;
	GridDist right;
};

struct MaximalCoupling {
	JointDist joint;
	std::uint64_t fail_grains = 0; ///< grains with |x - y| > lambda
	double p_fail = 0.0;
};

enum class FlowMethod { Auto, Dinic, Interval };

namespace detail {

/// Matched grains per (F atom, G atom) for the within-lambda bipartite graph.
struct Matching {
	std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> out; ///< per F atom: (G atom, grains)
	std::uint64_t total = 0;
};

inline Matching match_dinic(const GrainAtoms& a, const GrainAtoms& b, double lambda) {
	const std::size_t na = a.x.size(), nb = b.x.size();
	const std::size_t s = na + nb, t = s + 1;
	MaxFlow mf(na + nb + 2);
	for (std::size_t i = 0; i < na; ++i) mf.add_edge(s, i, a.grains[i]);
	for (std::size_t j = 0; j < nb; ++j) mf.add_edge(na + j, t, b.grains[j]);
	std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> mid;
	for (std::size_t i = 0; i < na; ++i)
		for (std::size_t j = 0; j < nb; ++j)
			if (within(a.x[i], b.x[j], lambda)) mid.emplace_back(i, j, mf.add_edge(i, na + j, kGrains));
	Matching m;
	m.total = mf.run(s, t);
	m.out.resize(na);
	for (const auto& [i, j, e] : mid)
		if (std::uint64_t f = mf.flow(e)) m.out[i].emplace_back(j, f);
	return m;
}

/// Two-pointer greedy for sorted one-dimensional atoms: each F atom fills the
/// leftmost G atoms still available inside [x - lambda, x + lambda]. The
/// neighbourhoods are intervals with monotone ends, where this is maximum.
inline Matching match_interval(const GrainAtoms& a, const GrainAtoms& b, double lambda) {
	Matching m;
	m.out.resize(a.x.size());
	std::vector<std::uint64_t> left(b.grains);
	std::size_t start = 0;
	for (std::size_t i = 0; i < a.x.size(); ++i) {
		std::uint64_t need = a.grains[i];
		while (start < b.x.size() && (left[start] == 0 || (b.x[start] < a.x[i] && !within(a.x[i], b.x[start], lambda)))) ++start;
		for (std::size_t j = start; need > 0 && j < b.x.size() && (b.x[j] <= a.x[i] || within(a.x[i], b.x[j], lambda)); ++j) {
			if (left[j] == 0) continue;
			const std::uint64_t f = std::min(need, left[j]);
			left[j] -= f;
			need -= f;
			m.total += f;
			m.out[i].emplace_back(j, f);
		}
	}
	return m;
}

} // namespace detail

/// Coupling of f and g minimizing P(|x - y| > lambda), exact in grains.
/// Unmatched mass is paired greedily by index.
inline MaximalCoupling maximal_coupling(const GridDist& f, const GridDist& g, double lambda, FlowMethod method = FlowMethod::Auto) {
	if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be nonnegative");
	const auto a = to_grains(f);
	const auto b = to_grains(g);
	if (method == FlowMethod::Auto) method = double(a.x.size()) * double(b.x.size()) <= 2.5e5 ? FlowMethod::Dinic : FlowMethod::Interval;
	const auto m = method == FlowMethod::Dinic ? detail::match_dinic(a, b, lambda) : detail::match_interval(a, b, lambda);

	MaximalCoupling out{JointDist{{}, f, g}, kGrains - m.total, 0.0};
	std::vector<std::uint64_t> ra(a.grains), rb(b.grains);
	for (std::size_t i = 0; i < m.out.size(); ++i)
		for (const auto& [j, fl] : m.out[i]) {
			out.joint.atoms.push_back({a.x[i], b.x[j], fl});
			ra[i] -= fl;
			rb[j] -= fl;
		}
	std::size_t j = 0;
	for (std::size_t i = 0; i < ra.size(); ++i)
		while (ra[i] > 0) {
			while (rb[j] == 0) ++j;
			const std::uint64_t fl = std::min(ra[i], rb[j]);
			out.joint.atoms.push_back({a.x[i], b.x[j], fl});
			ra[i] -= fl;
			rb[j] -= fl;
		}
	out.p_fail = double(out.fail_grains) / double(kGrains);
	return out;
}

/// Exact pi(F, G, lambda) in grains via the maximal coupling (Strassen duality).
inline std::uint64_t prokhorov_eps_grains(const GridDist& f, const GridDist& g, double lambda, FlowMethod method = FlowMethod::Auto) {
	return maximal_coupling(f, g, lambda, method).fail_grains;
}

inline double prokhorov_eps(const GridDist& f, const GridDist& g, double lambda) {
	return double(prokhorov_eps_grains(f, g, lambda)) / double(kGrains);
}

/// sup over subsets X of the union support of max{F(X) - G(X^lambda), G(X) - F(X^lambda)},
/// enumerated directly, in grains. X^lambda is the closed lambda-neighbourhood,
/// matching the closeness criterion of the flow.
inline std::uint64_t prokhorov_eps_bruteforce_grains(const GridDist& f, const GridDist& g, double lambda) {
	const auto a = to_grains(f);
	const auto b = to_grains(g);
	std::vector<double> pts(a.x);
	pts.insert(pts.end(), b.x.begin(), b.x.end());
	std::sort(pts.begin(), pts.end());
	std::vector<double> u;
	for (double x : pts)
		if (u.empty() || std::abs(x - u.back()) > 1e-12 * std::max(1.0, std::abs(x))) u.push_back(x);
	if (u.size() > 20) fail(ErrorCode::SupportTooLargeForBruteForce, "union support exceeds 20 points");
	const std::size_t k = u.size();
	auto locate = [&](double x) {
		std::size_t best = 0;
		for (std::size_t i = 1; i < k; ++i)
			if (std::abs(u[i] - x) < std::abs(u[best] - x)) best = i;
		return best;
	};
	std::vector<std::uint64_t> fa(k, 0), gb(k, 0);
	for (std::size_t i = 0; i < a.x.size(); ++i) fa[locate(a.x[i])] += a.grains[i];
	for (std::size_t j = 0; j < b.x.size(); ++j) gb[locate(b.x[j])] += b.grains[j];
	std::vector<std::uint32_t> nbr(k, 0);
	for (std::size_t i = 0; i < k; ++i)
		for (std::size_t j = 0; j < k; ++j)
			if (detail::within(u[i], u[j], lambda)) nbr[i] |= std::uint32_t(1) << j;

	const std::size_t subsets = std::size_t(1) << k;
	std::vector<std::uint64_t> fs(subsets, 0), gs(subsets, 0);
	std::vector<std::uint32_t> hood(subsets, 0);
	std::int64_t best = 0;
	for (std::size_t mask = 1; mask < subsets; ++mask) {
		const auto low = std::size_t(std::countr_zero(mask));
		const std::size_t rest = mask & (mask - 1);
		fs[mask] = fs[rest] + fa[low];
		gs[mask] = gs[rest] + gb[low];
		hood[mask] = hood[rest] | nbr[low];
	}
	for (std::size_t mask = 1; mask < subsets; ++mask) {
		best = std::max(best, std::int64_t(fs[mask]) - std::int64_t(gs[hood[mask]]));
		best = std::max(best, std::int64_t(gs[mask]) - std::int64_t(fs[hood[mask]]));
	}
	return std::uint64_t(best);
}

/// inf{lambda : pi(F, G, lambda) <= lambda}, by bisection to tolerance tol.
inline double prokhorov_distance(const GridDist& f, const GridDist& g, double tol = 1e-9) {
	if (!(tol >= 1e-9)) fail(ErrorCode::InvalidArgument, "tolerance must be at least 1e-9");
	auto ok = [&](double lambda) { return prokhorov_eps(f, g, lambda) <= lambda; };
	if (ok(0.0)) return 0.0;
	double lo = 0.0, hi = 1.0;
	while (hi - lo > tol) {
		const double mid = 0.5 * (lo + hi);
		if (ok(mid))
			hi = mid;
		else
			lo = mid;
	}
	return hi;
}

/// Grid discretization of the Gaussian law with the mean and variance of f.
inline GridDist gaussian_surrogate(const GridDist& f, std::size_t cells = 4096, double span = 8.0) {
	const double v = variance(f);
	if (!(v > 0.0)) fail(ErrorCode::DegenerateVariance, "Gaussian surrogate needs positive variance");
	return gauss_grid(std::sqrt(v), cells, span, mean(f));
}

/// Free constants of the bound shapes; they are reported, never asserted.
struct BoundParams {
	double c = 1.0;
	int d = 1;
	double tau = 1.0;
	double alpha = 1.0;
};

struct PiBoundReport {
	double pi = 0.0;                                    ///< pi(F, Phi(F))
	std::vector<std::pair<double, double>> lambda_curve; ///< (lambda, pi(F, Phi(F), lambda))
	double c0_hat = 0.0; ///< smallest c with pi <= c d^2 tau log*(1/tau)
	double c_hat = 0.0;  ///< smallest c with pi(.,.,lambda) <= c d^2 exp(-lambda/(c d^2 tau)) on the curve
	bool curve_monotone = true;
	std::vector<double> bound_at_c; ///< the (pi) shape at params.c along the curve
};

/// Smallest c > 0 with value <= c * k * exp(-lambda / (c * k * tau)).
inline double smallest_exp_constant(double value, double lambda, double k, double tau) {
	if (value <= 0.0) return 0.0;
	auto holds = [&](double c) { return value <= c * k * std::exp(-lambda / (c * k * tau)); };
	double hi = 1.0;
	while (!holds(hi)) hi *= 2.0;
	double lo = 0.0;
	for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
		const double mid = 0.5 * (lo + hi);
		if (holds(mid))
			hi = mid;
		else
			lo = mid;
	}
	return hi;
}

/// Empirical calibration of the Gaussian-stability bounds for one law.
inline PiBoundReport check_pi_bounds(const GridDist& f, double tau, const BoundParams& params = {}, std::size_t cells = 4096,
                                     double span = 8.0, std::size_t curve_points = 48) {
	if (!(tau > 0.0)) fail(ErrorCode::NonPositive, "tau must be positive");
	const auto phi = gaussian_surrogate(f, cells, span);
	PiBoundReport r;
	r.pi = prokhorov_distance(f, phi, 1e-9);
	const double d2 = double(params.d) * double(params.d);
	r.c0_hat = r.pi / (d2 * tau * log_star(1.0 / tau));
	const double top = 4.0 * std::sqrt(variance(f));
	double prev = std::numeric_limits<double>::infinity();
	for (std::size_t k = 1; k <= curve_points; ++k) {
		const double lambda = top * double(k) / double(curve_points);
		const double eps = prokhorov_eps(f, phi, lambda);
		r.lambda_curve.emplace_back(lambda, eps);
		if (eps > prev) r.curve_monotone = false;
		prev = eps;
		r.c_hat = std::max(r.c_hat, smallest_exp_constant(eps, lambda, d2, tau));
		r.bound_at_c.push_back(params.c * d2 * std::exp(-lambda / (params.c * d2 * tau)));
	}
	return r;
}

/// F_i = (1 - p) U + p V with U centered and supported in [-tau, tau].
struct MixtureSpec {
	double p = 0.0;
	GridDist u = GridDist::point_mass(0.0);
	GridDist v = GridDist::point_mass(0.0);
	double tau = 1.0;

	GridDist law() const { return mix(u, v, p); }
};

inline void validate(const MixtureSpec& m) {
	if (!(m.p >= 0.0 && m.p <= 1.0)) fail(ErrorCode::InvalidArgument, "mixture weight outside [0, 1]");
	if (!(m.tau > 0.0)) fail(ErrorCode::NonPositive, "tau must be positive");
	const double scale = std::max({1.0, std::abs(m.u.front()), std::abs(m.u.back())});
	if (std::abs(mean(m.u)) > 1e-10 * scale) fail(ErrorCode::NotCentered, "U component must have mean 0");
	if (std::max(std::abs(m.u.front()), std::abs(m.u.back())) > m.tau * (1.0 + 1e-12))
		fail(ErrorCode::InvalidArgument, "U component must be supported in [-tau, tau]");
}

struct Theorem4Report {
	std::size_t n = 0;
	double lambda = 0.0;
	double tau = 0.0;
	std::size_t trials = 0;
	std::vector<double> factor_p_fail; ///< per-factor maximal coupling at slack lambda/n
	double estimate = 0.0;             ///< Monte Carlo P(|xi - eta| > lambda)
	double std_error = 0.0;
	std::optional<double> exact;       ///< exact failure probability of the sampled construction
	double union_bound = 0.0;          ///< sum of factor failure probabilities
	double product_prediction = 0.0;   ///< 1 - prod(1 - p_fail_i)
	double max_p = 0.0;
	double sum_p2 = 0.0;
	bool identical_v = false;          ///< the sum p_i^2 term may be dropped
	double c_hat = 0.0;                ///< smallest c making the bound shape hold for the estimate
};

/// Couples prod F_i with prod e(F_i) through per-factor maximal couplings at
/// slack lambda/n and measures P(|xi - eta| > lambda).
inline Theorem4Report theorem4_coupling(const std::vector<MixtureSpec>& mixtures, double lambda, std::size_t trials, std::uint64_t seed) {
	if (mixtures.empty() || mixtures.size() > 64) fail(ErrorCode::InvalidArgument, "need 1..64 mixture factors");
	if (!(lambda > 0.0)) fail(ErrorCode::NonPositive, "lambda must be positive");
	for (const auto& m : mixtures) validate(m);

	Theorem4Report r;
	r.n = mixtures.size();
	r.lambda = lambda;
	r.trials = trials;
	r.identical_v = true;
	const double slack = lambda / double(r.n);
	std::vector<MaximalCoupling> couplings;
	for (const auto& m : mixtures) {
		const auto f = m.law();
		couplings.push_back(maximal_coupling(f, compound_poisson(f, 1e-12), slack));
		r.factor_p_fail.push_back(couplings.back().p_fail);
		r.tau = std::max(r.tau, m.tau);
		r.max_p = std::max(r.max_p, m.p);
		r.sum_p2 += m.p * m.p;
		const auto& v0 = mixtures.front().v;
		if (m.v.origin() != v0.origin() || m.v.step() != v0.step() || !std::equal(m.v.probs().begin(), m.v.probs().end(), v0.probs().begin(), v0.probs().end()))
			r.identical_v = false;
	}
	double keep = 1.0;
	for (double p : r.factor_p_fail) {
		r.union_bound += p;
		keep *= 1.0 - p;
	}
	r.product_prediction = 1.0 - keep;

	// Exact failure probability: |sum of per-factor differences| > lambda.
	try {
		std::optional<GridDist> diff;
		for (const auto& c : couplings) {
			std::vector<std::pair<double, double>> pts;
			for (const auto& at : c.joint.atoms) pts.emplace_back(at.x - at.y, at.mass());
			const auto d = make_grid(pts);
			diff = diff ? convolve(*diff, d) : d;
		}
		double p = 0.0;
		for (std::size_t i = 0; i < diff->size(); ++i)
			if (!detail::within(diff->point(i), 0.0, lambda)) p += diff->mass(i);
		r.exact = p;
	} catch (const Error&) {
		r.exact.reset();
	}

	std::vector<std::vector<double>> cum(couplings.size());
	for (std::size_t i = 0; i < couplings.size(); ++i) {
		double run = 0.0;
		for (const auto& at : couplings[i].joint.atoms) cum[i].push_back(run += at.mass());
	}
	std::size_t failures = 0;
	for (std::size_t t = 0; t < trials; ++t) {
		Stream rng(derive_seed(seed, 0, t));
		double sx = 0.0, sy = 0.0;
		for (std::size_t i = 0; i < couplings.size(); ++i) {
			const double u = rng.uniform() * cum[i].back();
			auto it = std::lower_bound(cum[i].begin(), cum[i].end(), u);
			if (it == cum[i].end()) --it;
			const auto& at = couplings[i].joint.atoms[std::size_t(it - cum[i].begin())];
			sx += at.x;
			sy += at.y;
		}
		failures += !detail::within(sx, sy, lambda);
	}
	if (trials > 0) {
		r.estimate = double(failures) / double(trials);
		r.std_error = std::sqrt(r.estimate * (1.0 - r.estimate) / double(trials));
	}

	const double extra = r.identical_v ? 0.0 : r.sum_p2;
	if (r.estimate > extra) {
		auto holds = [&](double c) { return r.estimate <= c * (r.max_p + std::exp(-lambda / (c * r.tau))) + extra; };
		double hi = 1.0;
		while (!holds(hi)) hi *= 2.0;
		double lo = 0.0;
		for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
			const double mid = 0.5 * (lo + hi);
			if (holds(mid))
				hi = mid;
			else
				lo = mid;
		}
		r.c_hat = hi;
	}
	return r;
}

} // namespace strong_approx

#endif
