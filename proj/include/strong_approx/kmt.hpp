#ifndef STRONG_APPROX_KMT_HPP
#define STRONG_APPROX_KMT_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "strong_approx/grid_dist.hpp"
#include "strong_approx/rng.hpp"
#include "strong_approx/special.hpp"

namespace strong_approx {

/// One realized pair of sequences and the maximal prefix-sum deviation.
struct CouplingPath {
	std::vector<double> x, y;
	std::vector<double> prefix_x, prefix_y;
	double delta = 0.0;
	std::size_t rejected = 0; ///< resampled trials (ZeroMassCondition)
};

/// max_k |prefix_x[k] - prefix_y[k]|
inline double path_delta(const std::vector<double>& px, const std::vector<double>& py) {
	double d = 0.0;
	for (std::size_t k = 0; k < px.size(); ++k) d = std::max(d, std::abs(px[k] - py[k]));
	return d;
}

inline CouplingPath make_path(std::vector<double> x, std::vector<double> y) {
	if (x.size() != y.size()) fail(ErrorCode::LengthMismatch, "X and Y lengths differ");
	CouplingPath p;
	p.prefix_x.resize(x.size());
	p.prefix_y.resize(y.size());
	double sx = 0.0, sy = 0.0;
	for (std::size_t k = 0; k < x.size(); ++k) {
		sx += x[k];
		sy += y[k];
		p.prefix_x[k] = sx;
		p.prefix_y[k] = sy;
	}
	p.delta = path_delta(p.prefix_x, p.prefix_y);
	p.x = std::move(x);
	p.y = std::move(y);
	return p;
}

namespace detail {

inline void require_centered_leaf(const GridDist& f) {
	const double scale = std::max({1.0, std::abs(f.front()), std::abs(f.back())});
	if (std::abs(mean(f)) > 1e-10 * scale) fail(ErrorCode::NotCentered, "leaf law must have mean 0");
}

/// Quantile transform onto an atom list with (unnormalized) masses w.
/// The Gaussian percentile arrives as g (p = Phi(g)); with no g the Gaussian
/// side is degenerate and u itself is the percentile. Otherwise p is
/// uniformized inside the atom it lands in by u before inversion. Lower
/// percentiles are located from the left, upper ones from the right, so tail
/// atoms keep full precision.
class AtomCoupler {
public:
	std::size_t pick(std::span<const double> w, std::optional<double> g, double u) {
		const std::size_t n = w.size();
		if (!g || *g <= 0.0) {
			cum_.resize(n);
			double run = 0.0;
			for (std::size_t i = 0; i < n; ++i) cum_[i] = run += w[i];
			const double z = run;
			if (!g) return positive(w, lower(u * z));
			const std::size_t j = positive(w, lower(normal_cdf(*g) * z));
			const double a = j ? cum_[j - 1] : 0.0;
			return positive(w, lower(std::min(cum_[j], a + u * (cum_[j] - a))));
		}
		suf_.resize(n + 1);
		suf_[n] = 0.0;
		for (std::size_t i = n; i-- > 0;) suf_[i] = suf_[i + 1] + w[i];
		const std::size_t j = positive(w, upper(normal_cdf(-*g) * suf_[0]));
		return positive(w, upper(std::min(suf_[j], suf_[j + 1] + (1.0 - u) * w[j])));
	}

private:
	// smallest j with cum_[j] >= t
	std::size_t lower(double t) const {
		auto it = std::lower_bound(cum_.begin(), cum_.end(), t);
		if (it == cum_.end()) --it;
		return std::size_t(it - cum_.begin());
	}
	// smallest j with suf_[j + 1] <= q
	std::size_t upper(double q) const {
		std::size_t lo = 0, hi = suf_.size() - 2;
		while (lo < hi) {
			const std::size_t mid = (lo + hi) / 2;
			if (suf_[mid + 1] <= q)
				hi = mid;
			else
				lo = mid + 1;
		}
		return lo;
	}
	// nearest atom with positive mass (forward first)
	static std::size_t positive(std::span<const double> w, std::size_t j) {
		if (w[j] > 0.0) return j;
		for (std::size_t k = j + 1; k < w.size(); ++k)
			if (w[k] > 0.0) return k;
		while (j > 0 && w[j] == 0.0) --j;
		return j;
	}

	std::vector<double> cum_, suf_;
};

} // namespace detail

/// Leaf laws together with their standard deviations.
class LeafSet {
public:
	explicit LeafSet(std::vector<GridDist> laws) : laws_(std::move(laws)) {
		if (laws_.empty()) fail(ErrorCode::InvalidArgument, "no leaf laws");
		for (const auto& f : laws_) sigma_.push_back(std::sqrt(variance(f)));
	}
	std::size_t size() const { return laws_.size(); }
	const GridDist& law(std::size_t i) const { return laws_[i]; }
	const std::vector<GridDist>& laws() const { return laws_; }
	double sigma(std::size_t i) const { return sigma_[i]; }

private:
	std::vector<GridDist> laws_;
	std::vector<double> sigma_;
};

/// Pads `laws` with point masses at 0 up to the next power of two.
inline std::vector<GridDist> pad_to_power_of_two(std::vector<GridDist> laws) {
	const std::size_t n = std::bit_ceil(std::max<std::size_t>(1, laws.size()));
	while (laws.size() < n) laws.push_back(GridDist::point_mass(0.0));
	return laws;
}

/// Dyadic block-sum laws of n = 2^N centered leaves, heap-indexed: node 1 is
/// the root, node k has children 2k and 2k+1, leaves are nodes n..2n-1.
class SumTree {
public:
	explicit SumTree(std::vector<GridDist> leaf_laws) {
		n_ = leaf_laws.size();
		if (n_ == 0 || !std::has_single_bit(n_)) fail(ErrorCode::NotPowerOfTwo, "leaf count must be a power of two");
		depth_ = std::bit_width(n_) - 1;
		for (const auto& f : leaf_laws) detail::require_centered_leaf(f);

		std::vector<double> steps;
		for (const auto& f : leaf_laws)
			if (!f.is_point_mass()) steps.push_back(f.step());
		step_ = steps.empty() ? 1.0 : detail::lattice_step(steps);
		if (step_ == 0.0) fail(ErrorCode::NonCommensurableSupport, "leaf lattices are not commensurable");

		laws_.assign(2 * n_, GridDist::point_mass(0.0));
		anchor_.assign(2 * n_, 0.0);
		lo_.assign(2 * n_, 0);
		var_.assign(2 * n_, 0.0);
		for (std::size_t i = 0; i < n_; ++i) {
			const auto& f = leaf_laws[i];
			const std::size_t node = n_ + i;
			laws_[node] = f.is_point_mass() ? GridDist(f.origin(), step_, {1.0}) : regrid(f, step_);
			anchor_[node] = laws_[node].origin();
			var_[node] = variance(f);
		}
		for (std::size_t node = n_ - 1; node >= 1; --node) {
			laws_[node] = convolve(laws_[2 * node], laws_[2 * node + 1]);
			anchor_[node] = anchor_[2 * node] + anchor_[2 * node + 1];
			lo_[node] = std::llround((laws_[node].origin() - anchor_[node]) / step_);
			var_[node] = var_[2 * node] + var_[2 * node + 1];
		}
	}

	std::size_t leaves() const { return n_; }
	int depth() const { return depth_; }
	double step() const { return step_; }
	const GridDist& block_law(std::size_t node) const { return laws_.at(node); }
	double block_variance(std::size_t node) const { return var_.at(node); }
	const GridDist& root() const { return laws_[1]; }
	double root_variance() const { return var_[1]; }
	/// Value of lattice index k (absolute, relative to the block anchor).
	double value(std::size_t node, long long k) const { return anchor_[node] + double(k) * step_; }
	long long lo(std::size_t node) const { return lo_[node]; }
	long long hi(std::size_t node) const { return lo_[node] + (long long)laws_[node].size() - 1; }
	double mass(std::size_t node, long long k) const {
		const long long i = k - lo_[node];
		return (i < 0 || i >= (long long)laws_[node].size()) ? 0.0 : laws_[node].mass(std::size_t(i));
	}

private:
	std::size_t n_ = 0;
	int depth_ = 0;
	double step_ = 1.0;
	std::vector<GridDist> laws_;
	std::vector<double> anchor_;
	std::vector<long long> lo_;
	std::vector<double> var_;
};

inline SumTree build_tree(std::vector<GridDist> leaf_laws) { return SumTree(std::move(leaf_laws)); }

/// Quantile coupling of one law with N(0, sigma2): y = sigma g, x = F^{-1}(Phi(g))
/// with the percentile uniformized inside its atom by u.
inline std::pair<double, double> quantile_couple_scalar(const GridDist& f, double sigma2, double g, double u) {
	const double v = variance(f);
	if (std::abs(sigma2 - v) > 1e-9 * std::max(1.0, v)) fail(ErrorCode::VarianceMismatch, "Gaussian variance differs from the law's variance");
	detail::AtomCoupler coupler;
	const std::size_t j = coupler.pick(f.probs(), sigma2 > 0.0 ? std::optional<double>(g) : std::nullopt, u);
	return {f.point(j), std::sqrt(sigma2) * g};
}

/// Optional per-trial trace of realized block-sum lattice indices (heap-indexed).
struct KmtTrace {
	std::vector<long long> block_index;
};

namespace detail {

inline CouplingPath sample_kmt_once(const SumTree& t, Stream& rng, AtomCoupler& coupler, std::vector<double>& w, KmtTrace* trace) {
	const std::size_t n = t.leaves();
	std::vector<double> y(n);
	for (std::size_t i = 0; i < n; ++i) y[i] = std::sqrt(t.block_variance(n + i)) * rng.normal();

	std::vector<double> gsum(2 * n, 0.0);
	for (std::size_t i = 0; i < n; ++i) gsum[n + i] = y[i];
	for (std::size_t node = n - 1; node >= 1; --node) gsum[node] = gsum[2 * node] + gsum[2 * node + 1];

	std::vector<long long> idx(2 * n, 0);
	const std::size_t root = 1;
	{
		const auto& law = t.block_law(root);
		const double var = t.block_variance(root);
		const double u = rng.uniform();
		std::optional<double> g;
		if (var > 0.0) g = gsum[root] / std::sqrt(var);
		idx[root] = t.lo(root) + (long long)coupler.pick(law.probs(), g, u);
	}
	for (std::size_t node = 1; node < n; ++node) {
		const std::size_t l = 2 * node, r = 2 * node + 1;
		const long long k = idx[node];
		const long long jlo = std::max(t.lo(l), k - t.hi(r));
		const long long jhi = std::min(t.hi(l), k - t.lo(r));
		const double u = rng.uniform();
		double z = 0.0;
		w.clear();
		for (long long j = jlo; j <= jhi; ++j) {
			w.push_back(t.mass(l, j) * t.mass(r, k - j));
			z += w.back();
		}
		if (w.empty() || z < kConditionFloor) fail(ErrorCode::ZeroMassCondition, "block sum with mass below 1e-14");

		// T_L | T_B ~ N(vL/vB * T_B, vL vR / vB)
		const double vl = t.block_variance(l), vr = t.block_variance(r), vb = t.block_variance(node);
		std::optional<double> g;
		if (vl > 0.0 && vr > 0.0) {
			const double m = vl / vb * gsum[node];
			g = (gsum[l] - m) / std::sqrt(vl * vr / vb);
		}
		idx[l] = jlo + (long long)coupler.pick(w, g, u);
		idx[r] = k - idx[l];
	}
	std::vector<double> x(n);
	for (std::size_t i = 0; i < n; ++i) x[i] = t.value(n + i, idx[n + i]);
	if (trace) trace->block_index = idx;
	return make_path(std::move(x), std::move(y));
}

} // namespace detail

/// Dyadic conditional-quantile coupling. Trials hitting a sum point with
/// mass below 1e-14 are resampled from the same stream and counted.
inline CouplingPath sample_kmt(const SumTree& t, Stream& rng, KmtTrace* trace = nullptr) {
	detail::AtomCoupler coupler;
	std::vector<double> w;
	std::size_t rejected = 0;
	for (;;) {
		try {
			auto p = detail::sample_kmt_once(t, rng, coupler, w, trace);
			p.rejected = rejected;
			return p;
		} catch (const Error& e) {
			if (e.code() != ErrorCode::ZeroMassCondition || rejected >= 1000) throw;
			++rejected;
		}
	}
}

/// X and Y drawn independently.
inline CouplingPath sample_independent(const LeafSet& leaves, Stream& rng) {
	const std::size_t n = leaves.size();
	std::vector<double> x(n), y(n);
	for (std::size_t i = 0; i < n; ++i) y[i] = leaves.sigma(i) * rng.normal();
	for (std::size_t i = 0; i < n; ++i) x[i] = quantile(leaves.law(i), rng.uniform());
	return make_path(std::move(x), std::move(y));
}

/// Each (X_i, Y_i) quantile-coupled on its own.
inline CouplingPath sample_quantile_per_summand(const LeafSet& leaves, Stream& rng) {
	const std::size_t n = leaves.size();
	std::vector<double> g(n), x(n), y(n);
	for (std::size_t i = 0; i < n; ++i) g[i] = rng.normal();
	detail::AtomCoupler coupler;
	for (std::size_t i = 0; i < n; ++i) {
		const double u = rng.uniform();
		const auto& f = leaves.law(i);
		const double s = leaves.sigma(i);
		const std::size_t j = coupler.pick(f.probs(), s > 0.0 ? std::optional<double>(g[i]) : std::nullopt, u);
		x[i] = f.point(j);
		y[i] = s * g[i];
	}
	return make_path(std::move(x), std::move(y));
}

/// Skorokhod embedding of a centered two-point law {-a, b} into one simulated
/// Brownian path. X_i are the successive exit values of [S - a, S + b] around
/// the embedded partial sum S; Y_i are the path increments over deterministic
/// slices of length a*b (the mean exit time).
inline CouplingPath sample_skorokhod(const GridDist& leaf, std::size_t n, Stream& rng, double dt) {
	std::size_t atoms = 0;
	for (double p : leaf.probs()) atoms += p > 0.0;
	if (atoms != 2) fail(ErrorCode::UnsupportedLaw, "Skorokhod baseline needs a two-point law");
	detail::require_centered_leaf(leaf);
	const double a = -leaf.front(), b = leaf.back();
	if (!(a > 0.0 && b > 0.0)) fail(ErrorCode::UnsupportedLaw, "two-point law must straddle 0");
	const double slice = a * b;
	if (!(dt > 0.0) || dt > slice / 100.0) fail(ErrorCode::StepTooCoarse, "dt must not exceed a*b/100");
	const auto per_slice = std::size_t(std::ceil(slice / dt - 1e-9));
	const double sd = std::sqrt(slice / double(per_slice));

	std::vector<double> x, y;
	x.reserve(n);
	y.reserve(n);
	double w = 0.0, w_slice = 0.0, s = 0.0;
	const double h = slice / double(per_slice);
	for (std::size_t step = 1; x.size() < n || y.size() < n; ++step) {
		const double prev = w;
		w += sd * rng.normal();
		if (step % per_slice == 0 && y.size() < n) {
			y.push_back(w - w_slice);
			w_slice = w;
		}
		if (x.size() >= n) continue;
		// exit inside the step by a Brownian-bridge crossing, so exits are not
		// detected late and the exit times keep mean a*b
		int bridge = 0;
		if (w > s - a && w < s + b) {
			const double eu = (s + b - prev) * (s + b - w), ed = (prev - s + a) * (w - s + a);
			const double pu = eu < 20.0 * h ? std::exp(-2.0 * eu / h) : 0.0;
			const double pd = ed < 20.0 * h ? std::exp(-2.0 * ed / h) : 0.0;
			if (pu + pd > 0.0) {
				const double u = rng.uniform();
				if (u < pu)
					bridge = 1;
				else if (u < pu + pd)
					bridge = -1;
			}
		}
		if (bridge) {
			const double v = bridge > 0 ? b : -a;
			x.push_back(v);
			s += v;
		}
		while (x.size() < n && (w <= s - a || w >= s + b)) {
			const double v = w <= s - a ? -a : b;
			x.push_back(v);
			s += v;
		}
	}
	return make_path(std::move(x), std::move(y));
}

/// Euclidean-norm deviation of d coordinate paths run side by side.
inline double product_extend(const std::vector<CouplingPath>& paths) {
	if (paths.empty()) fail(ErrorCode::InvalidArgument, "no coordinate paths");
	const std::size_t n = paths[0].prefix_x.size();
	for (const auto& p : paths)
		if (p.prefix_x.size() != n || p.prefix_y.size() != n) fail(ErrorCode::LengthMismatch, "coordinate paths differ in length");
	double best = 0.0;
	for (std::size_t k = 0; k < n; ++k) {
		double s = 0.0;
		for (const auto& p : paths) {
			const double d = p.prefix_x[k] - p.prefix_y[k];
			s += d * d;
		}
		best = std::max(best, s);
	}
	return std::sqrt(best);
}

struct BlockPartitionReport {
	std::vector<std::size_t> partition;
	std::vector<double> block_variances;
	double c4_hat = 0.0;
	double c5_hat = 0.0;
	std::optional<bool> window_ok; ///< set when a [c4, c5] window was supplied
};

/// Variances of the block sums over m_{k-1}+1..m_k and their extremes.
inline BlockPartitionReport block_partition_check(const std::vector<GridDist>& leaf_laws, const std::vector<std::size_t>& partition,
                                                  std::optional<std::pair<double, double>> window = std::nullopt) {
	if (partition.size() < 2 || partition.front() != 0 || partition.back() != leaf_laws.size())
		fail(ErrorCode::BadPartition, "partition must run from 0 to n");
	for (std::size_t k = 1; k < partition.size(); ++k)
		if (partition[k] <= partition[k - 1]) fail(ErrorCode::BadPartition, "partition must be strictly increasing");
	BlockPartitionReport r;
	r.partition = partition;
	for (std::size_t k = 1; k < partition.size(); ++k) {
		double v = 0.0;
		for (std::size_t i = partition[k - 1]; i < partition[k]; ++i) v += variance(leaf_laws[i]);
		r.block_variances.push_back(v);
	}
	r.c4_hat = *std::min_element(r.block_variances.begin(), r.block_variances.end());
	r.c5_hat = *std::max_element(r.block_variances.begin(), r.block_variances.end());
	if (window) r.window_ok = window->first <= r.c4_hat && r.c5_hat <= window->second;
	return r;
}

} // namespace strong_approx

#endif
