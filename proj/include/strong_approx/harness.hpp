#ifndef STRONG_APPROX_HARNESS_HPP
#define STRONG_APPROX_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <tuple>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "strong_approx/dist_io.hpp"
#include "strong_approx/kmt.hpp"

namespace strong_approx {

struct ExperimentConfig {
	nlohmann::json distribution = "rademacher";
	std::string sampler = "kmt"; ///< kmt | indep | quantile | skorokhod
	std::vector<std::uint64_t> ns;
	std::size_t trials = 1000;
	std::uint64_t seed = 1;
	std::size_t workers = 1;
	std::string output_dir = ".";
	std::size_t grid_cells = 4096; ///< default discretization for continuous families
	double grid_span = 8.0;        ///< half-width in standard deviations
	double dt = 0.0;               ///< Skorokhod time step; 0 selects a*b/100
};

/// Fields that determine the results (workers and output_dir do not).
inline nlohmann::json canonical_json(const ExperimentConfig& c) {
	return {{"distribution", c.distribution}, {"sampler", c.sampler},       {"n", c.ns},
	        {"trials", c.trials},             {"seed", c.seed},             {"grid", {{"cells", c.grid_cells}, {"span", c.grid_span}}},
	        {"dt", c.dt}};
}

/// FNV-1a 64 of the canonical config text.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
	const std::string text = canonical_json(c).dump();
	std::uint64_t h = 0xcbf29ce484222325ull;
	for (unsigned char ch : text) {
		h ^= ch;
		h *= 0x100000001b3ull;
	}
	return h;
}

inline std::string hex64(std::uint64_t v) {
	char buf[17];
	std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
	return buf;
}

inline void validate(const ExperimentConfig& c) {
	if (c.ns.empty()) fail(ErrorCode::ConfigError, "n-list is empty");
	for (auto n : c.ns)
		if (n == 0 || n > (std::uint64_t(1) << 22)) fail(ErrorCode::ConfigError, "n must lie in [1, 2^22]");
	if (c.trials < 100) fail(ErrorCode::ConfigError, "at least 100 trials per n");
	if (c.sampler != "kmt" && c.sampler != "indep" && c.sampler != "quantile" && c.sampler != "skorokhod")
		fail(ErrorCode::ConfigError, "unknown sampler '" + c.sampler + "'");
	if (c.grid_cells < 2 || !(c.grid_span > 0.0)) fail(ErrorCode::ConfigError, "bad grid parameters");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
	ExperimentConfig c;
	try {
		if (j.contains("distribution")) c.distribution = j.at("distribution");
		c.sampler = j.value("sampler", c.sampler);
		if (j.contains("n")) {
			const auto& n = j.at("n");
			if (n.is_array())
				c.ns = n.get<std::vector<std::uint64_t>>();
			else
				c.ns = {n.get<std::uint64_t>()};
		}
		c.trials = j.value("trials", c.trials);
		c.seed = j.value("seed", c.seed);
		c.workers = j.value("workers", c.workers);
		c.output_dir = j.value("output_dir", c.output_dir);
		if (j.contains("grid")) {
			c.grid_cells = j.at("grid").value("cells", c.grid_cells);
			c.grid_span = j.at("grid").value("span", c.grid_span);
		}
		c.dt = j.value("dt", c.dt);
	} catch (const nlohmann::json::exception& e) {
		fail(ErrorCode::ConfigError, std::string("bad config: ") + e.what());
	}
	validate(c);
	return c;
}

/// The configured law, with the grid defaults filled into bare "gauss sigma".
inline GridDist resolve_distribution(const ExperimentConfig& c) {
	if (c.distribution.is_string()) {
		std::string s = c.distribution.get<std::string>();
		std::istringstream in(s);
		std::vector<std::string> words;
		for (std::string w; in >> w;) words.push_back(w);
		if (!words.empty() && words[0] == "gauss" && words.size() == 2)
			s += " " + std::to_string(c.grid_cells) + " " + std::to_string(c.grid_span);
		return load_distribution(s);
	}
	nlohmann::json d = c.distribution;
	if (d.is_object() && d.value("family", std::string()) == "gauss") {
		if (!d.contains("n_cells")) d["n_cells"] = c.grid_cells;
		if (!d.contains("span")) d["span"] = c.grid_span;
	}
	return dist_from_json(d);
}

struct TrialRow {
	std::uint64_t n = 0;
	std::uint64_t trial = 0;
	double delta = 0.0;
	std::uint64_t rejections = 0;
	std::uint64_t seed_lo = 0;
	std::uint64_t seed_hi = 0;
};

struct TrialResultSet {
	std::vector<TrialRow> rows; ///< canonical order: sorted by n, then trial
	std::uint64_t config_hash = 0;
	std::uint64_t seed = 0;
	std::string sampler;
	std::map<std::uint64_t, std::uint64_t> padded; ///< requested n -> simulated n, when padded
	double wall_clock_s = 0.0;
	bool failed = false;
	std::string failure;

	std::vector<std::uint64_t> distinct_n() const {
		std::vector<std::uint64_t> out;
		for (const auto& r : rows)
			if (std::find(out.begin(), out.end(), r.n) == out.end()) out.push_back(r.n);
		return out;
	}
	std::vector<double> deltas(std::uint64_t n) const {
		std::vector<double> out;
		for (const auto& r : rows)
			if (r.n == n) out.push_back(r.delta);
		return out;
	}
};

/// Worker count: SA_WORKERS overrides the config; results never depend on it.
inline std::size_t effective_workers(const ExperimentConfig& c) {
	if (const char* env = std::getenv("SA_WORKERS")) {
		const long v = std::strtol(env, nullptr, 10);
		if (v > 0) return std::size_t(v);
	}
	return std::max<std::size_t>(1, c.workers);
}

namespace detail {

/// Per-n immutable sampler state, shared read-only by the workers.
struct NContext {
	std::uint64_t n = 0;
	std::optional<SumTree> tree;
	std::optional<LeafSet> leaves;
	std::optional<GridDist> leaf;
	double dt = 0.0;

	CouplingPath sample(const std::string& sampler, Stream& rng) const {
		if (sampler == "kmt") return sample_kmt(*tree, rng);
		if (sampler == "indep") return sample_independent(*leaves, rng);
		if (sampler == "quantile") return sample_quantile_per_summand(*leaves, rng);
		return sample_skorokhod(*leaf, n, rng, dt);
	}
};

} // namespace detail

/// Runs every (n, trial) work item; deterministic in (config, seed) for any
/// worker count. On a sampler failure the completed rows are kept and the set
/// is marked failed.
inline TrialResultSet run_experiment(const ExperimentConfig& cfg, std::optional<std::size_t> workers = std::nullopt) {
	validate(cfg);
	const auto started = std::chrono::steady_clock::now();
	const GridDist law = resolve_distribution(cfg);
	{
		const double scale = std::max({1.0, std::abs(law.front()), std::abs(law.back())});
		if (std::abs(mean(law)) > 1e-10 * scale) fail(ErrorCode::NotCentered, "experiment law must be centered");
	}

	TrialResultSet out;
	out.config_hash = config_hash(cfg);
	out.seed = cfg.seed;
	out.sampler = cfg.sampler;

	std::vector<detail::NContext> ctx;
	for (auto n : cfg.ns) {
		detail::NContext c;
		c.n = n;
		if (cfg.sampler == "skorokhod") {
			c.leaf = law;
			c.dt = cfg.dt > 0.0 ? cfg.dt : (-law.front() * law.back()) / 100.0;
		} else {
			const auto padded = std::bit_ceil(n);
			if (padded != n) out.padded[n] = padded;
			std::vector<GridDist> leaves(n, law);
			leaves = pad_to_power_of_two(std::move(leaves));
			if (cfg.sampler == "kmt")
				c.tree.emplace(std::move(leaves));
			else
				c.leaves.emplace(std::move(leaves));
		}
		ctx.push_back(std::move(c));
	}

	const std::size_t total = cfg.ns.size() * cfg.trials;
	out.rows.resize(total);
	std::vector<unsigned char> done(total, 0);
	std::atomic<std::size_t> next{0};
	std::atomic<bool> stop{false};
	std::mutex err_mu;
	std::string first_error;

	auto work = [&] {
		for (;;) {
			const std::size_t item = next.fetch_add(1);
			if (item >= total || stop.load()) return;
			const std::size_t ni = item / cfg.trials, trial = item % cfg.trials;
			const auto seed = derive_seed(cfg.seed, ni, trial);
			try {
				Stream rng(seed);
				const auto path = ctx[ni].sample(cfg.sampler, rng);
				out.rows[item] = {cfg.ns[ni], trial, path.delta, path.rejected, seed.lo, seed.hi};
				done[item] = 1;
			} catch (const std::exception& e) {
				std::lock_guard lock(err_mu);
				if (first_error.empty()) first_error = e.what();
				stop = true;
			}
		}
	};
	const std::size_t nw = std::min(workers.value_or(effective_workers(cfg)), total);
	if (nw <= 1) {
		work();
	} else {
		std::vector<std::thread> pool;
		for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(work);
		for (auto& t : pool) t.join();
	}
	if (!first_error.empty()) {
		std::vector<TrialRow> kept;
		for (std::size_t i = 0; i < total; ++i)
			if (done[i]) kept.push_back(out.rows[i]);
		out.rows = std::move(kept);
		out.failed = true;
		out.failure = first_error;
	}
	std::stable_sort(out.rows.begin(), out.rows.end(), [](const TrialRow& a, const TrialRow& b) {
		return a.n != b.n ? a.n < b.n : a.trial < b.trial;
	});
	out.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
	return out;
}

// ---- statistics ------------------------------------------------------------

enum class Statistic { Mean, Median, Q90 };

inline Statistic parse_statistic(const std::string& s) {
	if (s == "mean") return Statistic::Mean;
	if (s == "median") return Statistic::Median;
	if (s == "q90") return Statistic::Q90;
	fail(ErrorCode::ConfigError, "statistic must be mean, median or q90");
}

/// Linear-interpolation sample quantile (type 7).
inline double sample_quantile(std::vector<double> v, double q) {
	if (v.empty()) fail(ErrorCode::InsufficientData, "empty sample");
	std::sort(v.begin(), v.end());
	const double h = (double(v.size()) - 1.0) * q;
	const auto lo = std::size_t(std::floor(h));
	const std::size_t hi = std::min(lo + 1, v.size() - 1);
	return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

inline double statistic(const std::vector<double>& v, Statistic s) {
	if (v.empty()) fail(ErrorCode::InsufficientData, "empty sample");
	switch (s) {
	case Statistic::Mean: {
		double t = 0.0;
		for (double x : v) t += x;
		return t / double(v.size());
	}
	case Statistic::Median: return sample_quantile(v, 0.5);
	case Statistic::Q90: return sample_quantile(v, 0.9);
	}
	return 0.0;
}

struct LineFit {
	double intercept = 0.0;
	double slope = 0.0;
	double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
	const double n = double(x.size());
	double mx = 0.0, my = 0.0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		mx += x[i];
		my += y[i];
	}
	mx /= n;
	my /= n;
	double sxx = 0.0, sxy = 0.0, syy = 0.0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		sxx += (x[i] - mx) * (x[i] - mx);
		sxy += (x[i] - mx) * (y[i] - my);
		syy += (y[i] - my) * (y[i] - my);
	}
	LineFit f;
	f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
	f.intercept = my - f.slope * mx;
	double ssr = 0.0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		const double e = y[i] - f.intercept - f.slope * x[i];
		ssr += e * e;
	}
	f.r2 = syy > 0.0 ? 1.0 - ssr / syy : (ssr == 0.0 ? 1.0 : 0.0);
	return f;
}

struct GrowthFit {
	double a = 0.0;  ///< statistic ~ a + b log n
	double b = 0.0;
	double r2 = 0.0;
	double exponent_fit = 0.0; ///< statistic ~ C n^exponent (NaN if a statistic is 0)
	double exponent_r2 = 0.0;
	std::vector<std::uint64_t> ns;
	std::vector<double> stats;
};

inline GrowthFit fit_growth(const TrialResultSet& results, Statistic stat = Statistic::Median) {
	GrowthFit g;
	g.ns = results.distinct_n();
	std::sort(g.ns.begin(), g.ns.end());
	if (g.ns.size() < 4) fail(ErrorCode::InsufficientData, "growth fit needs at least 4 distinct n");
	std::vector<double> logn, logs;
	bool positive = true;
	for (auto n : g.ns) {
		g.stats.push_back(statistic(results.deltas(n), stat));
		logn.push_back(std::log(double(n)));
		positive = positive && g.stats.back() > 0.0;
		logs.push_back(positive ? std::log(g.stats.back()) : 0.0);
	}
	const auto lin = fit_line(logn, g.stats);
	g.a = lin.intercept;
	g.b = lin.slope;
	g.r2 = lin.r2;
	if (positive) {
		const auto pw = fit_line(logn, logs);
		g.exponent_fit = pw.slope;
		g.exponent_r2 = pw.r2;
	} else {
		g.exponent_fit = g.exponent_r2 = std::nan("");
	}
	return g;
}

struct ExpMomentCalibration {
	double c_hat = 0.0;
	bool capped = false; ///< condition holds at the cap; c_hat is only a lower bound
};

inline constexpr double kCalibrationCap = 100.0;

/// Largest c (bisection to 1e-4, capped at 100) with mean exp(c delta / tau) <= 1 + B / tau.
inline ExpMomentCalibration exp_moment_calibrate(const std::vector<double>& deltas, double tau, double B) {
	if (!(tau > 0.0)) fail(ErrorCode::DegenerateTau, "tau must be positive");
	if (deltas.empty()) fail(ErrorCode::InsufficientData, "no deltas");
	const double limit = std::log1p(B / tau);
	const double dmax = *std::max_element(deltas.begin(), deltas.end());
	auto holds = [&](double c) {
		// log mean exp(c d / tau), shifted by the largest term
		const double top = c * dmax / tau;
		double s = 0.0;
		for (double d : deltas) s += std::exp(c * d / tau - top);
		return top + std::log(s / double(deltas.size())) <= limit;
	};
	if (holds(kCalibrationCap)) return {kCalibrationCap, true};
	double lo = 0.0, hi = kCalibrationCap;
	while (hi - lo > 1e-4) {
		const double mid = 0.5 * (lo + hi);
		if (holds(mid))
			lo = mid;
		else
			hi = mid;
	}
	return {lo, false};
}

struct TailRow {
	double x = 0.0;
	std::size_t count = 0;
	double p_hat = 0.0;
	double ci_lo = 0.0, ci_hi = 0.0; ///< 99% Wilson; rule of three at zero counts
	double envelope = 0.0;
};

struct TailReport {
	std::uint64_t n = 0;
	double tau = 0.0;
	double c1 = 0.0;
	bool c1_capped = false;
	std::vector<TailRow> rows;
	double slope = std::nan(""); ///< d log p_hat / dx over 0 < p_hat < 1
	double slope_intercept = std::nan("");
};

inline std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 2.5758293035489004) {
	if (n == 0) return {0.0, 1.0};
	if (k == 0) return {0.0, std::min(1.0, 3.0 / double(n))};
	const double p = double(k) / double(n), nn = double(n);
	const double den = 1.0 + z * z / nn;
	const double centre = (p + z * z / (2.0 * nn)) / den;
	const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / den;
	return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Exceedance P(c1 delta / tau >= x) against exp(log(1 + sqrt(n E xi^2) / tau) - x).
/// Without a supplied c1 the largest c1 keeping every grid point under the
/// envelope is used.
inline TailReport tail_report(const std::vector<double>& deltas, double tau, std::uint64_t n, double second_moment,
                              const std::vector<double>& x_grid, std::optional<double> c1 = std::nullopt) {
	if (!(tau > 0.0)) fail(ErrorCode::DegenerateTau, "tau must be positive");
	if (deltas.empty()) fail(ErrorCode::InsufficientData, "no deltas");
	for (std::size_t i = 1; i < x_grid.size(); ++i)
		if (!(x_grid[i] > x_grid[i - 1])) fail(ErrorCode::InvalidArgument, "x grid must be increasing");
	std::vector<double> d(deltas);
	std::sort(d.begin(), d.end());
	const double shift = std::log1p(std::sqrt(double(n) * second_moment) / tau);
	auto envelope = [&](double x) { return std::exp(shift - x); };
	auto exceed = [&](double c, double x) -> std::size_t {
		// count of c * delta / tau >= x
		if (c <= 0.0) return x <= 0.0 ? d.size() : 0;
		const double thr = x * tau / c;
		return std::size_t(d.end() - std::lower_bound(d.begin(), d.end(), thr));
	};
	auto holds = [&](double c) {
		for (double x : x_grid)
			if (double(exceed(c, x)) / double(d.size()) > envelope(x)) return false;
		return true;
	};

	TailReport r;
	r.n = n;
	r.tau = tau;
	if (c1) {
		r.c1 = *c1;
	} else if (holds(kCalibrationCap)) {
		r.c1 = kCalibrationCap;
		r.c1_capped = true;
	} else {
		double lo = 0.0, hi = kCalibrationCap;
		while (hi - lo > 1e-6) {
			const double mid = 0.5 * (lo + hi);
			if (holds(mid))
				lo = mid;
			else
				hi = mid;
		}
		r.c1 = lo;
	}
	std::vector<double> xs, ls;
	for (double x : x_grid) {
		TailRow row;
		row.x = x;
		row.count = exceed(r.c1, x);
		row.p_hat = double(row.count) / double(d.size());
		std::tie(row.ci_lo, row.ci_hi) = wilson_interval(row.count, d.size());
		row.envelope = envelope(x);
		if (row.p_hat > 0.0 && row.p_hat < 1.0) {
			xs.push_back(x);
			ls.push_back(std::log(row.p_hat));
		}
		r.rows.push_back(row);
	}
	if (xs.size() >= 2) {
		const auto f = fit_line(xs, ls);
		r.slope = f.slope;
		r.slope_intercept = f.intercept;
	}
	return r;
}

} // namespace strong_approx

#endif
