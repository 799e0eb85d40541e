#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "strong_approx/harness.hpp"
#include "strong_approx/kmt.hpp"

using namespace strong_approx;

namespace {

double median_of(std::vector<double> v) {
	std::sort(v.begin(), v.end());
	const std::size_t m = v.size() / 2;
	return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Kolmogorov-Smirnov distance between the empirical law of xs and a grid law.
double ks_to_grid(std::vector<double> xs, const GridDist& f) {
	std::sort(xs.begin(), xs.end());
	double d = 0.0;
	const double n = double(xs.size());
	for (std::size_t i = 0; i < f.size(); ++i) {
		const double x = f.point(i);
		const double below = double(std::lower_bound(xs.begin(), xs.end(), x - 1e-9) - xs.begin()) / n;
		const double upto = double(std::upper_bound(xs.begin(), xs.end(), x + 1e-9) - xs.begin()) / n;
		d = std::max({d, std::abs(upto - f.cumulative()[i]), std::abs(below - (i ? f.cumulative()[i - 1] : 0.0))});
	}
	return d;
}

double mean_delta(const std::function<CouplingPath(Stream&)>& sampler, std::size_t trials, std::uint64_t seed, std::uint64_t n_index) {
	double s = 0.0;
	for (std::size_t t = 0; t < trials; ++t) {
		Stream rng(derive_seed(seed, n_index, t));
		s += sampler(rng).delta;
	}
	return s / double(trials);
}

double loglog_slope(const std::vector<double>& ns, const std::vector<double>& ys) {
	std::vector<double> lx, ly;
	for (std::size_t i = 0; i < ns.size(); ++i) {
		lx.push_back(std::log(ns[i]));
		ly.push_back(std::log(ys[i]));
	}
	return fit_line(lx, ly).slope;
}

} // namespace

TEST(BuildTree, TwoRademacherLeaves) {
	const auto t = build_tree({rademacher(), rademacher()});
	ASSERT_EQ(t.root().size(), 3u);
	EXPECT_EQ(t.root().front(), -2.0);
	EXPECT_EQ(t.root().back(), 2.0);
	EXPECT_NEAR(t.root().mass(0), 0.25, 1e-15);
	EXPECT_NEAR(t.root().mass(1), 0.5, 1e-15);
	EXPECT_EQ(t.root_variance(), 2.0);
	EXPECT_EQ(t.depth(), 1);
}

TEST(BuildTree, SinglePointMass) {
	const auto t = build_tree({GridDist::point_mass(0.0)});
	EXPECT_EQ(t.depth(), 0);
	EXPECT_TRUE(t.root().is_point_mass());
	EXPECT_EQ(t.root().front(), 0.0);
}

TEST(BuildTree, FourRademacherLeavesBinomial) {
	const auto t = build_tree(std::vector<GridDist>(4, rademacher()));
	ASSERT_EQ(t.root().size(), 5u);
	EXPECT_EQ(t.root().front(), -4.0);
	EXPECT_EQ(t.root().step(), 2.0);
	const double binom[] = {1, 4, 6, 4, 1};
	for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(t.root().mass(i), binom[i] / 16.0, 1e-15);
	EXPECT_EQ(t.root_variance(), 4.0);
}

TEST(BuildTree, BlockLawsAreChildConvolutions) {
	std::vector<GridDist> leaves = {rademacher(), centered_poisson(0.5), center(coin()), GridDist::point_mass(0.0),
	                                centered_poisson(2.0), rademacher(), scale(rademacher(), 3.0), center(make_grid({{0, 0.2}, {2, 0.8}}))};
	// centered Poisson leaves share the integer lattice only after centering; shift back to a lattice through 0
	leaves[1] = center(make_grid({{0, 0.6}, {1, 0.3}, {2, 0.1}}));
	leaves[4] = center(make_grid({{0, 0.5}, {1, 0.25}, {3, 0.25}}));
	const auto t = build_tree(leaves);
	for (std::size_t node = 1; node < t.leaves(); ++node) {
		const auto c = convolve(t.block_law(2 * node), t.block_law(2 * node + 1));
		const auto& b = t.block_law(node);
		ASSERT_EQ(c.size(), b.size());
		for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(c.mass(i), b.mass(i), 1e-10);
		EXPECT_EQ(t.block_variance(node), t.block_variance(2 * node) + t.block_variance(2 * node + 1));
	}
}

TEST(BuildTree, Errors) {
	try {
		build_tree(std::vector<GridDist>(3, rademacher()));
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::NotPowerOfTwo);
	}
	try {
		build_tree({coin(), rademacher()});
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::NotCentered);
	}
	EXPECT_EQ(pad_to_power_of_two(std::vector<GridDist>(5, rademacher())).size(), 8u);
}

TEST(QuantileCouple, Examples) {
	const auto [x0, y0] = quantile_couple_scalar(GridDist::point_mass(0.0), 0.0, 1.3, 0.4);
	EXPECT_EQ(x0, 0.0);
	EXPECT_EQ(y0, 0.0);
	for (double g : {-3.0, -0.5, -1e-9})
		for (double u : {0.01, 0.5, 0.99}) EXPECT_EQ(quantile_couple_scalar(rademacher(), 1.0, g, u).first, -1.0);
	for (double g : {1e-9, 0.5, 3.0}) EXPECT_EQ(quantile_couple_scalar(rademacher(), 1.0, g, 0.5).first, 1.0);
	try {
		quantile_couple_scalar(rademacher(), 2.0, 0.0, 0.5);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::VarianceMismatch);
	}
}

TEST(QuantileCouple, RademacherMarginal) {
	Stream rng(derive_seed(17, 0, 0));
	int plus = 0;
	const int N = 100000;
	for (int i = 0; i < N; ++i) {
		const double g = rng.normal();
		plus += quantile_couple_scalar(rademacher(), 1.0, g, rng.uniform()).first > 0;
	}
	EXPECT_NEAR(double(plus) / N, 0.5, 0.005);
}

TEST(QuantileCouple, ThreePointMarginalAndMonotone) {
	const auto f = center(make_grid({{0, 0.2}, {1, 0.5}, {2, 0.3}}));
	Stream rng(derive_seed(3, 0, 0));
	std::vector<double> xs;
	double last_x = -1e9;
	for (int i = 0; i < 50000; ++i) xs.push_back(quantile_couple_scalar(f, variance(f), rng.normal(), rng.uniform()).first);
	EXPECT_LT(ks_to_grid(xs, f), 1.63 / std::sqrt(50000.0));
	// the coupling is monotone in g for fixed u
	for (double g = -4; g <= 4; g += 0.01) {
		const double x = quantile_couple_scalar(f, variance(f), g, 0.5).first;
		EXPECT_GE(x, last_x);
		last_x = x;
	}
}

TEST(SampleKmt, PointMassLeaves) {
	const auto t = build_tree(std::vector<GridDist>(8, GridDist::point_mass(0.0)));
	Stream rng(derive_seed(1, 0, 0));
	const auto p = sample_kmt(t, rng);
	for (std::size_t i = 0; i < 8; ++i) {
		EXPECT_EQ(p.x[i], 0.0);
		EXPECT_EQ(p.y[i], 0.0);
	}
	EXPECT_EQ(p.delta, 0.0);
}

TEST(SampleKmt, TwoLeavesRootIsQuantileCoupled) {
	const auto t = build_tree({rademacher(), rademacher()});
	for (std::size_t trial = 0; trial < 2000; ++trial) {
		const auto seed = derive_seed(5, 0, trial);
		Stream a(seed), b(seed);
		const auto p = sample_kmt(t, a);
		const double g1 = b.normal(), g2 = b.normal();
		const double u = b.uniform();
		const double root_x = quantile_couple_scalar(t.root(), 2.0, (g1 + g2) / std::sqrt(2.0), u).first;
		ASSERT_EQ(p.x[0] + p.x[1], root_x);
		ASSERT_EQ(p.y[0], g1);
		ASSERT_EQ(p.y[1], g2);
	}
}

TEST(SampleKmt, ConditionalSplitIsFair) {
	const auto t = build_tree({rademacher(), rademacher()});
	int zero = 0, left_plus = 0;
	for (std::size_t trial = 0; trial < 40000; ++trial) {
		Stream rng(derive_seed(6, 0, trial));
		const auto p = sample_kmt(t, rng);
		if (p.x[0] + p.x[1] == 0.0) {
			++zero;
			left_plus += p.x[0] > 0;
		}
	}
	ASSERT_GT(zero, 15000);
	EXPECT_NEAR(double(left_plus) / zero, 0.5, 4.0 * 0.5 / std::sqrt(double(zero)));
}

TEST(SampleKmt, DyadicConsistencyAndPrefixes) {
	const auto t = build_tree(std::vector<GridDist>(64, center(make_grid({{0, 0.3}, {1, 0.4}, {3, 0.3}}))));
	for (std::size_t trial = 0; trial < 200; ++trial) {
		Stream rng(derive_seed(8, 0, trial));
		KmtTrace trace;
		const auto p = sample_kmt(t, rng, &trace);
		for (std::size_t node = 1; node < t.leaves(); ++node)
			ASSERT_EQ(trace.block_index[node], trace.block_index[2 * node] + trace.block_index[2 * node + 1]);
		double sx = 0.0, sy = 0.0;
		for (std::size_t k = 0; k < p.x.size(); ++k) {
			sx += p.x[k];
			sy += p.y[k];
			ASSERT_EQ(p.prefix_x[k], sx);
			ASSERT_EQ(p.prefix_y[k], sy);
		}
		ASSERT_EQ(p.delta, path_delta(p.prefix_x, p.prefix_y));
	}
}

TEST(SampleKmt, MarginalExactnessThreePointLeaves) {
	const auto leaf = center(make_grid({{0, 0.25}, {1, 0.5}, {4, 0.25}}));
	const auto t = build_tree(std::vector<GridDist>(16, leaf));
	const std::size_t T = 20000;
	std::vector<std::vector<double>> xs(16), ys(16);
	for (std::size_t trial = 0; trial < T; ++trial) {
		Stream rng(derive_seed(9, 0, trial));
		const auto p = sample_kmt(t, rng);
		for (std::size_t i = 0; i < 16; ++i) {
			xs[i].push_back(p.x[i]);
			ys[i].push_back(p.y[i]);
		}
	}
	const double bound = 1.63 / std::sqrt(double(T)) + 1e-9;
	const double v = variance(leaf);
	for (std::size_t i = 0; i < 16; ++i) {
		EXPECT_LT(ks_to_grid(xs[i], leaf), bound) << "leaf " << i;
		double m = 0.0, s2 = 0.0;
		for (double y : ys[i]) m += y;
		m /= double(T);
		for (double y : ys[i]) s2 += (y - m) * (y - m);
		s2 /= double(T - 1);
		EXPECT_NEAR(m, 0.0, 4.0 * std::sqrt(v / double(T)));
		EXPECT_NEAR(s2, v, 4.0 * v * std::sqrt(2.0 / double(T)));
	}
	// Gaussian partners are independent across summands
	for (std::size_t i = 0; i + 1 < 16; i += 3) {
		double c = 0.0;
		for (std::size_t k = 0; k < T; ++k) c += ys[i][k] * ys[i + 1][k];
		EXPECT_LT(std::abs(c / double(T) / v), 4.0 / std::sqrt(double(T)));
	}
}

TEST(SampleKmt, CenteredPoissonLeavesWithRejectionCounter) {
	const auto t = build_tree(std::vector<GridDist>(32, centered_poisson(0.3)));
	std::size_t rejected = 0;
	std::vector<double> first;
	for (std::size_t trial = 0; trial < 5000; ++trial) {
		Stream rng(derive_seed(10, 0, trial));
		const auto p = sample_kmt(t, rng);
		rejected += p.rejected;
		first.push_back(p.x[0]);
	}
	EXPECT_LT(ks_to_grid(first, t.block_law(32)), 1.63 / std::sqrt(5000.0) + 1e-9);
	EXPECT_LT(rejected, 50u);
}

TEST(SampleKmt, DeterministicStreams) {
	const auto t = build_tree(std::vector<GridDist>(32, rademacher()));
	for (std::size_t trial = 0; trial < 20; ++trial) {
		Stream a(derive_seed(11, 2, trial)), b(derive_seed(11, 2, trial));
		const auto p = sample_kmt(t, a), q = sample_kmt(t, b);
		EXPECT_EQ(p.x, q.x);
		EXPECT_EQ(p.y, q.y);
		EXPECT_EQ(p.delta, q.delta);
	}
}

TEST(Baselines, PointMassLeavesGiveZeroDelta) {
	const LeafSet leaves(std::vector<GridDist>(8, GridDist::point_mass(0.0)));
	Stream rng(derive_seed(1, 0, 0));
	EXPECT_EQ(sample_independent(leaves, rng).delta, 0.0);
	EXPECT_EQ(sample_quantile_per_summand(leaves, rng).delta, 0.0);
}

TEST(Baselines, IndependentSingleSummandPositive) {
	const LeafSet leaves({rademacher()});
	for (std::size_t t = 0; t < 100; ++t) {
		Stream rng(derive_seed(2, 0, t));
		const auto p = sample_independent(leaves, rng);
		EXPECT_GT(p.delta, 0.0);
		EXPECT_EQ(p.delta, std::abs(p.x[0] - p.y[0]));
	}
}

TEST(Baselines, QuantileEqualsKmtAtDepthZero) {
	const auto leaf = center(make_grid({{0, 0.1}, {1, 0.6}, {2, 0.3}}));
	const auto t = build_tree({leaf});
	const LeafSet leaves({leaf});
	for (std::size_t trial = 0; trial < 500; ++trial) {
		Stream a(derive_seed(12, 0, trial)), b(derive_seed(12, 0, trial));
		const auto p = sample_kmt(t, a), q = sample_quantile_per_summand(leaves, b);
		ASSERT_EQ(p.x, q.x);
		ASSERT_EQ(p.y, q.y);
	}
}

TEST(Baselines, MarginalsOfIndependentAndQuantile) {
	const auto leaf = center(make_grid({{0, 0.5}, {1, 0.3}, {2, 0.2}}));
	const LeafSet leaves(std::vector<GridDist>(4, leaf));
	const std::size_t T = 20000;
	std::vector<double> xi, xq;
	for (std::size_t trial = 0; trial < T; ++trial) {
		Stream a(derive_seed(13, 0, trial)), b(derive_seed(13, 1, trial));
		xi.push_back(sample_independent(leaves, a).x[2]);
		xq.push_back(sample_quantile_per_summand(leaves, b).x[3]);
	}
	EXPECT_LT(ks_to_grid(xi, leaf), 1.63 / std::sqrt(double(T)));
	EXPECT_LT(ks_to_grid(xq, leaf), 1.63 / std::sqrt(double(T)));
}

TEST(Baselines, SqrtGrowthOfIndependentAndQuantile) {
	std::vector<double> ns, ind, qnt;
	for (std::size_t n = 64; n <= 4096; n *= 2) {
		const LeafSet leaves(std::vector<GridDist>(n, rademacher()));
		ns.push_back(double(n));
		ind.push_back(mean_delta([&](Stream& r) { return sample_independent(leaves, r); }, 1000, 14, n));
		qnt.push_back(mean_delta([&](Stream& r) { return sample_quantile_per_summand(leaves, r); }, 1000, 15, n));
	}
	const double bi = loglog_slope(ns, ind), bq = loglog_slope(ns, qnt);
	EXPECT_GE(bi, 0.4);
	EXPECT_LE(bi, 0.6);
	EXPECT_GE(bq, 0.4);
	EXPECT_LE(bq, 0.6);
}

TEST(Baselines, MedianOrderingAt256) {
	const std::size_t n = 256, T = 10000;
	const auto t = build_tree(std::vector<GridDist>(n, rademacher()));
	const LeafSet leaves(std::vector<GridDist>(n, rademacher()));
	std::vector<double> dk, dq, di;
	for (std::size_t trial = 0; trial < T; ++trial) {
		Stream a(derive_seed(16, 0, trial)), b(derive_seed(16, 1, trial)), c(derive_seed(16, 2, trial));
		dk.push_back(sample_kmt(t, a).delta);
		dq.push_back(sample_quantile_per_summand(leaves, b).delta);
		di.push_back(sample_independent(leaves, c).delta);
	}
	EXPECT_LT(median_of(dk), median_of(dq));
	EXPECT_LT(median_of(dq), median_of(di));
}

TEST(Skorokhod, ExitValuesAndErrors) {
	Stream rng(derive_seed(18, 0, 0));
	const auto p = sample_skorokhod(rademacher(), 200, rng, 0.005);
	for (double x : p.x) EXPECT_TRUE(x == -1.0 || x == 1.0);
	EXPECT_EQ(p.x.size(), 200u);
	EXPECT_EQ(p.y.size(), 200u);
	try {
		sample_skorokhod(make_grid({{0.0, 0.5}, {1.0, 0.5}}), 4, rng, 0.001);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::NotCentered);
	}
	try {
		sample_skorokhod(GridDist::point_mass(0.0), 4, rng, 0.001);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::UnsupportedLaw);
	}
	try {
		sample_skorokhod(rademacher(), 4, rng, 0.5);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::StepTooCoarse);
	}
}

TEST(Skorokhod, AsymmetricMarginalWithinDiscretizationBias) {
	const auto leaf = make_grid({{-1.0, 2.0 / 3.0}, {2.0, 1.0 / 3.0}});
	std::size_t high = 0, total = 0;
	for (std::size_t t = 0; t < 400; ++t) {
		Stream rng(derive_seed(19, 0, t));
		const auto p = sample_skorokhod(leaf, 50, rng, 0.002);
		for (double x : p.x) {
			high += x == 2.0;
			++total;
		}
	}
	// overshoot of the discretized path biases exit probabilities by O(sqrt(dt))
	EXPECT_NEAR(double(high) / double(total), 1.0 / 3.0, 0.015);
}

TEST(Skorokhod, QuarterPowerGrowth) {
	std::vector<double> ns, md;
	for (std::size_t n = 64; n <= 4096; n *= 4) {
		ns.push_back(double(n));
		md.push_back(mean_delta([&](Stream& r) { return sample_skorokhod(rademacher(), n, r, 0.01); }, 200, 20, n));
	}
	const double b = loglog_slope(ns, md);
	EXPECT_GE(b, 0.15);
	EXPECT_LE(b, 0.4);
}

TEST(ProductExtend, Identities) {
	Stream rng(derive_seed(21, 0, 0));
	const LeafSet leaves(std::vector<GridDist>(16, rademacher()));
	const auto p = sample_independent(leaves, rng);
	EXPECT_EQ(product_extend({p}), p.delta);
	EXPECT_NEAR(product_extend({p, p}), std::sqrt(2.0) * p.delta, 1e-12);
	const auto t = build_tree(std::vector<GridDist>(16, rademacher()));
	for (std::size_t trial = 0; trial < 500; ++trial) {
		std::vector<CouplingPath> coords;
		double mx = 0.0;
		for (std::uint64_t j = 0; j < 3; ++j) {
			Stream r(derive_seed(22, j, trial));
			coords.push_back(sample_kmt(t, r));
			mx = std::max(mx, coords.back().delta);
		}
		const double d = product_extend(coords);
		EXPECT_LE(mx, d + 1e-12);
		EXPECT_LE(d, std::sqrt(3.0) * mx + 1e-12);
	}
	EXPECT_THROW(product_extend({}), Error);
}

TEST(BlockPartition, Examples) {
	const std::vector<GridDist> four(4, rademacher());
	const auto r = block_partition_check(four, {0, 2, 4});
	EXPECT_EQ(r.block_variances, (std::vector<double>{2.0, 2.0}));
	EXPECT_EQ(r.c4_hat, 2.0);
	EXPECT_EQ(r.c5_hat, 2.0);
	const auto one = block_partition_check(four, {0, 4});
	EXPECT_EQ(one.c4_hat, 4.0);
	EXPECT_EQ(one.c5_hat, 4.0);
	const auto mixed = block_partition_check({rademacher(), scale(rademacher(), 2.0)}, {0, 1, 2}, std::pair{0.5, 5.0});
	EXPECT_EQ(mixed.c4_hat, 1.0);
	EXPECT_EQ(mixed.c5_hat, 4.0);
	EXPECT_TRUE(mixed.window_ok.value());
	EXPECT_THROW(block_partition_check(four, {0, 3, 3, 4}), Error);
	EXPECT_THROW(block_partition_check(four, {0, 2}), Error);
}
