#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "strong_approx/harness.hpp"
#include "strong_approx/report.hpp"

using namespace strong_approx;

namespace {

TrialResultSet synthetic(const std::vector<std::uint64_t>& ns, std::size_t trials, const std::function<double(std::uint64_t, std::size_t)>& delta) {
	TrialResultSet r;
	r.config_hash = 0x1234abcdULL;
	r.seed = 9;
	r.sampler = "kmt";
	for (auto n : ns)
		for (std::size_t t = 0; t < trials; ++t) r.rows.push_back({n, t, delta(n, t), 0, t, n});
	return r;
}

ExperimentConfig small_config() {
	ExperimentConfig c;
	c.ns = {16, 32, 64, 128};
	c.trials = 200;
	c.seed = 42;
	return c;
}

} // namespace

TEST(Config, ParseValidateAndHash) {
	const auto c = config_from_json(nlohmann::json::parse(R"({"distribution": "rademacher", "sampler": "indep", "n": [4, 8],
		"trials": 100, "seed": 5, "workers": 3, "output_dir": "x", "grid": {"cells": 1024, "span": 6}})"));
	EXPECT_EQ(c.sampler, "indep");
	EXPECT_EQ(c.ns, (std::vector<std::uint64_t>{4, 8}));
	EXPECT_EQ(c.grid_cells, 1024u);
	auto d = c;
	d.workers = 17;
	d.output_dir = "elsewhere";
	EXPECT_EQ(config_hash(c), config_hash(d));
	d.seed = 6;
	EXPECT_NE(config_hash(c), config_hash(d));
	for (const char* bad : {R"({"n": [4], "trials": 99})", R"({"n": [], "trials": 100})", R"({"n": [4], "sampler": "magic"})",
	                        R"({"n": "four"})"}) {
		try {
			config_from_json(nlohmann::json::parse(bad));
			FAIL() << bad;
		} catch (const Error& e) {
			EXPECT_EQ(e.code(), ErrorCode::ConfigError) << bad;
		}
	}
}

TEST(RunExperiment, PointMassGivesZeroDeltas) {
	ExperimentConfig c;
	c.distribution = "delta";
	c.ns = {2};
	c.trials = 100;
	const auto r = run_experiment(c);
	ASSERT_EQ(r.rows.size(), 100u);
	for (const auto& row : r.rows) EXPECT_EQ(row.delta, 0.0);
}

TEST(RunExperiment, RowCountOrderAndSeeds) {
	auto c = small_config();
	const auto r = run_experiment(c, 3);
	ASSERT_EQ(r.rows.size(), c.ns.size() * c.trials);
	EXPECT_EQ(r.config_hash, config_hash(c));
	for (std::size_t i = 0; i < r.rows.size(); ++i) {
		const auto& row = r.rows[i];
		EXPECT_EQ(row.n, c.ns[i / c.trials]);
		EXPECT_EQ(row.trial, i % c.trials);
		const auto s = derive_seed(c.seed, i / c.trials, row.trial);
		EXPECT_EQ(row.seed_lo, s.lo);
		EXPECT_EQ(row.seed_hi, s.hi);
	}
}

TEST(RunExperiment, DeterministicAcrossWorkerCounts) {
	auto c = small_config();
	const auto a = to_csv(run_experiment(c, 1));
	const auto b = to_csv(run_experiment(c, 8));
	const auto again = to_csv(run_experiment(c, 1));
	EXPECT_EQ(a, b);
	EXPECT_EQ(a, again);
	::setenv("SA_WORKERS", "5", 1);
	EXPECT_EQ(effective_workers(c), 5u);
	EXPECT_EQ(to_csv(run_experiment(c)), a);
	::unsetenv("SA_WORKERS");
	EXPECT_EQ(summary_json(run_experiment(c, 2), c).dump(), summary_json(run_experiment(c, 7), c).dump());
}

TEST(RunExperiment, PaddingIsRecordedAndHarmless) {
	ExperimentConfig c;
	c.ns = {3, 5};
	c.trials = 100;
	const auto r = run_experiment(c);
	ASSERT_EQ(r.padded.size(), 2u);
	EXPECT_EQ(r.padded.at(3), 4u);
	EXPECT_EQ(r.padded.at(5), 8u);
	// padded summands are point masses at 0 with zero-variance partners
	const auto t = build_tree(pad_to_power_of_two(std::vector<GridDist>(5, rademacher())));
	Stream rng(derive_seed(1, 0, 0));
	const auto p = sample_kmt(t, rng);
	for (std::size_t i = 5; i < 8; ++i) {
		EXPECT_EQ(p.x[i], 0.0);
		EXPECT_EQ(p.y[i], 0.0);
	}
	EXPECT_EQ(p.delta, path_delta({p.prefix_x.begin(), p.prefix_x.begin() + 5}, {p.prefix_y.begin(), p.prefix_y.begin() + 5}));
	EXPECT_NE(to_csv(r).find("padded=3:4;5:8"), std::string::npos);
}

TEST(RunExperiment, SamplerFailureKeepsMarker) {
	ExperimentConfig c;
	c.distribution = nlohmann::json::parse(R"({"points": [[-1, 0.25], [0, 0.5], [1, 0.25]]})");
	c.sampler = "skorokhod";
	c.ns = {4};
	c.trials = 100;
	const auto r = run_experiment(c);
	EXPECT_TRUE(r.failed);
	EXPECT_NE(r.failure.find("two-point"), std::string::npos);
	EXPECT_NE(to_csv(r).find("failed=1"), std::string::npos);
}

TEST(RunExperiment, RejectsUncenteredLaw) {
	ExperimentConfig c;
	c.distribution = "coin";
	c.ns = {4};
	c.trials = 100;
	try {
		run_experiment(c);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::NotCentered);
	}
}

TEST(RunExperiment, KmtBeatsIndependentAt256) {
	ExperimentConfig c;
	c.ns = {256};
	c.trials = 10000;
	const auto k = run_experiment(c, 4);
	c.sampler = "indep";
	const auto i = run_experiment(c, 4);
	EXPECT_LT(statistic(k.deltas(256), Statistic::Median), statistic(i.deltas(256), Statistic::Median));
}

TEST(SeedStreams, DisjointTrialRangesUncorrelated) {
	const std::size_t T = 20000;
	std::vector<double> a(T), b(T);
	for (std::size_t t = 0; t < T; ++t) {
		Stream s1(derive_seed(77, 0, t)), s2(derive_seed(77, 0, t + T));
		a[t] = s1.normal();
		b[t] = s2.normal();
	}
	double ma = 0, mb = 0;
	for (std::size_t t = 0; t < T; ++t) ma += a[t], mb += b[t];
	ma /= T;
	mb /= T;
	double sab = 0, saa = 0, sbb = 0;
	for (std::size_t t = 0; t < T; ++t) {
		sab += (a[t] - ma) * (b[t] - mb);
		saa += (a[t] - ma) * (a[t] - ma);
		sbb += (b[t] - mb) * (b[t] - mb);
	}
	EXPECT_LE(std::abs(sab / std::sqrt(saa * sbb)), 4.0 / std::sqrt(double(T)));
}

TEST(FitGrowth, ExactLogLinear) {
	const auto r = synthetic({16, 32, 64, 128, 256}, 5, [](std::uint64_t n, std::size_t) { return 0.7 + 1.3 * std::log(double(n)); });
	for (auto s : {Statistic::Mean, Statistic::Median, Statistic::Q90}) {
		const auto g = fit_growth(r, s);
		EXPECT_NEAR(g.a, 0.7, 1e-9);
		EXPECT_NEAR(g.b, 1.3, 1e-9);
		EXPECT_NEAR(g.r2, 1.0, 1e-12);
	}
}

TEST(FitGrowth, ExactPowerLaw) {
	const auto r = synthetic({4, 16, 64, 256, 1024}, 3, [](std::uint64_t n, std::size_t) { return 2.5 * std::sqrt(double(n)); });
	EXPECT_NEAR(fit_growth(r, Statistic::Median).exponent_fit, 0.5, 1e-6);
}

TEST(FitGrowth, InsufficientData) {
	const auto r = synthetic({16, 32, 64}, 5, [](std::uint64_t, std::size_t t) { return double(t); });
	try {
		fit_growth(r);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
	}
	EXPECT_EQ(parse_statistic("q90"), Statistic::Q90);
	EXPECT_THROW(parse_statistic("mode"), Error);
}

TEST(ExpMoment, Examples) {
	const auto zero = exp_moment_calibrate(std::vector<double>(50, 0.0), 1.0, 1.0);
	EXPECT_TRUE(zero.capped);
	EXPECT_EQ(zero.c_hat, kCalibrationCap);
	const double tau = 1.7;
	const auto one = exp_moment_calibrate(std::vector<double>(20, tau), tau, (std::exp(1.0) - 1.0) * tau);
	EXPECT_FALSE(one.capped);
	EXPECT_NEAR(one.c_hat, 1.0, 1e-4);
	try {
		exp_moment_calibrate({1.0}, 0.0, 1.0);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::DegenerateTau);
	}
}

TEST(ExpMoment, MonotoneUnderSmallerDeltas) {
	std::vector<double> d;
	for (int i = 0; i < 200; ++i) d.push_back(0.05 * (i % 37));
	const double base = exp_moment_calibrate(d, 1.5, 3.0).c_hat;
	for (int k = 0; k < 20; ++k) {
		auto e = d;
		e[std::size_t(k * 9)] *= 0.5;
		EXPECT_GE(exp_moment_calibrate(e, 1.5, 3.0).c_hat, base);
	}
}

TEST(Tails, ExtremesAndRuleOfThree) {
	std::vector<double> d;
	for (int i = 1; i <= 300; ++i) d.push_back(0.01 * i);
	const auto t = tail_report(d, 1.0, 64, 1.0, {0.0, 0.005, 5.0, 100.0}, 1.0);
	EXPECT_EQ(t.rows[0].p_hat, 1.0);
	EXPECT_EQ(t.rows[1].p_hat, 1.0);
	EXPECT_EQ(t.rows[3].p_hat, 0.0);
	EXPECT_EQ(t.rows[3].ci_lo, 0.0);
	EXPECT_NEAR(t.rows[3].ci_hi, 3.0 / 300.0, 1e-15);
	EXPECT_THROW(tail_report(d, 1.0, 64, 1.0, {1.0, 0.5}), Error);
}

TEST(Tails, WilsonInterval) {
	const auto [lo, hi] = wilson_interval(30, 100);
	EXPECT_LT(lo, 0.3);
	EXPECT_GT(hi, 0.3);
	// reference computed independently from the closed form
	EXPECT_NEAR(lo, 0.19746065620990516, 1e-12);
	EXPECT_NEAR(hi, 0.427427618876424, 1e-12);
}

TEST(Tails, KmtWithinCalibratedEnvelope) {
	ExperimentConfig c;
	c.ns = {1024};
	c.trials = 2000;
	const auto r = run_experiment(c, 4);
	std::vector<double> grid;
	for (int k = 0; k <= 24; ++k) grid.push_back(0.5 * k);
	const auto t = tail_report(r.deltas(1024), 1.7632228343, 1024, 1.0, grid);
	EXPECT_GT(t.c1, 0.0);
	for (const auto& row : t.rows) EXPECT_LE(row.p_hat, row.envelope);
	EXPECT_LT(t.slope, 0.0);
}

TEST(Report, EmptySetHeadersOnly) {
	TrialResultSet r;
	r.config_hash = 7;
	const auto csv = to_csv(r);
	EXPECT_EQ(csv, "# config_hash=0000000000000007,seed=0,sampler=\nn,trial,delta,rejections,seed_lo,seed_hi\n");
	const auto svg = growth_svg(r);
	EXPECT_EQ(svg.rfind("<svg", 0), 0u);
	EXPECT_NE(svg.find("</svg>"), std::string::npos);
	EXPECT_NE(svg.find("config_hash=0000000000000007"), std::string::npos);
	EXPECT_TRUE(parse_csv(csv).rows.empty());
}

TEST(Report, ThreeRowsByteStable) {
	const auto r = synthetic({2, 4, 8}, 1, [](std::uint64_t n, std::size_t) { return 0.1 * double(n) + 1.0 / 3.0; });
	EXPECT_EQ(to_csv(r), to_csv(r));
	EXPECT_EQ(to_csv(r),
	          "# config_hash=000000001234abcd,seed=9,sampler=kmt\n"
	          "n,trial,delta,rejections,seed_lo,seed_hi\n"
	          "2,0,0.53333333333333333,0,0,2\n"
	          "4,0,0.73333333333333339,0,0,4\n"
	          "8,0,1.1333333333333333,0,0,8\n");
	EXPECT_EQ(growth_svg(r), growth_svg(r));
	EXPECT_EQ(summary_json(r).dump(), summary_json(r).dump());
}

TEST(Report, RoundTripReproducesFit) {
	auto c = small_config();
	const auto r = run_experiment(c, 2);
	const auto back = parse_csv(to_csv(r), config_hash(c));
	ASSERT_EQ(back.rows.size(), r.rows.size());
	for (std::size_t i = 0; i < r.rows.size(); ++i) EXPECT_EQ(back.rows[i].delta, r.rows[i].delta);
	const auto f1 = fit_growth(r), f2 = fit_growth(back);
	EXPECT_EQ(f1.a, f2.a);
	EXPECT_EQ(f1.b, f2.b);
	EXPECT_EQ(f1.r2, f2.r2);
	EXPECT_EQ(f1.exponent_fit, f2.exponent_fit);
	try {
		parse_csv(to_csv(r), config_hash(c) ^ 1);
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::IoError);
	}
}

TEST(Report, FilesOnDisk) {
	const auto dir = std::filesystem::temp_directory_path() / "sa_report_test";
	std::filesystem::remove_all(dir);
	auto c = small_config();
	const auto r = run_experiment(c, 2);
	write_csv(r, (dir / "results.csv").string());
	const auto back = read_csv((dir / "results.csv").string(), config_hash(c));
	EXPECT_EQ(to_csv(back), to_csv(r));
	try {
		read_csv((dir / "missing.csv").string());
		FAIL();
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::IoError);
	}
	const auto t = tail_report(r.deltas(128), 1.76, 128, 1.0, {0.0, 1.0, 2.0, 3.0});
	const auto svg = tail_svg(t, r.config_hash);
	EXPECT_NE(svg.find(hex64(r.config_hash)), std::string::npos);
	std::filesystem::remove_all(dir);
}
