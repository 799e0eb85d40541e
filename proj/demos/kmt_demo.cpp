// Small tour: couple Rademacher partial sums with a Gaussian walk three ways
// and print how the median maximal gap grows with n.
#include <cmath>
#include <cstdio>

#include "strong_approx/strong_approx.hpp"

namespace sa = strong_approx;

int main() {
	const double tau = sa::s1_min_tau(sa::rademacher());
	std::printf("rademacher: minimal S1 tau = %.9f\n\n", tau);

	sa::ExperimentConfig cfg;
	cfg.ns = {16, 64, 256, 1024, 4096};
	cfg.trials = 400;
	cfg.seed = 7;

	std::printf("%-10s", "n");
	for (auto n : cfg.ns) std::printf("%10llu", (unsigned long long)n);
	std::printf("%10s\n", "exponent");
	for (const char* s : {"kmt", "quantile", "indep"}) {
		cfg.sampler = s;
		const auto r = sa::run_experiment(cfg, 4);
		const auto g = sa::fit_growth(r);
		std::printf("%-10s", s);
		for (double v : g.stats) std::printf("%10.3f", v);
		std::printf("%10.3f\n", g.exponent_fit);
	}

	// one path, start to finish
	const auto tree = sa::build_tree(std::vector<sa::GridDist>(8, sa::rademacher()));
	sa::Stream rng(sa::derive_seed(cfg.seed, 0, 0));
	const auto p = sa::sample_kmt(tree, rng);
	std::printf("\nk   S_k   T_k\n");
	for (std::size_t k = 0; k < p.prefix_x.size(); ++k) std::printf("%-3zu %+5.0f %+8.4f\n", k + 1, p.prefix_x[k], p.prefix_y[k]);
	std::printf("max gap %.4f\n", p.delta);
}
