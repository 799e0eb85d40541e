#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "strong_approx/strong_approx.hpp"

namespace sa = strong_approx;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(sa::ErrorCode c) {
	switch (c) {
	case sa::ErrorCode::ConfigError:
	case sa::ErrorCode::IoError:
	case sa::ErrorCode::InvalidArgument:
	case sa::ErrorCode::UnsupportedLaw:
	case sa::ErrorCode::NotCentered:
	case sa::ErrorCode::NonPositive:
	case sa::ErrorCode::OutOfDomain:
	case sa::ErrorCode::NegativeMass:
	case sa::ErrorCode::LengthMismatch:
	case sa::ErrorCode::BadPartition:
	case sa::ErrorCode::NotPowerOfTwo:
	case sa::ErrorCode::SupportTooLargeForBruteForce:
	case sa::ErrorCode::StepTooCoarse:
		return kExitConfig;
	default:
		return kExitNumeric;
	}
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

json load_json_file(const std::string& path) {
	const std::string text = sa::read_text(path);
	try {
		return json::parse(text);
	} catch (const json::exception& e) {
		sa::fail(sa::ErrorCode::ConfigError, path + ": " + e.what());
	}
}

std::uint64_t largest_n(const sa::TrialResultSet& r) {
	std::uint64_t n = 0;
	for (auto v : r.distinct_n()) n = std::max(n, v);
	if (n == 0) sa::fail(sa::ErrorCode::InsufficientData, "result file has no rows");
	return n;
}

std::vector<double> parse_grid(const std::string& text) {
	std::vector<double> out;
	std::string t = text;
	for (char& c : t)
		if (c == ',') c = ' ';
	std::istringstream in(t);
	for (double v; in >> v;) out.push_back(v);
	if (out.empty() || !in.eof()) sa::fail(sa::ErrorCode::ConfigError, "bad x grid '" + text + "'");
	return out;
}

std::vector<double> default_x_grid() {
	std::vector<double> g;
	for (int k = 0; k <= 40; ++k) g.push_back(0.25 * k);
	return g;
}

sa::MixtureSpec mixture_from_json(const json& j) {
	sa::MixtureSpec m;
	m.p = j.value("p", 0.0);
	m.tau = j.value("tau", 1.0);
	if (j.contains("u")) m.u = sa::dist_from_json(j.at("u"));
	if (j.contains("v")) m.v = sa::dist_from_json(j.at("v"));
	return m;
}

void write_paths(std::ofstream& out, const std::vector<double>& x, const std::vector<double>& y) {
	// the dump format is little-endian; this tool only targets little-endian hosts
	static_assert(std::endian::native == std::endian::little);
	out.write(reinterpret_cast<const char*>(x.data()), std::streamsize(x.size() * sizeof(double)));
	out.write(reinterpret_cast<const char*>(y.data()), std::streamsize(y.size() * sizeof(double)));
}

} // namespace

int main(int argc, char** argv) {
	CLI::App app{"Strong approximation toolkit: couplings, class gauges, Prokhorov transport and experiments"};
	app.require_subcommand(1);

	// run
	std::string config_path, out_dir_override;
	auto* run = app.add_subcommand("run", "Run a Monte Carlo experiment from a JSON config");
	run->add_option("--config", config_path, "Experiment config (JSON)")->required();
	run->add_option("--out-dir", out_dir_override, "Override the config's output directory");

	// fit
	std::string in_path, stat_name = "median";
	auto* fit = app.add_subcommand("fit", "Regress a delta statistic against log n");
	fit->add_option("--in", in_path, "Results CSV")->required();
	fit->add_option("--stat", stat_name, "mean | median | q90")->capture_default_str();

	// calibrate
	double tau = 0.0, b_param = 0.0, var = 1.0;
	auto* cal = app.add_subcommand("calibrate", "Largest c with mean exp(c delta / tau) <= 1 + B / tau, per n");
	cal->add_option("--in", in_path, "Results CSV")->required();
	cal->add_option("--tau", tau, "Class parameter tau")->required();
	auto* b_opt = cal->add_option("--B", b_param, "B; defaults to sqrt(n * var) at each n");
	cal->add_option("--var", var, "Per-summand second moment used for the default B")->capture_default_str();

	// tails
	std::string x_grid_text, svg_path;
	std::uint64_t tail_n = 0;
	double c1 = 0.0;
	auto* tails = app.add_subcommand("tails", "Empirical exceedance table against the exponential envelope");
	tails->add_option("--in", in_path, "Results CSV")->required();
	tails->add_option("--tau", tau, "Class parameter tau")->required();
	tails->add_option("--n", tail_n, "Which n (default: largest)");
	tails->add_option("--var", var, "Per-summand second moment")->capture_default_str();
	tails->add_option("--x-grid", x_grid_text, "Comma-separated increasing x values");
	auto* c1_opt = tails->add_option("--c1", c1, "Use this c1 instead of calibrating");
	tails->add_option("--svg", svg_path, "Write a tail chart here");

	// report
	bool want_svg = false;
	std::string report_dir;
	auto* report = app.add_subcommand("report", "Summary JSON and charts from a results CSV");
	report->add_option("--in", in_path, "Results CSV")->required();
	report->add_flag("--svg", want_svg, "Also write growth.svg");
	report->add_option("--out-dir", report_dir, "Output directory (default: next to the CSV)");

	// gauge
	std::vector<std::string> dist_files;
	std::string class_name = "s1";
	int max_order = 12, probes = 64;
	auto* gauge = app.add_subcommand("gauge", "Class membership certificate for a law (or product of laws)");
	gauge->add_option("dists", dist_files, "Distribution files or family names (one per coordinate)")->required();
	gauge->add_option("--class", class_name, "s1 | b | a-cum | a-num")->capture_default_str();
	auto* tau_opt = gauge->add_option("--tau", tau, "tau (default: the minimal admissible tau where defined)");
	gauge->add_option("--max-order", max_order, "Highest moment/cumulant order")->capture_default_str();
	gauge->add_option("--probes", probes, "Directions or probe points")->capture_default_str();

	// couple
	std::string dist_name, sampler = "kmt", out_path, dump_path;
	std::uint64_t n = 16, seed = 1;
	std::size_t trials = 1000;
	double dt = 0.0;
	auto* couple = app.add_subcommand("couple", "Sample couplings of partial sums with Gaussian partial sums");
	couple->add_option("--dist", dist_name, "Distribution file or family name")->required();
	couple->add_option("--n", n, "Number of summands")->capture_default_str();
	couple->add_option("--sampler", sampler, "kmt | indep | quantile | skorokhod")->capture_default_str();
	couple->add_option("--trials", trials, "Trials")->capture_default_str();
	couple->add_option("--seed", seed, "Master seed")->capture_default_str();
	couple->add_option("--dt", dt, "Skorokhod time step (default a*b/100)");
	couple->add_option("--out", out_path, "Per-trial CSV (default: stdout)");
	couple->add_option("--dump-paths", dump_path, "Binary dump of every X and Y path");

	// prokhorov
	std::string f_path, g_path;
	double lambda = 0.0;
	bool distance = false, brute = false;
	auto* prok = app.add_subcommand("prokhorov", "Prokhorov excess at lambda, or the distance");
	prok->add_option("--f", f_path, "First law")->required();
	prok->add_option("--g", g_path, "Second law")->required();
	auto* lambda_opt = prok->add_option("--lambda", lambda, "Neighbourhood radius");
	auto* dist_flag = prok->add_flag("--distance", distance, "Compute the Prokhorov distance");
	prok->add_flag("--brute-force", brute, "Cross-check by enumerating sets (small supports)");
	lambda_opt->excludes(dist_flag);

	// theorem4
	std::string spec_path;
	auto* t4 = app.add_subcommand("theorem4", "Couple a product of mixtures with its accompanying compound Poisson law");
	t4->add_option("--spec", spec_path, "JSON: {\"mixtures\": [{\"p\", \"u\", \"v\", \"tau\"}, ...]}")->required();
	t4->add_option("--lambda", lambda, "Closeness radius")->required();
	t4->add_option("--trials", trials, "Monte Carlo trials")->capture_default_str();
	t4->add_option("--seed", seed, "Master seed")->capture_default_str();

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int rc = app.exit(e);
		return rc == 0 ? kExitOk : kExitConfig;
	}

	try {
		if (run->parsed()) {
			auto cfg = sa::config_from_json(load_json_file(config_path));
			if (!out_dir_override.empty()) cfg.output_dir = out_dir_override;
			const auto res = sa::run_experiment(cfg);
			const std::string base = cfg.output_dir + "/";
			sa::write_csv(res, base + "results.csv");
			const auto summary = sa::summary_json(res, cfg);
			sa::write_text(base + "summary.json", summary.dump(2) + "\n");
			sa::write_text(base + "growth.svg", sa::growth_svg(res));
			print_json(summary);
			std::fprintf(stderr, "wall clock %.3f s\n", res.wall_clock_s);
			if (res.failed) {
				std::fprintf(stderr, "experiment failed: %s\n", res.failure.c_str());
				return kExitNumeric;
			}
		} else if (fit->parsed()) {
			const auto res = sa::read_csv(in_path);
			print_json(sa::to_json(sa::fit_growth(res, sa::parse_statistic(stat_name))));
		} else if (cal->parsed()) {
			const auto res = sa::read_csv(in_path);
			auto ns = res.distinct_n();
			std::sort(ns.begin(), ns.end());
			json rows = json::array();
			for (auto nv : ns) {
				const double B = b_opt->count() > 0 ? b_param : std::sqrt(double(nv) * var);
				const auto c = sa::exp_moment_calibrate(res.deltas(nv), tau, B);
				json row{{"n", nv}, {"B", B}, {"c_hat", c.c_hat}};
				if (c.capped) row["note"] = "unbounded >= cap";
				rows.push_back(row);
			}
			print_json({{"config_hash", sa::hex64(res.config_hash)}, {"tau", tau}, {"calibration", rows}});
		} else if (tails->parsed()) {
			const auto res = sa::read_csv(in_path);
			const std::uint64_t nv = tail_n ? tail_n : largest_n(res);
			const auto grid = x_grid_text.empty() ? default_x_grid() : parse_grid(x_grid_text);
			const auto t = sa::tail_report(res.deltas(nv), tau, nv, var, grid, c1_opt->count() > 0 ? std::optional<double>(c1) : std::nullopt);
			if (!svg_path.empty()) sa::write_text(svg_path, sa::tail_svg(t, res.config_hash));
			auto j = sa::to_json(t);
			j["config_hash"] = sa::hex64(res.config_hash);
			print_json(j);
		} else if (report->parsed()) {
			const auto res = sa::read_csv(in_path);
			std::string dir = report_dir;
			if (dir.empty()) {
				const auto parent = std::filesystem::path(in_path).parent_path();
				dir = parent.empty() ? "." : parent.string();
			}
			const auto summary = sa::summary_json(res);
			sa::write_text(dir + "/summary.json", summary.dump(2) + "\n");
			if (want_svg) sa::write_text(dir + "/growth.svg", sa::growth_svg(res));
			print_json(summary);
		} else if (gauge->parsed()) {
			std::vector<sa::GridDist> laws;
			for (const auto& p : dist_files) laws.push_back(sa::load_distribution(p));
			const bool have_tau = tau_opt->count() > 0;
			sa::ClassCertificate cert;
			if (class_name == "s1" || class_name == "a-cum") {
				if (laws.size() != 1) sa::fail(sa::ErrorCode::InvalidArgument, class_name + " takes exactly one law");
				if (class_name == "s1") {
					const double t = have_tau ? tau : sa::s1_min_tau(laws[0]);
					cert = sa::s1_check(laws[0], t);
					if (!have_tau) cert.extra["tau_min"] = t;
				} else {
					const auto g = sa::cumulants(laws[0], max_order);
					const double t = have_tau ? tau : sa::statulevicius_min_tau(g);
					cert = sa::statulevicius_check(g, t);
					if (!have_tau) cert.extra["tau_min"] = t;
				}
			} else if (class_name == "b") {
				double t = tau;
				if (!have_tau) {
					t = 0.0;
					for (const auto& l : laws) t = std::max(t, sa::b_min_tau_1d(l, max_order));
				}
				cert = sa::b_class_check(laws, t, max_order, probes);
			} else if (class_name == "a-num") {
				double t = tau;
				if (!have_tau) {
					t = 0.0;
					for (const auto& l : laws) t = std::max(t, sa::a_class_tau_estimate_1d(l, max_order));
				}
				cert = sa::a_class_check_numeric(laws, t, probes);
			} else {
				sa::fail(sa::ErrorCode::ConfigError, "unknown class '" + class_name + "'");
			}
			auto j = sa::to_json(cert);
			j["min_slack"] = cert.min_slack();
			print_json(j);
		} else if (couple->parsed()) {
			if (n == 0) sa::fail(sa::ErrorCode::ConfigError, "--n must be positive");
			const auto law = sa::load_distribution(dist_name);
			std::optional<sa::SumTree> tree;
			std::optional<sa::LeafSet> leaves;
			if (sampler == "kmt") {
				tree.emplace(sa::pad_to_power_of_two(std::vector<sa::GridDist>(n, law)));
			} else if (sampler == "indep" || sampler == "quantile") {
				leaves.emplace(std::vector<sa::GridDist>(n, law));
			} else if (sampler == "skorokhod") {
				if (dt <= 0.0) dt = -law.front() * law.back() / 100.0;
			} else {
				sa::fail(sa::ErrorCode::ConfigError, "unknown sampler '" + sampler + "'");
			}
			std::ofstream csv_file;
			if (!out_path.empty()) {
				csv_file.open(out_path);
				if (!csv_file) sa::fail(sa::ErrorCode::IoError, "cannot write " + out_path);
			}
			std::ostream& csv = out_path.empty() ? std::cout : csv_file;
			std::ofstream dump;
			if (!dump_path.empty()) {
				dump.open(dump_path, std::ios::binary);
				if (!dump) sa::fail(sa::ErrorCode::IoError, "cannot write " + dump_path);
			}
			csv << "trial_id,delta,rejected_count\n";
			bool header_written = false;
			for (std::size_t t = 0; t < trials; ++t) {
				sa::Stream rng(sa::derive_seed(seed, 0, t));
				sa::CouplingPath path;
				if (tree)
					path = sa::sample_kmt(*tree, rng);
				else if (sampler == "indep")
					path = sa::sample_independent(*leaves, rng);
				else if (sampler == "quantile")
					path = sa::sample_quantile_per_summand(*leaves, rng);
				else
					path = sa::sample_skorokhod(law, n, rng, dt);
				csv << t << ',' << sa::fmt_g17(path.delta) << ',' << path.rejected << '\n';
				if (dump) {
					if (!header_written) {
						const std::uint32_t len = std::uint32_t(path.x.size()), reserved = 0;
						dump.write("SAPATH01", 8);
						dump.write(reinterpret_cast<const char*>(&len), 4);
						dump.write(reinterpret_cast<const char*>(&reserved), 4);
						header_written = true;
					}
					write_paths(dump, path.x, path.y);
				}
			}
		} else if (prok->parsed()) {
			const auto f = sa::load_distribution(f_path);
			const auto g = sa::load_distribution(g_path);
			json j;
			if (distance) {
				j["distance"] = sa::prokhorov_distance(f, g);
			} else {
				if (lambda_opt->count() == 0) sa::fail(sa::ErrorCode::ConfigError, "need --lambda or --distance");
				const auto grains = sa::prokhorov_eps_grains(f, g, lambda);
				j = {{"lambda", lambda}, {"eps", double(grains) / double(sa::kGrains)}, {"eps_grains", grains}};
				if (brute) {
					const auto bg = sa::prokhorov_eps_bruteforce_grains(f, g, lambda);
					j["bruteforce_grains"] = bg;
					j["agree"] = bg == grains;
				}
			}
			print_json(j);
		} else if (t4->parsed()) {
			const json spec = load_json_file(spec_path);
			std::vector<sa::MixtureSpec> mixtures;
			const json& list = spec.is_array() ? spec : spec.at("mixtures");
			for (const auto& m : list) mixtures.push_back(mixture_from_json(m));
			const auto r = sa::theorem4_coupling(mixtures, lambda, trials, seed);
			json j{{"n", r.n},
			       {"lambda", r.lambda},
			       {"tau", r.tau},
			       {"trials", r.trials},
			       {"factor_p_fail", r.factor_p_fail},
			       {"estimate", r.estimate},
			       {"std_error", r.std_error},
			       {"union_bound", r.union_bound},
			       {"product_prediction", r.product_prediction},
			       {"max_p", r.max_p},
			       {"sum_p2", r.sum_p2},
			       {"identical_v", r.identical_v},
			       {"c_hat", r.c_hat}};
			j["exact"] = r.exact ? json(*r.exact) : json(nullptr);
			print_json(j);
		}
	} catch (const sa::Error& e) {
		std::fprintf(stderr, "error: %s\n", e.what());
		return exit_code_for(e.code());
	} catch (const json::exception& e) {
		std::fprintf(stderr, "error [ConfigError]: %s\n", e.what());
		return kExitConfig;
	} catch (const std::exception& e) {
		std::fprintf(stderr, "error: %s\n", e.what());
		return kExitNumeric;
	}
	return kExitOk;
}
