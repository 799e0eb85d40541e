#ifndef STRONG_APPROX_REPORT_HPP
#define STRONG_APPROX_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "strong_approx/harness.hpp"

namespace strong_approx {

inline constexpr const char* kCsvHeader = "n,trial,delta,rejections,seed_lo,seed_hi";

inline std::string fmt_g17(double v) {
	char buf[40];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

inline std::string fmt_g6(double v) {
	char buf[40];
	std::snprintf(buf, sizeof buf, "%.6g", v);
	return buf;
}

/// First line is a comment carrying the config hash, seed, sampler and any
/// padding; then the fixed header and one row per trial.
inline std::string to_csv(const TrialResultSet& r) {
	std::ostringstream out;
	out << "# config_hash=" << hex64(r.config_hash) << ",seed=" << r.seed << ",sampler=" << r.sampler;
	if (!r.padded.empty()) {
		out << ",padded=";
		bool first = true;
		for (const auto& [n, p] : r.padded) {
			out << (first ? "" : ";") << n << ':' << p;
			first = false;
		}
	}
	if (r.failed) out << ",failed=1";
	out << '\n' << kCsvHeader << '\n';
	for (const auto& row : r.rows)
		out << row.n << ',' << row.trial << ',' << fmt_g17(row.delta) << ',' << row.rejections << ',' << row.seed_lo << ','
		    << row.seed_hi << '\n';
	return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
	const std::filesystem::path p(path);
	std::error_code ec;
	if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
	std::ofstream f(path, std::ios::binary);
	if (!f) fail(ErrorCode::IoError, "cannot write " + path);
	f << text;
	if (!f) fail(ErrorCode::IoError, "write failed for " + path);
}

inline std::string read_text(const std::string& path) {
	std::ifstream f(path, std::ios::binary);
	if (!f) fail(ErrorCode::IoError, "cannot read " + path);
	std::stringstream ss;
	ss << f.rdbuf();
	return ss.str();
}

inline void write_csv(const TrialResultSet& r, const std::string& path) { write_text(path, to_csv(r)); }

/// Parses to_csv output. When expected_hash is given the embedded hash must match.
inline TrialResultSet parse_csv(const std::string& text, std::optional<std::uint64_t> expected_hash = std::nullopt) {
	TrialResultSet r;
	std::istringstream in(text);
	std::string line;
	if (!std::getline(in, line) || line.rfind("# ", 0) != 0) fail(ErrorCode::IoError, "missing CSV metadata line");
	bool have_hash = false;
	{
		std::istringstream meta(line.substr(2));
		for (std::string kv; std::getline(meta, kv, ',');) {
			const auto eq = kv.find('=');
			if (eq == std::string::npos) continue;
			const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
			try {
				if (k == "config_hash") {
					r.config_hash = std::stoull(v, nullptr, 16);
					have_hash = true;
				} else if (k == "seed") {
					r.seed = std::stoull(v);
				} else if (k == "sampler") {
					r.sampler = v;
				} else if (k == "failed") {
					r.failed = v == "1";
				} else if (k == "padded") {
					std::istringstream ps(v);
					for (std::string pair; std::getline(ps, pair, ';');) {
						const auto c = pair.find(':');
						if (c != std::string::npos) r.padded[std::stoull(pair.substr(0, c))] = std::stoull(pair.substr(c + 1));
					}
				}
			} catch (const std::exception&) {
				fail(ErrorCode::IoError, "bad CSV metadata: " + line);
			}
		}
	}
	if (!have_hash) fail(ErrorCode::IoError, "CSV metadata has no config hash");
	if (expected_hash && *expected_hash != r.config_hash)
		fail(ErrorCode::IoError, "config hash mismatch: file " + hex64(r.config_hash) + ", expected " + hex64(*expected_hash));
	if (!std::getline(in, line) || line != kCsvHeader) fail(ErrorCode::IoError, "unexpected CSV header");
	while (std::getline(in, line)) {
		if (line.empty()) continue;
		TrialRow row;
		char c1, c2, c3, c4, c5;
		unsigned long long n, trial, rej, lo, hi;
		double delta;
		std::istringstream ls(line);
		// operator>> on double accepts every %.17g rendering
		if (!(ls >> n >> c1 >> trial >> c2 >> delta >> c3 >> rej >> c4 >> lo >> c5 >> hi) || c1 != ',' || c2 != ',' || c3 != ',' ||
		    c4 != ',' || c5 != ',')
			fail(ErrorCode::IoError, "bad CSV row: " + line);
		row.n = n;
		row.trial = trial;
		row.delta = delta;
		row.rejections = rej;
		row.seed_lo = lo;
		row.seed_hi = hi;
		r.rows.push_back(row);
	}
	return r;
}

inline TrialResultSet read_csv(const std::string& path, std::optional<std::uint64_t> expected_hash = std::nullopt) {
	return parse_csv(read_text(path), expected_hash);
}

inline nlohmann::json to_json(const GrowthFit& g) {
	nlohmann::json j{{"a", g.a}, {"b", g.b}, {"r2", g.r2}, {"n", g.ns}, {"statistic_values", g.stats}};
	if (std::isnan(g.exponent_fit)) {
		j["exponent_fit"] = nullptr;
		j["exponent_r2"] = nullptr;
	} else {
		j["exponent_fit"] = g.exponent_fit;
		j["exponent_r2"] = g.exponent_r2;
	}
	return j;
}

inline nlohmann::json to_json(const TailReport& t) {
	nlohmann::json rows = nlohmann::json::array();
	for (const auto& r : t.rows)
		rows.push_back({{"x", r.x}, {"count", r.count}, {"p_hat", r.p_hat}, {"ci_lo", r.ci_lo}, {"ci_hi", r.ci_hi}, {"envelope", r.envelope}});
	nlohmann::json j{{"n", t.n}, {"tau", t.tau}, {"c1", t.c1}, {"c1_capped", t.c1_capped}, {"rows", rows}};
	j["slope"] = std::isnan(t.slope) ? nlohmann::json(nullptr) : nlohmann::json(t.slope);
	j["slope_intercept"] = std::isnan(t.slope_intercept) ? nlohmann::json(nullptr) : nlohmann::json(t.slope_intercept);
	return j;
}

/// Per-n descriptive statistics plus the growth fit when at least four n are
/// present. Wall-clock is left out so the file is reproducible.
inline nlohmann::json summary_json(const TrialResultSet& r, const std::optional<ExperimentConfig>& cfg = std::nullopt) {
	nlohmann::json j;
	j["config_hash"] = hex64(r.config_hash);
	j["seed"] = r.seed;
	j["sampler"] = r.sampler;
	if (cfg) j["config"] = canonical_json(*cfg);
	j["failed"] = r.failed;
	if (r.failed) j["failure"] = r.failure;
	nlohmann::json padded = nlohmann::json::object();
	for (const auto& [n, p] : r.padded) padded[std::to_string(n)] = p;
	j["padded"] = padded;
	auto ns = r.distinct_n();
	std::sort(ns.begin(), ns.end());
	nlohmann::json per_n = nlohmann::json::array();
	double running = 0.0;
	for (auto n : ns) {
		const auto d = r.deltas(n);
		std::uint64_t rej = 0;
		for (const auto& row : r.rows)
			if (row.n == n) rej += row.rejections;
		nlohmann::json e{{"n", n},
		                 {"trials", d.size()},
		                 {"mean", statistic(d, Statistic::Mean)},
		                 {"median", statistic(d, Statistic::Median)},
		                 {"q90", statistic(d, Statistic::Q90)},
		                 {"max", *std::max_element(d.begin(), d.end())},
		                 {"rejections", rej}};
		// descriptive almost-sure series: running max over n of median delta / log n
		if (n >= 3) {
			running = std::max(running, statistic(d, Statistic::Median) / std::log(double(n)));
			e["running_max_delta_over_log_n"] = running;
		}
		per_n.push_back(e);
	}
	j["per_n"] = per_n;
	if (ns.size() >= 4) j["growth_median"] = to_json(fit_growth(r, Statistic::Median));
	return j;
}

struct Series {
	std::string name;
	std::vector<double> x, y;
};

/// Minimal deterministic SVG line chart. Non-finite points are skipped.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<Series>& series, std::uint64_t hash, bool log_y = false) {
	constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
	double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
	auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
	for (const auto& s : series)
		for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
			if (!std::isfinite(s.x[i]) || !std::isfinite(ty(s.y[i]))) continue;
			x0 = std::min(x0, s.x[i]);
			x1 = std::max(x1, s.x[i]);
			y0 = std::min(y0, ty(s.y[i]));
			y1 = std::max(y1, ty(s.y[i]));
		}
	if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
	if (x1 == x0) x0 -= 0.5, x1 += 0.5;
	if (y1 == y0) y0 -= 0.5, y1 += 0.5;
	auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
	auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };
	auto esc = [](const std::string& s) {
		std::string o;
		for (char c : s) {
			if (c == '<') o += "&lt;";
			else if (c == '>') o += "&gt;";
			else if (c == '&') o += "&amp;";
			else o += c;
		}
		return o;
	};
	static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

	std::ostringstream o;
	o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
	  << "\">\n";
	o << "<!-- config_hash=" << hex64(hash) << " -->\n";
	o << "<metadata>config_hash=" << hex64(hash) << "</metadata>\n";
	o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
	o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" << esc(title)
	  << "</text>\n";
	o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
	o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
	for (int k = 0; k <= 4; ++k) {
		const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
		const double xp = L + (W - L - R) * k / 4.0, yp = H - B - (H - T - B) * k / 4.0;
		o << "<text x=\"" << fmt_g6(xp) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
		  << fmt_g6(xv) << "</text>\n";
		o << "<text x=\"" << L - 6 << "\" y=\"" << fmt_g6(yp + 4) << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
		  << (log_y ? "1e" + fmt_g6(yv) : fmt_g6(yv)) << "</text>\n";
	}
	o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
	  << esc(x_label) << "</text>\n";
	o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
	  << (T + H - B) / 2 << ")\">" << esc(y_label) << "</text>\n";
	for (std::size_t si = 0; si < series.size(); ++si) {
		const auto& s = series[si];
		const char* col = colors[si % 6];
		std::string pts;
		for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
			if (!std::isfinite(s.x[i]) || !std::isfinite(ty(s.y[i]))) continue;
			pts += fmt_g6(px(s.x[i])) + "," + fmt_g6(py(s.y[i])) + " ";
		}
		if (!pts.empty()) pts.pop_back();
		o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
		o << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (si + 1) << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
		  << col << "\">" << esc(s.name) << "</text>\n";
	}
	o << "</svg>\n";
	return o.str();
}

/// Delta statistics (mean, median, q90) against log n.
inline std::string growth_svg(const TrialResultSet& r) {
	auto ns = r.distinct_n();
	std::sort(ns.begin(), ns.end());
	Series mean_s{"mean", {}, {}}, med_s{"median", {}, {}}, q90_s{"q90", {}, {}};
	for (auto n : ns) {
		const auto d = r.deltas(n);
		const double x = std::log(double(n));
		mean_s.x.push_back(x);
		med_s.x.push_back(x);
		q90_s.x.push_back(x);
		mean_s.y.push_back(statistic(d, Statistic::Mean));
		med_s.y.push_back(statistic(d, Statistic::Median));
		q90_s.y.push_back(statistic(d, Statistic::Q90));
	}
	std::vector<Series> s;
	if (!ns.empty()) s = {mean_s, med_s, q90_s};
	return svg_line_chart("delta vs log n (" + r.sampler + ")", "log n", "delta", s, r.config_hash);
}

/// Empirical exceedance and its envelope on a log scale.
inline std::string tail_svg(const TailReport& t, std::uint64_t hash) {
	Series emp{"empirical", {}, {}}, env{"envelope", {}, {}}, hi{"99% upper", {}, {}};
	for (const auto& row : t.rows) {
		emp.x.push_back(row.x);
		emp.y.push_back(row.p_hat);
		env.x.push_back(row.x);
		env.y.push_back(std::min(1.0, row.envelope));
		hi.x.push_back(row.x);
		hi.y.push_back(row.ci_hi);
	}
	return svg_line_chart("tail at n=" + std::to_string(t.n), "x", "P(c1 delta / tau >= x)", {emp, env, hi}, hash, true);
}

} // namespace strong_approx

#endif
