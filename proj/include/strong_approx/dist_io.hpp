#ifndef STRONG_APPROX_DIST_IO_HPP
#define STRONG_APPROX_DIST_IO_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "strong_approx/grid_dist.hpp"

namespace strong_approx {

/// Named parametric family with its discretization parameters, e.g.
/// "rademacher", "coin", "centered_poisson 1", "uniform -1 1 64",
/// "gauss 1 4096 8". Underscores and colons also separate arguments.
inline GridDist family_from_words(const std::vector<std::string>& words) {
	if (words.empty()) fail(ErrorCode::ConfigError, "empty distribution name");
	const std::string& name = words[0];
	auto arg = [&](std::size_t i, const char* what) {
		if (i >= words.size()) fail(ErrorCode::ConfigError, name + ": missing " + what);
		try {
			return std::stod(words[i]);
		} catch (const std::exception&) {
			fail(ErrorCode::ConfigError, name + ": bad " + what + " '" + words[i] + "'");
		}
	};
	if (name == "rademacher") return rademacher();
	if (name == "coin") return coin();
	if (name == "delta" || name == "point") return GridDist::point_mass(words.size() > 1 ? arg(1, "location") : 0.0);
	if (name == "centered_poisson" || name == "poisson") return centered_poisson(arg(1, "rate"));
	if (name == "uniform") return uniform_grid(arg(1, "a"), arg(2, "b"), std::size_t(arg(3, "n_cells")));
	if (name == "gauss") {
		const double sigma = arg(1, "sigma");
		const auto cells = words.size() > 2 ? std::size_t(arg(2, "n_cells")) : std::size_t(4096);
		const double span = words.size() > 3 ? arg(3, "span") : 8.0;
		return gauss_grid(sigma, cells, span);
	}
	fail(ErrorCode::ConfigError, "unknown distribution family '" + name + "'");
}

inline GridDist parse_family(const std::string& text) {
	std::string t = text;
	// "centered_poisson" is a name, so only split on the remaining separators.
	for (char& c : t)
		if (c == ':' || c == ',') c = ' ';
	std::istringstream in(t);
	std::vector<std::string> words;
	for (std::string w; in >> w;) words.push_back(w);
	return family_from_words(words);
}

/// JSON literal: {"points": [[x, p], ...]} or {"family": "gauss", "sigma": 1, ...}
/// or a bare family string.
inline GridDist dist_from_json(const nlohmann::json& j) {
	if (j.is_string()) return parse_family(j.get<std::string>());
	if (!j.is_object()) fail(ErrorCode::ConfigError, "distribution literal must be an object or a family name");
	if (j.contains("points")) {
		std::vector<std::pair<double, double>> pts;
		for (const auto& e : j.at("points")) {
			if (!e.is_array() || e.size() != 2) fail(ErrorCode::ConfigError, "points must be [x, mass] pairs");
			pts.emplace_back(e[0].get<double>(), e[1].get<double>());
		}
		return make_grid(pts);
	}
	if (j.contains("family")) {
		const std::string fam = j.at("family").get<std::string>();
		if (fam == "centered_poisson") return centered_poisson(j.at("lambda").get<double>());
		if (fam == "uniform")
			return uniform_grid(j.at("a").get<double>(), j.at("b").get<double>(), j.at("n_cells").get<std::size_t>());
		if (fam == "gauss")
			return gauss_grid(j.at("sigma").get<double>(), j.value("n_cells", std::size_t(4096)), j.value("span", 8.0));
		if (fam == "delta") return GridDist::point_mass(j.value("at", 0.0));
		return parse_family(fam);
	}
	fail(ErrorCode::ConfigError, "distribution literal needs 'points' or 'family'");
}

/// Text literal: JSON, a family line, or one "point mass" pair per line
/// ('#' starts a comment).
inline GridDist parse_distribution(const std::string& text) {
	std::size_t first = text.find_first_not_of(" \t\r\n");
	if (first == std::string::npos) fail(ErrorCode::ConfigError, "empty distribution literal");
	if (text[first] == '{' || text[first] == '[' || text[first] == '"') {
		nlohmann::json j;
		try {
			j = nlohmann::json::parse(text);
		} catch (const nlohmann::json::exception& e) {
			fail(ErrorCode::ConfigError, std::string("bad JSON distribution: ") + e.what());
		}
		return dist_from_json(j);
	}
	std::vector<std::pair<double, double>> pts;
	std::istringstream in(text);
	for (std::string line; std::getline(in, line);) {
		if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
		std::istringstream ls(line);
		std::string a, b;
		if (!(ls >> a)) continue;
		char* end = nullptr;
		const double x = std::strtod(a.c_str(), &end);
		if (end == a.c_str() || *end != '\0') return parse_family(text);
		if (!(ls >> b)) fail(ErrorCode::ConfigError, "point without mass: " + line);
		pts.emplace_back(x, std::stod(b));
	}
	return make_grid(pts);
}

/// A path to a readable file is loaded; anything else is parsed as a literal.
inline GridDist load_distribution(const std::string& path_or_name) {
	std::ifstream in(path_or_name);
	if (!in) return parse_family(path_or_name);
	std::stringstream ss;
	ss << in.rdbuf();
	return parse_distribution(ss.str());
}

} // namespace strong_approx

#endif
