#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
	int rc = -1;
	std::string out;
};

Result cli(const std::string& args) {
	const std::string cmd = std::string(SA_CLI_PATH) + " " + args + " 2>/dev/null";
	Result r;
	FILE* p = ::popen(cmd.c_str(), "r");
	if (!p) return r;
	std::array<char, 4096> buf;
	for (std::size_t k; (k = std::fread(buf.data(), 1, buf.size(), p)) > 0;) r.out.append(buf.data(), k);
	const int status = ::pclose(p);
	r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
	return r;
}

std::string slurp(const fs::path& p) {
	std::ifstream in(p, std::ios::binary);
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

class CliTest : public ::testing::Test {
protected:
	fs::path dir;
	void SetUp() override {
		dir = fs::temp_directory_path() / ("sa_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
		fs::remove_all(dir);
		fs::create_directories(dir);
	}
	void TearDown() override { fs::remove_all(dir); }

	fs::path write(const std::string& name, const std::string& text) {
		std::ofstream(dir / name) << text;
		return dir / name;
	}
	fs::path small_config(const std::string& sampler = "kmt") {
		return write("cfg_" + sampler + ".json", R"({"distribution": "rademacher", "sampler": ")" + sampler +
		                                             R"(", "n": [16, 32, 64, 128], "trials": 200, "seed": 11})");
	}
};

} // namespace

TEST_F(CliTest, HelpAndUnknownCommand) {
	EXPECT_EQ(cli("--help").rc, 0);
	EXPECT_NE(cli("--help").out.find("couple"), std::string::npos);
	EXPECT_EQ(cli("frobnicate").rc, 2);
	EXPECT_EQ(cli("couple --n notanumber").rc, 2);
}

TEST_F(CliTest, RunWritesArtifactsDeterministically) {
	const auto cfg = small_config();
	const auto a = cli("run --config " + cfg.string() + " --out-dir " + (dir / "a").string());
	ASSERT_EQ(a.rc, 0);
	for (const char* f : {"results.csv", "summary.json", "growth.svg"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
	const auto summary = json::parse(a.out);
	EXPECT_EQ(summary.at("per_n").size(), 4u);
	EXPECT_EQ(slurp(dir / "a" / "summary.json"), summary.dump(2) + "\n");

	const auto b = cli("run --config " + cfg.string() + " --out-dir " + (dir / "b").string());
	ASSERT_EQ(b.rc, 0);
	EXPECT_EQ(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
	EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
	EXPECT_EQ(slurp(dir / "a" / "growth.svg"), slurp(dir / "b" / "growth.svg"));

	const auto w = cli("run --config " + cfg.string() + " --out-dir " + (dir / "w").string());
	::setenv("SA_WORKERS", "6", 1);
	const auto w6 = cli("run --config " + cfg.string() + " --out-dir " + (dir / "w6").string());
	::unsetenv("SA_WORKERS");
	EXPECT_EQ(slurp(dir / "w" / "results.csv"), slurp(dir / "w6" / "results.csv"));
}

TEST_F(CliTest, RunRejectsBadConfig) {
	EXPECT_EQ(cli("run --config " + write("bad.json", R"({"n": [16], "trials": 5})").string()).rc, 2);
	EXPECT_EQ(cli("run --config " + write("bad2.json", "{ not json").string()).rc, 2);
	EXPECT_EQ(cli("run --config " + (dir / "missing.json").string()).rc, 2);
	EXPECT_EQ(cli("run --config " + write("bad3.json", R"({"distribution": "martian", "n": [16], "trials": 100})").string()).rc, 2);
}

TEST_F(CliTest, FitCalibrateTailsReport) {
	ASSERT_EQ(cli("run --config " + small_config().string() + " --out-dir " + dir.string()).rc, 0);
	const auto csv = (dir / "results.csv").string();

	const auto fit = cli("fit --in " + csv + " --stat median");
	ASSERT_EQ(fit.rc, 0);
	const auto f = json::parse(fit.out);
	EXPECT_GT(f.at("r2").get<double>(), 0.5);
	EXPECT_LT(f.at("exponent_fit").get<double>(), 0.4);
	EXPECT_EQ(cli("fit --in " + csv + " --stat mode").rc, 2);

	const auto cal = cli("calibrate --in " + csv + " --tau 1.7632228343");
	ASSERT_EQ(cal.rc, 0);
	const auto c = json::parse(cal.out).at("calibration");
	ASSERT_TRUE(c.is_array());
	EXPECT_EQ(c.size(), 4u);
	for (const auto& row : c) EXPECT_GT(row.at("c_hat").get<double>(), 0.0);
	EXPECT_EQ(cli("calibrate --in " + csv + " --tau 0").rc, 3);

	const auto tails = cli("tails --in " + csv + " --tau 1.7632228343 --x-grid 0,1,2,4,8 --svg " + (dir / "tail.svg").string());
	ASSERT_EQ(tails.rc, 0);
	EXPECT_EQ(json::parse(tails.out).at("rows").size(), 5u);
	EXPECT_TRUE(fs::exists(dir / "tail.svg"));
	EXPECT_EQ(cli("tails --in " + csv + " --tau 1 --x-grid 2,1").rc, 2);

	const auto rep = cli("report --in " + csv + " --svg --out-dir " + (dir / "rep").string());
	ASSERT_EQ(rep.rc, 0);
	EXPECT_TRUE(fs::exists(dir / "rep" / "growth.svg"));
	EXPECT_EQ(cli("fit --in " + (dir / "nope.csv").string()).rc, 2);
}

TEST_F(CliTest, Gauge) {
	const auto s1 = cli("gauge rademacher --class s1");
	ASSERT_EQ(s1.rc, 0);
	const auto j = json::parse(s1.out);
	EXPECT_NEAR(j.at("extra").at("tau_min").get<double>(), 1.76322283435, 1e-6);
	EXPECT_TRUE(j.at("pass").get<bool>());

	const auto three = write("three.txt", "# three points\n-1 0.25\n0 0.5\n1 0.25\n");
	EXPECT_EQ(cli("gauge " + three.string() + " --class a-cum --tau 1").rc, 0);
	EXPECT_EQ(cli("gauge rademacher rademacher --class b --tau 1.5 --max-order 6 --probes 16").rc, 0);
	EXPECT_FALSE(json::parse(cli("gauge rademacher --class s1 --tau 1.0").out).at("pass").get<bool>());
	EXPECT_EQ(cli("gauge coin --class s1").rc, 2);
	EXPECT_EQ(cli("gauge rademacher --class zz").rc, 2);
}

TEST_F(CliTest, CoupleCsvAndDump) {
	const auto dump = dir / "paths.bin";
	const auto r = cli("couple --dist rademacher --n 8 --trials 5 --seed 3 --dump-paths " + dump.string());
	ASSERT_EQ(r.rc, 0);
	std::istringstream in(r.out);
	std::string line;
	int lines = 0;
	while (std::getline(in, line)) ++lines;
	EXPECT_EQ(lines, 6); // header plus one row per trial
	const auto bytes = slurp(dump);
	ASSERT_GE(bytes.size(), 16u);
	EXPECT_EQ(bytes.substr(0, 8), "SAPATH01");
	EXPECT_EQ(bytes.size(), 16u + 5u * 2u * 8u * sizeof(double));
	EXPECT_EQ(cli("couple --dist rademacher --n 8 --trials 5 --seed 3").out, r.out);
	EXPECT_EQ(cli("couple --dist rademacher --n 8 --sampler warp").rc, 2);
	EXPECT_EQ(cli("couple --dist coin --n 8").rc, 2);
}

TEST_F(CliTest, Prokhorov) {
	const auto f = write("f.txt", "0 0.5\n1 0.5\n");
	const auto g = write("g.txt", "0.5 1\n");
	const auto r = cli("prokhorov --f " + f.string() + " --g " + g.string() + " --lambda 0.25 --brute-force");
	ASSERT_EQ(r.rc, 0);
	const auto j = json::parse(r.out);
	EXPECT_DOUBLE_EQ(j.at("eps").get<double>(), 1.0);
	EXPECT_TRUE(j.at("agree").get<bool>());
	EXPECT_DOUBLE_EQ(json::parse(cli("prokhorov --f " + f.string() + " --g " + g.string() + " --lambda 0.5").out).at("eps").get<double>(), 0.0);
	const auto d = json::parse(cli("prokhorov --f " + f.string() + " --g " + g.string() + " --distance").out);
	EXPECT_NEAR(d.at("distance").get<double>(), 0.5, 1e-6);
	EXPECT_EQ(cli("prokhorov --f " + f.string() + " --g " + g.string()).rc, 2);
}

TEST_F(CliTest, Theorem4) {
	const auto spec = write("t4.json", R"({"mixtures": [{"p": 0.1, "u": "delta", "v": "rademacher", "tau": 1},
		{"p": 0.05, "u": "delta", "v": "rademacher", "tau": 1}]})");
	const auto r = cli("theorem4 --spec " + spec.string() + " --lambda 0.5 --trials 2000 --seed 4");
	ASSERT_EQ(r.rc, 0);
	const auto j = json::parse(r.out);
	EXPECT_EQ(j.at("n").get<int>(), 2);
	EXPECT_LE(j.at("estimate").get<double>(), j.at("union_bound").get<double>() + 4 * j.at("std_error").get<double>() + 1e-12);
	EXPECT_EQ(cli("theorem4 --spec " + write("bad.json", R"({"mixtures": [{"p": 2}]})").string() + " --lambda 0.5").rc, 2);
}
