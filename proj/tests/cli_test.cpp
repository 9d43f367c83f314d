#include "cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
	int code = 0;
	std::string out, err;
};

Result run_cli(std::initializer_list<std::string> args) {
	std::vector<std::string> owned{"dfdgcn"};
	owned.insert(owned.end(), args);
	std::vector<const char *> argv;
	for (const auto &a : owned)
		argv.push_back(a.c_str());
	std::ostringstream out, err;
	Result r;
	r.code = dfdgcn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
	r.out = out.str();
	r.err = err.str();
	return r;
}

std::string slurp(const fs::path &p) {
	std::ifstream in(p, std::ios::binary);
	return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path &p) {
	std::ifstream in(p);
	std::size_t n = 0;
	for (std::string line; std::getline(in, line);)
		++n;
	return n;
}

class CliTest : public ::testing::Test {
protected:
	void SetUp() override {
		dir_ = fs::temp_directory_path() /
		       ("dfdgcn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
		fs::remove_all(dir_);
		fs::create_directories(dir_);
	}
	void TearDown() override { fs::remove_all(dir_); }

	fs::path write_config(const std::string &name, const std::string &body) const {
		const fs::path p = dir_ / name;
		std::ofstream(p) << body;
		return p;
	}

	std::string toy_config(const std::string &mode = "D+SA") const {
		return "[data]\npath = synth\n"
		       "[synth]\nn_nodes = 4\nn_sources = 2\nn_steps = 400\nseed = 5\n"
		       "[model]\ngraph_mode = " +
		       mode +
		       "\nresidual_channels = 4\nskip_channels = 8\nend_channels = 8\n"
		       "[train]\nmax_epochs = 2\nbatch_size = 8\nmax_batches_per_epoch = 2\nthreads = 1\n"
		       "[eval]\nmax_test_windows = 10\n";
	}

	fs::path dir_;
};

} // namespace

TEST_F(CliTest, NoSubcommandIsUsageError) {
	EXPECT_EQ(run_cli({}).code, 1);
}

TEST_F(CliTest, VersionFlag) {
	const auto r = run_cli({"--version"});
	EXPECT_EQ(r.code, 0);
	EXPECT_NE(r.out.find("dfdgcn"), std::string::npos);
}

TEST_F(CliTest, MissingDataPathNamesKey) {
	const auto cfg = write_config("c.conf", "[train]\nmax_epochs = 1\n");
	const auto r = run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "o").string()});
	EXPECT_EQ(r.code, 1);
	EXPECT_NE(r.err.find("data.path"), std::string::npos);
}

TEST_F(CliTest, UnknownConfigKeyRejected) {
	const auto cfg = write_config("c.conf", "[data]\npath = synth\nbogus = 1\n");
	const auto r = run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "o").string()});
	EXPECT_EQ(r.code, 1);
	EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST_F(CliTest, TrainRerunIsByteIdentical) {
	const auto cfg = write_config("c.conf", toy_config());
	const fs::path a = dir_ / "a", b = dir_ / "b";
	ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", a.string()}).code, 0);
	ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", b.string()}).code, 0);
	for (const char *f : {"history.csv", "checkpoint.dfdg", "test_metrics.csv"}) {
		ASSERT_TRUE(fs::exists(a / f)) << f;
		EXPECT_TRUE(slurp(a / f) == slurp(b / f)) << f;
	}
	EXPECT_EQ(line_count(a / "history.csv"), 4u);
	EXPECT_TRUE(fs::exists(a / "resolved.conf"));
}

TEST_F(CliTest, SeedFlagOverridesConfig) {
	const auto cfg = write_config("c.conf", toy_config("SA"));
	const fs::path a = dir_ / "a", b = dir_ / "b";
	ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", a.string(), "--seed", "1"}).code, 0);
	ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", b.string(), "--seed", "2"}).code, 0);
	EXPECT_FALSE(slurp(a / "checkpoint.dfdg") == slurp(b / "checkpoint.dfdg"));
	EXPECT_NE(slurp(a / "resolved.conf").find("seed=1"), std::string::npos);
}

TEST_F(CliTest, EvalIsRepeatableAndDumpsPredictions) {
	const auto cfg = write_config("c.conf", toy_config());
	const fs::path t = dir_ / "t", e1 = dir_ / "e1", e2 = dir_ / "e2";
	ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", t.string()}).code, 0);
	const std::string ck = (t / "checkpoint.dfdg").string();
	const auto r1 = run_cli({"eval", "--checkpoint", ck, "--out", e1.string(), "--dump-predictions"});
	const auto r2 = run_cli({"eval", "--checkpoint", ck, "--out", e2.string(), "--dump-predictions"});
	ASSERT_EQ(r1.code, 0) << r1.err;
	EXPECT_EQ(r1.out, r2.out);
	EXPECT_EQ(slurp(e1 / "metrics.csv"), slurp(e2 / "metrics.csv"));
	EXPECT_TRUE(slurp(e1 / "predictions.csv") == slurp(e2 / "predictions.csv"));
	// header + 10 samples x 4 nodes x 12 horizons
	EXPECT_EQ(line_count(e1 / "predictions.csv"), 1u + 10u * 4u * 12u);
	EXPECT_TRUE(fs::exists(e1 / "resolved.conf"));
}

TEST_F(CliTest, EvalShapeMismatchFails) {
	const auto cfg = write_config("c.conf", toy_config("SA"));
	const fs::path t = dir_ / "t", other = dir_ / "other";
	ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", t.string()}).code, 0);
	const auto synth_cfg = write_config("s.conf", "[synth]\nn_nodes = 5\nn_steps = 400\n");
	ASSERT_EQ(run_cli({"synth", "--config", synth_cfg.string(), "--out", other.string()}).code, 0);
	const auto r = run_cli({"eval", "--checkpoint", (t / "checkpoint.dfdg").string(), "--dataset", other.string(),
	                        "--out", (dir_ / "e").string()});
	EXPECT_EQ(r.code, 1);
	EXPECT_NE(r.err.find("shape mismatch"), std::string::npos);
}

TEST_F(CliTest, EvalHistoricalInertia) {
	const auto cfg = write_config("c.conf", toy_config());
	const auto r = run_cli({"eval", "--checkpoint", "HI", "--config", cfg.string(), "--out", (dir_ / "hi").string()});
	ASSERT_EQ(r.code, 0) << r.err;
	EXPECT_NE(r.out.find("HI"), std::string::npos);
	EXPECT_TRUE(fs::exists(dir_ / "hi" / "metrics.csv"));
}

TEST_F(CliTest, EvalWithoutCheckpointFails) {
	EXPECT_EQ(run_cli({"eval", "--out", (dir_ / "e").string()}).code, 1);
}

TEST_F(CliTest, GradcheckPassesAndDetectsFault) {
	const auto cfg = write_config("c.conf", "[model]\ngraph_mode = D\nresidual_channels = 4\nskip_channels = 8\n"
	                                        "end_channels = 8\n");
	const auto ok = run_cli({"gradcheck", "--config", cfg.string(), "--out", (dir_ / "g").string()});
	EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
	EXPECT_TRUE(fs::exists(dir_ / "g" / "resolved.conf"));
	const auto bad = run_cli(
	    {"gradcheck", "--config", cfg.string(), "--out", (dir_ / "g2").string(), "--fault", "dgraph.w_adj"});
	EXPECT_EQ(bad.code, 3);
	EXPECT_NE(bad.out.find("dgraph.w_adj"), std::string::npos);
}

TEST_F(CliTest, SynthWritesDatasetAndTruth) {
	const auto cfg = write_config("c.conf", "[synth]\nn_nodes = 6\nn_steps = 300\n");
	const fs::path out = dir_ / "s";
	const auto r = run_cli({"synth", "--config", cfg.string(), "--out", out.string(), "--seed", "9"});
	ASSERT_EQ(r.code, 0) << r.err;
	EXPECT_TRUE(fs::exists(out / "values.npy"));
	EXPECT_TRUE(fs::exists(out / "truth_graph.csv"));
	EXPECT_TRUE(fs::exists(out / "resolved.conf"));
	EXPECT_NE(slurp(out / "resolved.conf").find("seed=9"), std::string::npos);
}

TEST_F(CliTest, SimilarityWritesMatrices) {
	const auto cfg = write_config("c.conf", "[data]\npath = synth\n[synth]\nn_nodes = 5\nn_steps = 600\n");
	const fs::path out = dir_ / "sim";
	const auto r = run_cli({"similarity", "--config", cfg.string(), "--out", out.string(), "--start", "0", "--length",
	                        "288"});
	ASSERT_EQ(r.code, 0) << r.err;
	EXPECT_EQ(line_count(out / "similarity_time.csv"), 5u);
	EXPECT_EQ(line_count(out / "similarity_frequency.csv"), 5u);
	EXPECT_TRUE(fs::exists(out / "resolved.conf"));
}

TEST_F(CliTest, ReportRendersTable) {
	const auto cfg = write_config("c.conf", toy_config());
	const fs::path hi = dir_ / "hi";
	ASSERT_EQ(run_cli({"eval", "--checkpoint", "HI", "--config", cfg.string(), "--out", hi.string()}).code, 0);
	const auto r = run_cli({"report", "--input", (hi / "metrics.csv").string(), "--out", (dir_ / "rep").string()});
	ASSERT_EQ(r.code, 0) << r.err;
	EXPECT_NE(r.out.find("HI"), std::string::npos);
	EXPECT_EQ(slurp(dir_ / "rep" / "report.txt"), r.out);
	EXPECT_TRUE(fs::exists(dir_ / "rep" / "resolved.conf"));
}

TEST_F(CliTest, AblateWritesCsv) {
	const auto cfg = write_config("c.conf", toy_config() + "[run]\ngrid = SA,D\nseeds = 1\n");
	const fs::path out = dir_ / "abl";
	const auto r = run_cli({"ablate", "--config", cfg.string(), "--out", out.string()});
	ASSERT_EQ(r.code, 0) << r.err;
	// header + 2 modes x (1 seed + mean) x 4 horizon rows
	EXPECT_EQ(line_count(out / "ablation.csv"), 17u);
	EXPECT_TRUE(fs::exists(out / "resolved.conf"));
}

TEST_F(CliTest, TooShortDatasetReported) {
	const auto cfg = write_config("c.conf", "[data]\npath = synth\n[synth]\nn_nodes = 3\nn_sources = 1\nn_steps = 100\n");
	const auto r = run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "o").string()});
	EXPECT_EQ(r.code, 1);
	EXPECT_NE(r.err.find("dataset too short"), std::string::npos);
}
