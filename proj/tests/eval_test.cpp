#include "dfdgcn/eval.hpp"
#include "dfdgcn/kernels.hpp"
#include "dfdgcn/metrics.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

using namespace dfdgcn;
namespace fs = std::filesystem;
using dfdgcn::testing::random_tensor;

namespace {

struct NaiveCell {
	double mae, rmse, mape;
};

/// Spreadsheet-style recomputation: collect the unmasked rows, then average.
NaiveCell naive_metrics(const Tensor &pred, const Tensor &target, std::optional<std::size_t> horizon) {
	std::vector<double> abs_err, sq_err, pct_err;
	const std::size_t h = pred.shape().back();
	for (std::size_t i = 0; i < pred.size(); ++i) {
		if (horizon && i % h != *horizon)
			continue;
		if (target[i] == 0.0)
			continue;
		const double e = pred[i] - target[i];
		abs_err.push_back(std::fabs(e));
		sq_err.push_back(e * e);
		pct_err.push_back(std::fabs(e) / std::fabs(target[i]));
	}
	const double n = static_cast<double>(abs_err.size());
	return {std::accumulate(abs_err.begin(), abs_err.end(), 0.0) / n,
	        std::sqrt(std::accumulate(sq_err.begin(), sq_err.end(), 0.0) / n),
	        100.0 * std::accumulate(pct_err.begin(), pct_err.end(), 0.0) / n};
}

void expect_cell(const MetricCell &c, const NaiveCell &ref, double tol) {
	EXPECT_NEAR(c.mae, ref.mae, tol);
	EXPECT_NEAR(c.rmse, ref.rmse, tol);
	EXPECT_NEAR(c.mape, ref.mape, tol);
}

void expect_reports_near(const MetricsReport &a, const MetricsReport &b, double tol) {
	for (std::size_t i = 0; i < 3; ++i) {
		EXPECT_NEAR(a.at[i].mae, b.at[i].mae, tol);
		EXPECT_NEAR(a.at[i].rmse, b.at[i].rmse, tol);
		EXPECT_NEAR(a.at[i].mape, b.at[i].mape, tol);
	}
	EXPECT_NEAR(a.avg.mae, b.avg.mae, tol);
	EXPECT_NEAR(a.avg.rmse, b.avg.rmse, tol);
	EXPECT_NEAR(a.avg.mape, b.avg.mape, tol);
}

Tensor sparse_target(Shape shape, std::mt19937_64 &rng) {
	Tensor t = random_tensor(std::move(shape), rng, 1, 100);
	std::bernoulli_distribution zero(0.15);
	for (auto &v : t.data())
		if (zero(rng))
			v = 0.0;
	return t;
}

} // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, PerfectPrediction) {
	std::mt19937_64 rng(1);
	const Tensor y = random_tensor({3, 4, 12}, rng, 1, 5);
	const auto r = compute_metrics(y, y);
	for (const auto &c : r.at) {
		EXPECT_EQ(c.mae, 0.0);
		EXPECT_EQ(c.rmse, 0.0);
		EXPECT_EQ(c.mape, 0.0);
	}
	EXPECT_EQ(r.avg.mape, 0.0);
	EXPECT_TRUE(r.warnings.empty());
}

TEST(Metrics, SingleEntry) {
	const auto r = compute_metrics(Tensor::vector({2}), Tensor::vector({1}));
	EXPECT_EQ(r.avg.mae, 1.0);
	EXPECT_EQ(r.avg.rmse, 1.0);
	EXPECT_EQ(r.avg.mape, 100.0);
}

TEST(Metrics, MatchesNaiveRecomputation) {
	std::mt19937_64 rng(2);
	const Tensor target = sparse_target({5, 20, 12}, rng);
	const Tensor pred = random_tensor({5, 20, 12}, rng, 0, 120);
	const auto r = compute_metrics(pred, target);
	expect_cell(r.avg, naive_metrics(pred, target, std::nullopt), 1e-10);
	for (std::size_t i = 0; i < 3; ++i)
		expect_cell(r.at[i], naive_metrics(pred, target, MetricsReport::kHorizons[i] - 1), 1e-10);
	EXPECT_EQ(&r.horizon(6), &r.at[1]);
	EXPECT_THROW(r.horizon(5), std::out_of_range);
}

TEST(Metrics, HundredEntryCase) {
	std::mt19937_64 rng(3);
	const Tensor target = sparse_target({100, 1}, rng);
	const Tensor pred = random_tensor({100, 1}, rng, 0, 120);
	expect_cell(compute_metrics(pred, target).avg, naive_metrics(pred, target, std::nullopt), 1e-10);
}

TEST(Metrics, AllMaskedCellIsNanWithWarning) {
	Tensor target({2, 12}, 1.0);
	for (std::size_t n = 0; n < 2; ++n)
		target.at(n, 5) = 0.0;
	const auto r = compute_metrics(Tensor({2, 12}, 3.0), target);
	EXPECT_TRUE(std::isnan(r.horizon(6).mae));
	EXPECT_TRUE(std::isnan(r.horizon(6).mape));
	ASSERT_EQ(r.warnings.size(), 1u);
	EXPECT_NE(r.warnings[0].find("@6"), std::string::npos);
	EXPECT_EQ(r.horizon(3).mae, 2.0);
}

TEST(Metrics, RmseDominatesMae) {
	std::mt19937_64 rng(4);
	for (int trial = 0; trial < 20; ++trial) {
		const auto r = compute_metrics(random_tensor({4, 12}, rng, -5, 5), sparse_target({4, 12}, rng));
		for (const auto &c : r.at) {
			EXPECT_GE(c.mae, 0.0);
			EXPECT_GE(c.rmse, c.mae);
			EXPECT_GE(c.mape, 0.0);
		}
	}
}

TEST(Metrics, MaskedMae) {
	EXPECT_DOUBLE_EQ(masked_mae(Tensor::vector({1, 2}), Tensor::vector({1, 3})), 0.5);
	EXPECT_DOUBLE_EQ(masked_mae(Tensor::vector({9, 5}), Tensor::vector({0, 5})), 0.0);
	EXPECT_DOUBLE_EQ(masked_mae(Tensor::vector({9, 5}), Tensor::vector({0, 0})), 0.0);
}

TEST(MetricsProperty, PermutationInvariance) {
	std::mt19937_64 rng(5);
	const std::size_t b = 6, n = 7, h = 12;
	const Tensor target = sparse_target({b, n, h}, rng);
	const Tensor pred = random_tensor({b, n, h}, rng, 0, 120);
	std::vector<std::size_t> pb(b), pn(n);
	std::iota(pb.begin(), pb.end(), 0);
	std::iota(pn.begin(), pn.end(), 0);
	std::shuffle(pb.begin(), pb.end(), rng);
	std::shuffle(pn.begin(), pn.end(), rng);
	Tensor pt({b, n, h}), pp({b, n, h});
	for (std::size_t i = 0; i < b; ++i)
		for (std::size_t j = 0; j < n; ++j)
			for (std::size_t k = 0; k < h; ++k) {
				pt.at(pb[i], pn[j], k) = target.at(i, j, k);
				pp.at(pb[i], pn[j], k) = pred.at(i, j, k);
			}
	expect_reports_near(compute_metrics(pp, pt), compute_metrics(pred, target), 1e-12);
}

TEST(MetricsProperty, MaskedEntriesNeverMatter) {
	std::mt19937_64 rng(6);
	const Tensor target = sparse_target({3, 12}, rng);
	const Tensor pred = random_tensor({3, 12}, rng, 0, 120);
	const auto base = compute_metrics(pred, target);
	// Append two extra nodes whose targets are all zero.
	const Tensor wide_target = kernels::concat({target, Tensor({2, 12})}, 0);
	const Tensor wide_pred = kernels::concat({pred, random_tensor({2, 12}, rng, -1e6, 1e6)}, 0);
	const auto wide = compute_metrics(wide_pred, wide_target);
	expect_reports_near(wide, base, 0.0);
	// Changing predictions at masked entries changes nothing either.
	Tensor altered = pred;
	for (std::size_t i = 0; i < altered.size(); ++i)
		if (target[i] == 0.0)
			altered[i] = 1e9;
	expect_reports_near(compute_metrics(altered, target), base, 0.0);
}

TEST(Metrics, StreamingEqualsOneShot) {
	std::mt19937_64 rng(7);
	const Tensor t1 = sparse_target({4, 12}, rng), t2 = sparse_target({4, 12}, rng);
	const Tensor p1 = random_tensor({4, 12}, rng, 0, 50), p2 = random_tensor({4, 12}, rng, 0, 50);
	MetricsAccumulator acc;
	acc.add(p1, t1);
	acc.add(p2, t2);
	expect_reports_near(acc.report(), compute_metrics(kernels::concat({p1, p2}, 0), kernels::concat({t1, t2}, 0)),
	                    1e-12);
}

TEST(Metrics, CsvRowsAndTable) {
	const auto r = compute_metrics(Tensor({1, 12}, 2.0), Tensor({1, 12}, 1.0));
	EXPECT_EQ(metrics_csv_header(), "graphs,seed,horizon,mae,rmse,mape\n");
	const std::string rows = metrics_csv_rows("D+SA", "2", r);
	std::istringstream in(rows);
	std::string line;
	std::vector<std::string> horizons;
	while (std::getline(in, line)) {
		EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5) << line;
		EXPECT_EQ(line.rfind("D+SA,2,", 0), 0u) << line;
		horizons.push_back(line.substr(7, line.find(',', 7) - 7));
	}
	EXPECT_EQ(horizons, (std::vector<std::string>{"3", "6", "12", "avg"}));
	const std::string table = render_table({{"HI", r}});
	EXPECT_NE(table.find("@3"), std::string::npos);
	EXPECT_NE(table.find("@12"), std::string::npos);
	EXPECT_NE(table.find("Avg"), std::string::npos);
	EXPECT_NE(table.find("100.00"), std::string::npos);
}

TEST(Metrics, CosineSimilarity) {
	const std::vector<double> a{1, 2, 3}, b{2, 4, 6}, c{-3, 0, 1}, z{0, 0, 0};
	EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-15);
	EXPECT_NEAR(cosine_similarity(a, c), 0.0, 1e-15);
	EXPECT_EQ(cosine_similarity(a, z), 0.0);
}

// ---------------------------------------------------------------------------
// Historical inertia

TEST(HistoricalInertia, RepeatsLastValue) {
	Window w;
	w.x_raw = Tensor({3, 1, 12}, 1.0);
	for (std::size_t n = 0; n < 3; ++n)
		w.x_raw.at(n, 0, 11) = 7.0;
	const Tensor p = hi_baseline(w);
	EXPECT_EQ(p.shape(), (Shape{3, 12}));
	for (double v : p.values())
		EXPECT_EQ(v, 7.0);
}

TEST(HistoricalInertia, PeriodicReplaysLastWeek) {
	auto ds = synth_timeshift(dfdgcn::testing::small_synth(3, 2016 * 2)).dataset;
	const Normalizer norm = Normalizer::fit(ds, {0, 2016});
	SplitWindows view(ds, {0, ds.steps()}, norm);
	const Window late = view.at(2100);
	const Tensor p = hi_periodic(ds, late);
	for (std::size_t h = 0; h < 12; ++h)
		EXPECT_EQ(p.at(1, h), ds.value(2100 + 12 + h - 2016, 1, 0));
	// Without a week of history the rule falls back to the last value.
	const Window early = view.at(5);
	EXPECT_EQ(hi_periodic(ds, early), hi_baseline(early));
	EXPECT_EQ(parse_hi_rule("periodic_2016"), HiRule::Periodic2016);
	EXPECT_THROW(parse_hi_rule("weekly"), ConfigError);
}

TEST(HistoricalInertia, DeterministicAndNearConstantAcrossHorizons) {
	auto ds = synth_timeshift(dfdgcn::testing::small_synth(4, 1200)).dataset;
	const auto r = split(ds.steps());
	const Normalizer norm = Normalizer::fit(ds, r.train);
	SplitWindows test(ds, r.test, norm);
	const auto a = evaluate_hi(ds, test, HiRule::LastValue);
	const auto b = evaluate_hi(ds, test, HiRule::LastValue);
	expect_reports_near(a, b, 0.0);
	// Persistence error grows with the horizon.
	EXPECT_LT(a.horizon(3).mae, a.horizon(12).mae);
}

// ---------------------------------------------------------------------------
// Ablation

TEST(Ablation, TableOrder) {
	const auto ordered = table_order({GraphMode::parse("D+P+SA"), GraphMode::parse("T"), GraphMode::parse("P"),
	                                  GraphMode::parse("T"), GraphMode::parse("D+SA")});
	std::vector<std::string> labels;
	for (const auto &m : ordered)
		labels.push_back(m.label());
	EXPECT_EQ(labels, (std::vector<std::string>{"P", "T", "D+SA", "D+P+SA"}));
}

TEST(Ablation, SingleModeSingleSeed) {
	const auto ds = synth_timeshift(dfdgcn::testing::small_synth(4, 400)).dataset;
	AblationConfig cfg;
	cfg.grid = {GraphMode::parse("D")};
	cfg.seeds = {5};
	cfg.model = dfdgcn::testing::small_model(4, "D");
	cfg.train.max_epochs = 1;
	cfg.train.max_batches_per_epoch = 2;
	cfg.train.batch_size = 8;
	cfg.train.threads = 1;
	cfg.max_test_windows = 16;
	std::size_t seen = 0;
	const auto result = run_ablation(ds, cfg, [&](const AblationRun &) { ++seen; });
	EXPECT_EQ(seen, 1u);
	ASSERT_EQ(result.runs.size(), 1u);
	ASSERT_EQ(result.means.size(), 1u);
	EXPECT_EQ(result.runs[0].seed, 5u);
	EXPECT_EQ(result.mean(GraphMode::parse("D")).avg.mae, result.runs[0].test.avg.mae);
	EXPECT_THROW(result.mean(GraphMode::parse("T")), std::out_of_range);

	const std::string csv = ablation_csv(result);
	std::istringstream in(csv);
	std::string line;
	std::getline(in, line);
	EXPECT_EQ(line, "graphs,seed,horizon,mae,rmse,mape");
	std::size_t rows = 0, mean_rows = 0;
	while (std::getline(in, line)) {
		++rows;
		if (line.find(",mean,") != std::string::npos)
			++mean_rows;
	}
	EXPECT_EQ(rows, 8u);
	EXPECT_EQ(mean_rows, 4u);
}

TEST(Ablation, PredefinedModeNeedsDistances) {
	auto ds = synth_timeshift(dfdgcn::testing::small_synth(4, 400)).dataset;
	ds.distances.reset();
	AblationConfig cfg;
	cfg.grid = {GraphMode::parse("P")};
	cfg.seeds = {1};
	cfg.model = dfdgcn::testing::small_model(4, "P");
	EXPECT_THROW(run_ablation(ds, cfg), std::runtime_error);
}

TEST(Ablation, ReadMetricsCsvAveragesSeeds) {
	const fs::path path = fs::temp_directory_path() / "dfdgcn_eval_metrics.csv";
	MetricsReport r1, r2;
	r1.avg = {1.0, 2.0, 10.0, 0};
	r2.avg = {3.0, 4.0, 30.0, 0};
	for (auto *r : {&r1, &r2})
		for (auto &c : r->at)
			c = r->avg;
	{
		std::ofstream out(path);
		out << metrics_csv_header() << metrics_csv_rows("D", "1", r1) << metrics_csv_rows("D", "2", r2)
		    << metrics_csv_rows("D", "mean", r1) << metrics_csv_rows("HI", "0", r2);
	}
	const auto rows = read_metrics_csv(path);
	fs::remove(path);
	ASSERT_EQ(rows.size(), 2u);
	EXPECT_EQ(rows[0].first, "D");
	EXPECT_DOUBLE_EQ(rows[0].second.avg.mae, 2.0);
	EXPECT_DOUBLE_EQ(rows[0].second.horizon(12).mape, 20.0);
	EXPECT_EQ(rows[1].first, "HI");
}

// ---------------------------------------------------------------------------
// Similarity

TEST(Similarity, DiagonalOneAndSymmetric) {
	const auto ds = synth_timeshift(dfdgcn::testing::small_synth(6, 600)).dataset;
	const auto m = similarity_matrices(ds, {100, 388});
	for (const Tensor *t : {&m.time, &m.frequency}) {
		for (std::size_t i = 0; i < 6; ++i) {
			EXPECT_NEAR(t->at(i, i), 1.0, 1e-12);
			for (std::size_t j = 0; j < 6; ++j)
				EXPECT_NEAR(t->at(i, j), t->at(j, i), 1e-12);
		}
	}
	EXPECT_THROW(similarity_matrices(ds, {500, 700}), std::invalid_argument);
}

TEST(Similarity, LagThreePairZeroNoise) {
	SynthConfig cfg;
	cfg.n_nodes = 2;
	cfg.n_sources = 1;
	cfg.n_steps = 1152;
	cfg.noise_sigma = 0.0;
	cfg.lags = {0, 3};
	const auto ds = synth_timeshift(cfg).dataset;
	const auto m = similarity_matrices(ds, {288, 576});
	EXPECT_NEAR(m.frequency.at(0, 1), 1.0, 1e-9);
	EXPECT_LT(m.time.at(0, 1), 1.0 - 1e-3);
}
