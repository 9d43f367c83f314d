#pragma once

#include "dfdgcn/data.hpp"
#include "dfdgcn/metrics.hpp"
#include "dfdgcn/model.hpp"
#include "dfdgcn/train.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dfdgcn {

/// Historical-inertia rules: persist the last observed value, or replay the
/// value one week (2016 steps) before each target step.
enum class HiRule { LastValue, Periodic2016 };
HiRule parse_hi_rule(const std::string &text);
std::string hi_rule_name(HiRule rule);

constexpr std::size_t kStepsPerWeek = 2016;

/// Last observed target-channel value of each node, repeated over 12 steps.
Tensor hi_baseline(const Window &window, std::size_t target_channel = 0);
/// Same-time-last-week replay; steps without a week of history fall back to
/// the last observed value.
Tensor hi_periodic(const TrafficDataset &ds, const Window &window, std::size_t target_channel = 0);

MetricsReport evaluate_hi(const TrafficDataset &ds, const WindowView &view, HiRule rule, std::size_t target_channel = 0,
                          const std::function<void(std::size_t, const Window &, const Tensor &)> &on_prediction = {});

// ---------------------------------------------------------------------------
// Ablation

struct AblationConfig {
	std::vector<GraphMode> grid = ablation_grid();
	std::vector<std::uint64_t> seeds{1, 2, 3};
	ModelConfig model;
	TrainConfig train;
	std::size_t target_channel = 0;
	/// Caps the scored test windows (0 = all).
	std::size_t max_test_windows = 0;
};

struct AblationRun {
	GraphMode mode;
	std::uint64_t seed = 0;
	MetricsReport test;
	FitResult fit;
};

struct AblationResult {
	std::vector<AblationRun> runs;                           // table order, then seed order
	std::vector<std::pair<GraphMode, MetricsReport>> means; // table order
	const MetricsReport &mean(const GraphMode &mode) const;
};

/// Sorts modes into the table order P, SA, D, T, P+SA, D+P, D+SA, D+P+SA with
/// any other subsets after them.
std::vector<GraphMode> table_order(std::vector<GraphMode> modes);

/// Trains one model per (mode, seed) on the 7:1:2 split and scores the test
/// split. `on_run` observes each finished run.
AblationResult run_ablation(const TrafficDataset &ds, const AblationConfig &config,
                            const std::function<void(const AblationRun &)> &on_run = {});

/// Per-seed rows followed by one `mean` row group per mode.
std::string ablation_csv(const AblationResult &result);

/// Reads `graphs,seed,horizon,mae,rmse,mape` rows and averages the per-seed
/// rows of each label (rows whose seed is `mean` are ignored), in first-seen
/// label order.
std::vector<std::pair<std::string, MetricsReport>> read_metrics_csv(const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Similarity diagnostics

struct SimilarityMatrices {
	Tensor time;      // [N, N] cosine of raw series
	Tensor frequency; // [N, N] cosine of DFT magnitude spectra
};

SimilarityMatrices similarity_matrices(const TrafficDataset &ds, StepRange span, std::size_t channel = 0);
void write_matrix_csv(const std::filesystem::path &path, const Tensor &m);

} // namespace dfdgcn
