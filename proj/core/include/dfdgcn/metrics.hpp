#pragma once

#include "dfdgcn/tensor.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dfdgcn {

struct MetricCell {
	double mae = 0.0;
	double rmse = 0.0;
	double mape = 0.0; // percent
	std::size_t count = 0;
};

/// Masked MAE/RMSE/MAPE at horizons 3, 6, 12 and pooled over all horizons.
struct MetricsReport {
	static constexpr std::array<std::size_t, 3> kHorizons{3, 6, 12};

	std::array<MetricCell, 3> at; // @3, @6, @12
	MetricCell avg;
	/// One entry per cell left without unmasked entries (reported as NaN).
	std::vector<std::string> warnings;

	const MetricCell &horizon(std::size_t h) const;
};

/// Streaming accumulator over [N, H] (or [B, N, H]) prediction/target pairs.
/// Entries whose target is exactly zero are excluded.
class MetricsAccumulator {
public:
	explicit MetricsAccumulator(std::size_t horizons = 12);
	void add(const Tensor &pred, const Tensor &target);
	MetricsReport report() const;

private:
	struct Sums {
		double abs = 0.0, sq = 0.0, pct = 0.0;
		std::size_t count = 0;
	};
	std::vector<Sums> per_horizon_;
};

/// pred and target share a shape whose last axis is the horizon.
MetricsReport compute_metrics(const Tensor &pred, const Tensor &target);

/// Mean of |pred - target| over entries with target != 0; 0 when all masked.
double masked_mae(const Tensor &pred, const Tensor &target);

/// Cell-wise mean over reports (NaN propagates).
MetricsReport mean_report(const std::vector<MetricsReport> &reports);

/// Text table with @3, @6, @12 and Avg column groups of MAE, RMSE, MAPE.
std::string render_table(const std::vector<std::pair<std::string, MetricsReport>> &rows);

/// `graphs,seed,horizon,mae,rmse,mape` rows for one report (horizon is 3, 6,
/// 12 or avg).
std::string metrics_csv_header();
std::string metrics_csv_rows(const std::string &graphs, const std::string &seed, const MetricsReport &report);

/// Cosine similarity of two equal-length vectors (0 when either is zero).
double cosine_similarity(std::span<const double> a, std::span<const double> b);

} // namespace dfdgcn
