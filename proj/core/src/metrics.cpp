#include "dfdgcn/metrics.hpp"

#include "dfdgcn/config.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string cell_text(double v) {
	if (std::isnan(v))
		return "nan";
	char buf[32];
	std::snprintf(buf, sizeof buf, "%.2f", v);
	return buf;
}

} // namespace

const MetricCell &MetricsReport::horizon(std::size_t h) const {
	for (std::size_t i = 0; i < kHorizons.size(); ++i)
		if (kHorizons[i] == h)
			return at[i];
	throw std::out_of_range("no metrics for horizon " + std::to_string(h));
}

MetricsAccumulator::MetricsAccumulator(std::size_t horizons) : per_horizon_(horizons) {}

void MetricsAccumulator::add(const Tensor &pred, const Tensor &target) {
	if (pred.shape() != target.shape())
		throw std::invalid_argument("metrics: prediction shape " + shape_string(pred.shape()) + " differs from target " +
		                            shape_string(target.shape()));
	if (pred.rank() == 0 || pred.shape().back() != per_horizon_.size())
		throw std::invalid_argument("metrics: expected " + std::to_string(per_horizon_.size()) +
		                            " horizons on the last axis, found " + shape_string(pred.shape()));
	const std::size_t h = per_horizon_.size();
	for (std::size_t i = 0; i < pred.size(); ++i) {
		const double y = target[i];
		if (y == 0.0)
			continue;
		const double e = pred[i] - y;
		Sums &s = per_horizon_[i % h];
		s.abs += std::abs(e);
		s.sq += e * e;
		s.pct += std::abs(e) / std::abs(y);
		++s.count;
	}
}

MetricsReport MetricsAccumulator::report() const {
	auto cell = [](const Sums &s) {
		MetricCell c;
		c.count = s.count;
		if (s.count == 0) {
			c.mae = c.rmse = c.mape = kNaN;
			return c;
		}
		const double n = static_cast<double>(s.count);
		c.mae = s.abs / n;
		c.rmse = std::sqrt(s.sq / n);
		c.mape = 100.0 * s.pct / n;
		return c;
	};
	MetricsReport r;
	for (std::size_t i = 0; i < MetricsReport::kHorizons.size(); ++i) {
		const std::size_t h = MetricsReport::kHorizons[i];
		if (h > per_horizon_.size()) {
			r.at[i].mae = r.at[i].rmse = r.at[i].mape = kNaN;
			r.warnings.push_back("horizon @" + std::to_string(h) + " is beyond the forecast length");
			continue;
		}
		r.at[i] = cell(per_horizon_[h - 1]);
		if (r.at[i].count == 0)
			r.warnings.push_back("horizon @" + std::to_string(h) + " has no unmasked entries");
	}
	Sums pooled;
	for (const auto &s : per_horizon_) {
		pooled.abs += s.abs;
		pooled.sq += s.sq;
		pooled.pct += s.pct;
		pooled.count += s.count;
	}
	r.avg = cell(pooled);
	if (r.avg.count == 0)
		r.warnings.push_back("average has no unmasked entries");
	return r;
}

MetricsReport compute_metrics(const Tensor &pred, const Tensor &target) {
	if (pred.rank() == 0)
		throw std::invalid_argument("metrics: predictions need a horizon axis");
	MetricsAccumulator acc(pred.shape().back());
	acc.add(pred, target);
	return acc.report();
}

double masked_mae(const Tensor &pred, const Tensor &target) {
	if (pred.shape() != target.shape())
		throw std::invalid_argument("masked_mae: shape " + shape_string(pred.shape()) + " vs " +
		                            shape_string(target.shape()));
	double s = 0.0;
	std::size_t n = 0;
	for (std::size_t i = 0; i < pred.size(); ++i)
		if (target[i] != 0.0) {
			s += std::abs(pred[i] - target[i]);
			++n;
		}
	return n == 0 ? 0.0 : s / static_cast<double>(n);
}

MetricsReport mean_report(const std::vector<MetricsReport> &reports) {
	if (reports.empty())
		throw std::invalid_argument("mean_report: no reports");
	MetricsReport out;
	const double k = static_cast<double>(reports.size());
	auto accumulate = [&](MetricCell &dst, const MetricCell &src) {
		dst.mae += src.mae / k;
		dst.rmse += src.rmse / k;
		dst.mape += src.mape / k;
		dst.count += src.count;
	};
	for (const auto &r : reports) {
		for (std::size_t i = 0; i < out.at.size(); ++i)
			accumulate(out.at[i], r.at[i]);
		accumulate(out.avg, r.avg);
		out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
	}
	return out;
}

std::string render_table(const std::vector<std::pair<std::string, MetricsReport>> &rows) {
	std::size_t label_width = 6;
	for (const auto &[label, _] : rows)
		label_width = std::max(label_width, label.size());
	std::ostringstream out;
	auto pad = [](const std::string &s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; };
	auto lpad = [](const std::string &s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); };
	out << lpad("", label_width);
	for (const char *group : {"@3", "@6", "@12", "Avg"})
		out << " | " << lpad(group, 23);
	out << "\n" << lpad("Model", label_width);
	for (int g = 0; g < 4; ++g)
		out << " | " << pad("MAE", 7) << pad("RMSE", 8) << pad("MAPE", 8);
	out << "\n" << std::string(label_width + 4 * 26, '-') << "\n";
	for (const auto &[label, r] : rows) {
		out << lpad(label, label_width);
		auto group = [&](const MetricCell &c) {
			out << " | " << pad(cell_text(c.mae), 7) << pad(cell_text(c.rmse), 8) << pad(cell_text(c.mape) + "%", 8);
		};
		for (const auto &c : r.at)
			group(c);
		group(r.avg);
		out << "\n";
	}
	return out.str();
}

std::string metrics_csv_header() {
	return "graphs,seed,horizon,mae,rmse,mape\n";
}

std::string metrics_csv_rows(const std::string &graphs, const std::string &seed, const MetricsReport &report) {
	std::string out;
	auto row = [&](const std::string &h, const MetricCell &c) {
		out += graphs + "," + seed + "," + h + "," + format_double(c.mae) + "," + format_double(c.rmse) + "," +
		       format_double(c.mape) + "\n";
	};
	for (std::size_t i = 0; i < report.at.size(); ++i)
		row(std::to_string(MetricsReport::kHorizons[i]), report.at[i]);
	row("avg", report.avg);
	return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
	if (a.size() != b.size())
		throw std::invalid_argument("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
		                            std::to_string(b.size()));
	double ab = 0.0, aa = 0.0, bb = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		ab += a[i] * b[i];
		aa += a[i] * a[i];
		bb += b[i] * b[i];
	}
	if (aa == 0.0 || bb == 0.0)
		return 0.0;
	return ab / (std::sqrt(aa) * std::sqrt(bb));
}

} // namespace dfdgcn
