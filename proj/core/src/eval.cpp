#include "dfdgcn/eval.hpp"

#include "dfdgcn/config.hpp"
#include "dfdgcn/dft.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

HiRule parse_hi_rule(const std::string &text) {
	if (text == "last_value")
		return HiRule::LastValue;
	if (text == "periodic_2016")
		return HiRule::Periodic2016;
	throw ConfigError("hi_rule must be last_value or periodic_2016, found '" + text + "'");
}

std::string hi_rule_name(HiRule rule) {
	return rule == HiRule::LastValue ? "last_value" : "periodic_2016";
}

Tensor hi_baseline(const Window &window, std::size_t target_channel) {
	const std::size_t n = window.x_raw.dim(0), t = window.x_raw.dim(2);
	Tensor out({n, kWindowOut});
	for (std::size_t node = 0; node < n; ++node) {
		const double last = window.x_raw.at(node, target_channel, t - 1);
		for (std::size_t h = 0; h < kWindowOut; ++h)
			out.at(node, h) = last;
	}
	return out;
}

Tensor hi_periodic(const TrafficDataset &ds, const Window &window, std::size_t target_channel) {
	Tensor out = hi_baseline(window, target_channel);
	for (std::size_t h = 0; h < kWindowOut; ++h) {
		const std::size_t step = window.start + kWindowIn + h;
		if (step < kStepsPerWeek)
			continue;
		for (std::size_t node = 0; node < ds.nodes(); ++node)
			out.at(node, h) = ds.value(step - kStepsPerWeek, node, target_channel);
	}
	return out;
}

MetricsReport evaluate_hi(const TrafficDataset &ds, const WindowView &view, HiRule rule, std::size_t target_channel,
                          const std::function<void(std::size_t, const Window &, const Tensor &)> &on_prediction) {
	MetricsAccumulator acc(kWindowOut);
	for (std::size_t i = 0; i < view.size(); ++i) {
		const Window w = view.at(i);
		const Tensor pred = rule == HiRule::LastValue ? hi_baseline(w, target_channel) : hi_periodic(ds, w, target_channel);
		acc.add(pred, w.y);
		if (on_prediction)
			on_prediction(i, w, pred);
	}
	return acc.report();
}

// ---------------------------------------------------------------------------
// Ablation

const MetricsReport &AblationResult::mean(const GraphMode &mode) const {
	for (const auto &[m, r] : means)
		if (m == mode)
			return r;
	throw std::out_of_range("no ablation row for " + mode.label());
}

std::vector<GraphMode> table_order(std::vector<GraphMode> modes) {
	const auto grid = ablation_grid();
	auto rank = [&](const GraphMode &m) {
		const auto it = std::find(grid.begin(), grid.end(), m);
		return static_cast<std::size_t>(it - grid.begin());
	};
	std::stable_sort(modes.begin(), modes.end(), [&](const GraphMode &a, const GraphMode &b) { return rank(a) < rank(b); });
	modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
	return modes;
}

AblationResult run_ablation(const TrafficDataset &ds, const AblationConfig &config,
                            const std::function<void(const AblationRun &)> &on_run) {
	if (config.seeds.empty())
		throw std::invalid_argument("ablation needs at least one seed");
	if (config.grid.empty())
		throw std::invalid_argument("ablation grid is empty");
	const SplitRanges ranges = split(ds.steps());
	require_windows(ranges);
	const Normalizer norm = Normalizer::fit(ds, ranges.train);
	const SplitWindows train(ds, ranges.train, norm, config.target_channel);
	const SplitWindows val(ds, ranges.val, norm, config.target_channel);
	const SplitWindows test(ds, ranges.test, norm, config.target_channel);
	const LossContext ctx{&norm, config.target_channel, config.train.threads};

	AblationResult result;
	for (const GraphMode &mode : table_order(config.grid)) {
		std::optional<PredefinedGraphs> predefined;
		if (mode.predefined)
			predefined = build_predefined(require_distances(ds), ds.nodes(), config.model.kappa);
		std::vector<MetricsReport> reports;
		for (std::uint64_t seed : config.seeds) {
			ModelConfig mc = config.model;
			mc.graph_mode = mode;
			mc.n_nodes = ds.nodes();
			mc.in_channels = ds.channels();
			mc.seed = seed;
			TrainConfig tc = config.train;
			tc.seed = seed;
			DfdgcnModel model(mc, predefined);
			AblationRun run;
			run.mode = mode;
			run.seed = seed;
			run.fit = fit(model, train, val, ctx, tc);
			run.test = evaluate_model(model, test, ctx, config.max_test_windows);
			reports.push_back(run.test);
			if (on_run)
				on_run(run);
			result.runs.push_back(std::move(run));
		}
		result.means.emplace_back(mode, mean_report(reports));
	}
	return result;
}

std::string ablation_csv(const AblationResult &result) {
	std::string out = metrics_csv_header();
	for (const auto &run : result.runs)
		out += metrics_csv_rows(run.mode.label(), std::to_string(run.seed), run.test);
	for (const auto &[mode, report] : result.means)
		out += metrics_csv_rows(mode.label(), "mean", report);
	return out;
}

std::vector<std::pair<std::string, MetricsReport>> read_metrics_csv(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in)
		throw std::runtime_error("cannot open " + path.string());
	std::string line;
	if (!std::getline(in, line) || line + "\n" != metrics_csv_header())
		throw std::runtime_error(path.string() + ": expected header " + metrics_csv_header().substr(0, 33));
	std::vector<std::string> labels;
	std::map<std::string, std::map<std::string, MetricsReport>> by_label; // label -> seed -> report
	std::size_t lineno = 1;
	while (std::getline(in, line)) {
		++lineno;
		if (line.empty())
			continue;
		std::vector<std::string> f;
		std::stringstream ss(line);
		std::string field;
		while (std::getline(ss, field, ','))
			f.push_back(field);
		if (f.size() != 6)
			throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
		if (f[1] == "mean")
			continue;
		if (!by_label.count(f[0]))
			labels.push_back(f[0]);
		MetricsReport &r = by_label[f[0]][f[1]];
		MetricCell cell{parse_double("mae", f[3]), parse_double("rmse", f[4]), parse_double("mape", f[5]), 0};
		if (f[2] == "avg") {
			r.avg = cell;
		} else {
			const std::size_t h = parse_size("horizon", f[2]);
			bool found = false;
			for (std::size_t i = 0; i < MetricsReport::kHorizons.size(); ++i)
				if (MetricsReport::kHorizons[i] == h) {
					r.at[i] = cell;
					found = true;
				}
			if (!found)
				throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": unknown horizon " + f[2]);
		}
	}
	std::vector<std::pair<std::string, MetricsReport>> out;
	for (const auto &label : labels) {
		std::vector<MetricsReport> reports;
		for (const auto &[seed, r] : by_label[label])
			reports.push_back(r);
		out.emplace_back(label, mean_report(reports));
	}
	return out;
}

// ---------------------------------------------------------------------------
// Similarity

SimilarityMatrices similarity_matrices(const TrafficDataset &ds, StepRange span, std::size_t channel) {
	if (span.size() == 0 || span.end > ds.steps())
		throw std::invalid_argument("similarity span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
		                            ") outside " + std::to_string(ds.steps()) + " steps");
	if (channel >= ds.channels())
		throw std::invalid_argument("similarity channel outside the dataset");
	const std::size_t n = ds.nodes();
	std::vector<std::vector<double>> series(n), spectra(n);
	for (std::size_t node = 0; node < n; ++node) {
		for (std::size_t t = span.begin; t < span.end; ++t)
			series[node].push_back(ds.value(t, node, channel));
		spectra[node] = magnitude(dft_real(series[node]));
	}
	SimilarityMatrices out{Tensor({n, n}), Tensor({n, n})};
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t j = i; j < n; ++j) {
			const double tc = cosine_similarity(series[i], series[j]);
			const double fc = cosine_similarity(spectra[i], spectra[j]);
			out.time.at(i, j) = out.time.at(j, i) = tc;
			out.frequency.at(i, j) = out.frequency.at(j, i) = fc;
		}
	return out;
}

void write_matrix_csv(const std::filesystem::path &path, const Tensor &m) {
	if (m.rank() != 2)
		throw std::invalid_argument("write_matrix_csv expects a matrix, found " + shape_string(m.shape()));
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw std::runtime_error("cannot write " + path.string());
	for (std::size_t i = 0; i < m.dim(0); ++i) {
		for (std::size_t j = 0; j < m.dim(1); ++j)
			out << (j ? "," : "") << format_double(m.at(i, j));
		out << "\n";
	}
}

} // namespace dfdgcn
