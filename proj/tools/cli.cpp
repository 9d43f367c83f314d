#include "cli.hpp"

#include "run_config.hpp"

#include "dfdgcn/checkpoint.hpp"
#include "dfdgcn/data.hpp"
#include "dfdgcn/eval.hpp"
#include "dfdgcn/train.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dfdgcn::cli {

namespace fs = std::filesystem;

namespace {

// data.path value that generates the [synth] dataset in memory.
constexpr const char *kSynthDataset = "synth";

struct CommonFlags {
	std::string config;
	std::optional<std::uint64_t> seed;
	std::string out;
	std::string dataset;
};

void add_common(CLI::App *cmd, CommonFlags &flags) {
	cmd->add_option("--config", flags.config, "Run configuration file");
	cmd->add_option("--seed", flags.seed, "Seed for initialization, shuffling and generation");
	cmd->add_option("--out", flags.out, "Output directory");
	cmd->add_option("--dataset", flags.dataset, "Dataset directory or values file");
}

RunConfig resolve(const CommonFlags &flags) {
	RunConfig cfg = flags.config.empty() ? RunConfig{} : RunConfig::load(flags.config);
	if (flags.seed)
		cfg.set_seed(*flags.seed);
	if (!flags.out.empty())
		cfg.out = flags.out;
	if (!flags.dataset.empty())
		cfg.dataset = flags.dataset;
	return cfg;
}

fs::path prepare_out(const RunConfig &cfg) {
	const fs::path dir = cfg.out;
	fs::create_directories(dir);
	return dir;
}

void write_sidecar(const fs::path &dir, const RunConfig &cfg) {
	cfg.to_text().save(dir / "resolved.conf");
}

TrafficDataset require_dataset(const RunConfig &cfg) {
	if (cfg.dataset.empty())
		throw ConfigError("missing required key data.path (or pass --dataset)");
	if (cfg.dataset == kSynthDataset)
		return synth_timeshift(cfg.synth).dataset;
	return load_dataset(cfg.dataset);
}

std::optional<PredefinedGraphs> predefined_for(const ModelConfig &mc, const TrafficDataset &ds) {
	if (!mc.graph_mode.predefined)
		return std::nullopt;
	return build_predefined(require_distances(ds), ds.nodes(), mc.kappa);
}

void fit_shape(ModelConfig &mc, const TrafficDataset &ds) {
	mc.n_nodes = ds.nodes();
	mc.in_channels = ds.channels();
	mc.validate();
}

void write_text(const fs::path &path, const std::string &text) {
	std::ofstream f(path, std::ios::binary | std::ios::trunc);
	if (!f)
		throw std::runtime_error("cannot write " + path.string());
	f << text;
}

void print_warnings(const MetricsReport &r, std::ostream &err) {
	for (const auto &w : r.warnings)
		err << "warning: " << w << "\n";
}

class PredictionDump {
public:
	explicit PredictionDump(const fs::path &path) : file_(path, std::ios::binary | std::ios::trunc) {
		if (!file_)
			throw std::runtime_error("cannot write " + path.string());
		file_ << "sample,node,horizon,prediction,target\n";
	}
	void add(std::size_t sample, const Tensor &pred, const Tensor &target) {
		for (std::size_t n = 0; n < pred.dim(0); ++n)
			for (std::size_t h = 0; h < pred.dim(1); ++h)
				file_ << sample << "," << n << "," << h + 1 << "," << format_double(pred.at(n, h)) << ","
				      << format_double(target.at(n, h)) << "\n";
	}

private:
	std::ofstream file_;
};

// ---------------------------------------------------------------------------

int cmd_train(const CommonFlags &flags, std::ostream &out, std::ostream &err) {
	RunConfig cfg = resolve(flags);
	const TrafficDataset ds = require_dataset(cfg);
	fit_shape(cfg.model, ds);
	cfg.train.validate();
	const fs::path dir = prepare_out(cfg);
	write_sidecar(dir, cfg);

	DfdgcnModel model(cfg.model, predefined_for(cfg.model, ds));
	const SplitRanges ranges = split(ds.steps());
	require_windows(ranges);
	const Normalizer norm = Normalizer::fit(ds, ranges.train);
	const SplitWindows train(ds, ranges.train, norm, cfg.target_channel);
	const SplitWindows val(ds, ranges.val, norm, cfg.target_channel);
	const SplitWindows test(ds, ranges.test, norm, cfg.target_channel);
	const LossContext ctx{&norm, cfg.target_channel, cfg.train.threads};

	out << "training " << cfg.model.graph_mode.label() << " on " << ds.name << " (" << ds.nodes() << " nodes, "
	    << train.size() << " train windows, " << model.params().scalar_count() << " parameters)\n";
	const FitResult result = fit(model, train, val, ctx, cfg.train, [&](const HistoryRow &row) {
		out << "epoch " << row.epoch << " train_loss " << format_double(row.train_loss) << " val_mae "
		    << format_double(row.val_mae) << "\n";
	});
	write_history_csv(dir / "history.csv", result.history);
	RunConfig stored = cfg;
	stored.out = RunConfig{}.out; // keeps checkpoints independent of where they were written
	save_checkpoint(dir / "checkpoint.dfdg", stored.to_text(), model.params());
	if (result.diverged) {
		err << "error: " << result.message << "; kept the last good weights\n";
		return kDiverged;
	}
	const MetricsReport report = evaluate_model(model, test, ctx, cfg.max_test_windows);
	print_warnings(report, err);
	write_text(dir / "test_metrics.csv",
	           metrics_csv_header() + metrics_csv_rows(cfg.model.graph_mode.label(), std::to_string(cfg.model.seed), report));
	out << "best epoch " << result.best_epoch << "\n" << render_table({{cfg.model.graph_mode.label(), report}});
	return kOk;
}

int cmd_eval(const CommonFlags &flags, const std::string &checkpoint, bool dump, std::ostream &out,
             std::ostream &err) {
	if (checkpoint.empty())
		throw ConfigError("eval needs --checkpoint PATH (or HI)");
	const bool hi = checkpoint == "HI";
	std::optional<Checkpoint> cp;
	RunConfig cfg;
	if (hi) {
		cfg = resolve(flags);
	} else {
		cp = load_checkpoint(checkpoint);
		cfg = RunConfig::from_text(cp->config);
		if (!flags.config.empty()) {
			const RunConfig file = RunConfig::load(flags.config);
			cfg.dataset = file.dataset;
			cfg.hi_rule = file.hi_rule;
			cfg.max_test_windows = file.max_test_windows;
			cfg.out = file.out;
		}
		if (!flags.out.empty())
			cfg.out = flags.out;
		if (!flags.dataset.empty())
			cfg.dataset = flags.dataset;
	}
	const TrafficDataset ds = require_dataset(cfg);
	const fs::path dir = prepare_out(cfg);

	const SplitRanges ranges = split(ds.steps());
	require_windows(ranges);
	const Normalizer norm = Normalizer::fit(ds, ranges.train);
	const SplitWindows test(ds, ranges.test, norm, cfg.target_channel);
	std::optional<PredictionDump> dumper;
	if (dump)
		dumper.emplace(dir / "predictions.csv");
	auto on_pred = [&](std::size_t i, const Window &w, const Tensor &p) {
		if (dumper)
			dumper->add(i, p, w.y);
	};

	std::string label;
	MetricsReport report;
	if (hi) {
		label = "HI";
		write_sidecar(dir, cfg);
		report = evaluate_hi(ds, test, cfg.hi_rule, cfg.target_channel, on_pred);
	} else {
		if (cfg.model.n_nodes != ds.nodes() || cfg.model.in_channels != ds.channels()) {
			err << "error: shape mismatch: checkpoint expects " << cfg.model.n_nodes << " nodes x "
			    << cfg.model.in_channels << " channels, dataset has " << ds.nodes() << " x " << ds.channels() << "\n";
			return kConfigError;
		}
		write_sidecar(dir, cfg);
		const DfdgcnModel model = load_model(*cp, predefined_for(cfg.model, ds));
		label = cfg.model.graph_mode.label();
		const LossContext ctx{&norm, cfg.target_channel, cfg.train.threads};
		report = evaluate_model(model, test, ctx, cfg.max_test_windows, on_pred);
	}
	print_warnings(report, err);
	const std::string seed = hi ? hi_rule_name(cfg.hi_rule) : std::to_string(cfg.model.seed);
	write_text(dir / "metrics.csv", metrics_csv_header() + metrics_csv_rows(label, seed, report));
	out << render_table({{label, report}});
	return kOk;
}

int cmd_ablate(const CommonFlags &flags, std::ostream &out, std::ostream &err) {
	RunConfig cfg = resolve(flags);
	const TrafficDataset ds = require_dataset(cfg);
	fit_shape(cfg.model, ds);
	cfg.train.validate();
	const fs::path dir = prepare_out(cfg);
	write_sidecar(dir, cfg);

	AblationConfig ac;
	ac.grid = cfg.grid;
	ac.seeds = cfg.seeds;
	ac.model = cfg.model;
	ac.train = cfg.train;
	ac.target_channel = cfg.target_channel;
	ac.max_test_windows = cfg.max_test_windows;
	const AblationResult result = run_ablation(ds, ac, [&](const AblationRun &run) {
		out << run.mode.label() << " seed " << run.seed << ": best epoch " << run.fit.best_epoch << ", test Avg MAE "
		    << format_double(run.test.avg.mae) << "\n";
		if (run.fit.diverged)
			err << "warning: " << run.mode.label() << " seed " << run.seed << " " << run.fit.message << "\n";
	});
	write_text(dir / "ablation.csv", ablation_csv(result));
	std::vector<std::pair<std::string, MetricsReport>> rows;
	for (const auto &[mode, report] : result.means)
		rows.emplace_back(mode.label(), report);
	out << render_table(rows);
	return kOk;
}

int cmd_similarity(const CommonFlags &flags, std::size_t start, std::size_t length, std::ostream &out) {
	RunConfig cfg = resolve(flags);
	const TrafficDataset ds = require_dataset(cfg);
	const fs::path dir = prepare_out(cfg);
	write_sidecar(dir, cfg);
	const SimilarityMatrices m = similarity_matrices(ds, {start, start + length}, cfg.target_channel);
	write_matrix_csv(dir / "similarity_time.csv", m.time);
	write_matrix_csv(dir / "similarity_frequency.csv", m.frequency);
	out << "wrote " << ds.nodes() << "x" << ds.nodes() << " similarity matrices for steps [" << start << ", "
	    << start + length << ") to " << dir.string() << "\n";
	return kOk;
}

int cmd_synth(const CommonFlags &flags, std::ostream &out) {
	RunConfig cfg = resolve(flags);
	if (flags.seed)
		cfg.synth.seed = *flags.seed;
	const fs::path dir = prepare_out(cfg);
	const SynthResult result = synth_timeshift(cfg.synth);
	write_synth(dir, result);
	write_sidecar(dir, cfg);
	out << "wrote " << result.dataset.steps() << " steps x " << result.dataset.nodes() << " nodes to " << dir.string()
	    << "\n";
	return kOk;
}

int cmd_gradcheck(const CommonFlags &flags, const std::string &fault, double fault_factor, std::size_t windows,
                  std::ostream &out) {
	RunConfig cfg = resolve(flags);
	TrafficDataset ds;
	if (cfg.dataset.empty()) {
		SynthConfig toy;
		toy.n_nodes = 4;
		toy.n_sources = 2;
		toy.n_steps = 240;
		toy.seed = cfg.synth.seed;
		ds = synth_timeshift(toy).dataset;
	} else {
		ds = load_dataset(cfg.dataset);
	}
	fit_shape(cfg.model, ds);
	const fs::path dir = prepare_out(cfg);
	write_sidecar(dir, cfg);

	DfdgcnModel model(cfg.model, predefined_for(cfg.model, ds));
	const SplitRanges ranges = split(ds.steps());
	require_windows(ranges);
	const Normalizer norm = Normalizer::fit(ds, ranges.train);
	const SplitWindows train(ds, ranges.train, norm, cfg.target_channel);
	std::vector<Window> batch;
	for (std::size_t i = 0; i < std::min(windows, train.size()); ++i)
		batch.push_back(train.at(i * train.size() / std::max<std::size_t>(1, windows)));
	GradCheckConfig gc;
	gc.seed = cfg.model.seed;
	gc.fault_param = fault;
	gc.fault_factor = fault_factor;
	const GradCheckReport report = grad_check(model, batch, {&norm, cfg.target_channel, cfg.train.threads}, gc);
	out << cfg.model.graph_mode.label() << " " << report.summary() << "\n";
	return report.passed() ? kOk : kCheckFailed;
}

int cmd_report(const CommonFlags &flags, const std::vector<std::string> &inputs, std::ostream &out) {
	if (inputs.empty())
		throw ConfigError("report needs at least one --input CSV");
	RunConfig cfg = resolve(flags);
	std::vector<std::pair<std::string, MetricsReport>> rows;
	for (const auto &path : inputs)
		for (auto &row : read_metrics_csv(path))
			rows.push_back(std::move(row));
	const std::string table = render_table(rows);
	const fs::path dir = prepare_out(cfg);
	write_sidecar(dir, cfg);
	write_text(dir / "report.txt", table);
	out << table;
	return kOk;
}

} // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
	CLI::App app{"Traffic forecasting with frequency-domain dynamic graphs"};
	app.require_subcommand(1);
	app.set_version_flag("--version", "dfdgcn 0.1.0");

	CommonFlags flags;
	std::string checkpoint;
	bool dump = false;
	std::size_t start = 0, length = 288;
	std::string fault;
	double fault_factor = 2.0;
	std::size_t gc_windows = 2;
	std::vector<std::string> inputs;

	auto *train = app.add_subcommand("train", "Train a model and write checkpoint, history and resolved config");
	auto *eval = app.add_subcommand("eval", "Score a checkpoint (or HI) on the test split");
	auto *ablate = app.add_subcommand("ablate", "Train the graph-mode grid over several seeds");
	auto *similarity = app.add_subcommand("similarity", "Time- and frequency-domain cosine similarity matrices");
	auto *synth = app.add_subcommand("synth", "Generate a synthetic time-shifted dataset");
	auto *gradcheck = app.add_subcommand("gradcheck", "Compare reverse-mode gradients with finite differences");
	auto *report = app.add_subcommand("report", "Render metrics CSVs as a horizon table");
	for (auto *cmd : {train, eval, ablate, similarity, synth, gradcheck, report})
		add_common(cmd, flags);
	eval->add_option("--checkpoint", checkpoint, "Checkpoint file, or HI for the historical-inertia baseline");
	eval->add_flag("--dump-predictions", dump, "Write predictions.csv with one row per (sample, node, horizon)");
	similarity->add_option("--start", start, "First step of the span");
	similarity->add_option("--length", length, "Span length in steps");
	gradcheck->add_option("--fault", fault, "Parameter whose analytic gradient is corrupted (testing aid)");
	gradcheck->add_option("--fault-factor", fault_factor, "Multiplier applied by --fault");
	gradcheck->add_option("--windows", gc_windows, "Windows in the checked batch");
	report->add_option("--input", inputs, "Metrics CSV (graphs,seed,horizon,mae,rmse,mape)")->required();

	try {
		app.parse(argc, argv);
	} catch (const CLI::Success &e) {
		app.exit(e, out, err);
		return kOk;
	} catch (const CLI::ParseError &e) {
		app.exit(e, out, err);
		return kConfigError;
	}

	try {
		if (*train)
			return cmd_train(flags, out, err);
		if (*eval)
			return cmd_eval(flags, checkpoint, dump, out, err);
		if (*ablate)
			return cmd_ablate(flags, out, err);
		if (*similarity)
			return cmd_similarity(flags, start, length, out);
		if (*synth)
			return cmd_synth(flags, out);
		if (*gradcheck)
			return cmd_gradcheck(flags, fault, fault_factor, gc_windows, out);
		if (*report)
			return cmd_report(flags, inputs, out);
	} catch (const ConfigError &e) {
		err << "config error: " << e.what() << "\n";
		return kConfigError;
	} catch (const std::exception &e) {
		err << "error: " << e.what() << "\n";
		return kConfigError;
	}
	return kConfigError;
}

} // namespace dfdgcn::cli
