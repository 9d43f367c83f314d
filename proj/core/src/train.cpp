#include "dfdgcn/train.hpp"

#include "dfdgcn/autodiff.hpp"
#include "dfdgcn/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

namespace {

constexpr std::size_t kShardSize = 4;

const Normalizer &require_normalizer(const LossContext &ctx) {
	if (!ctx.normalizer)
		throw std::invalid_argument("loss context lacks a normalizer");
	return *ctx.normalizer;
}

const Tensor *graph_input(const DfdgcnModel &model, const Window &w) {
	return model.config().graph_raw_input ? &w.x_raw : nullptr;
}

std::size_t nonzero_count(const Tensor &t) {
	return static_cast<std::size_t>(std::count_if(t.data().begin(), t.data().end(), [](double v) { return v != 0.0; }));
}

void add_into(Tensor &dst, const Tensor &src) {
	for (std::size_t i = 0; i < dst.size(); ++i)
		dst[i] += src[i];
}

/// Loss of one window on a fresh tape; returns (contribution, kink signature).
std::pair<double, std::uint64_t> window_loss(const DfdgcnModel &model, const Window &w, const LossContext &ctx,
                                             double weight, bool track_kinks) {
	const Normalizer &norm = require_normalizer(ctx);
	Tape tape;
	tape.set_track_kinks(track_kinks);
	std::vector<Var> bound;
	bound.reserve(model.params().count());
	for (const auto &a : model.params().arrays())
		bound.push_back(tape.reference(a));
	Var pred = model.forward(tape, bound, w.x, w.tod, w.dow, graph_input(model, w));
	Var raw = ad::affine(tape, pred, norm.stddev()[ctx.target_channel], norm.mean()[ctx.target_channel]);
	Var loss = ad::masked_abs_sum(tape, raw, w.y, weight);
	return {tape.value(loss).item(), tape.kink_signature()};
}

std::vector<std::size_t> spaced_indices(std::size_t n, std::size_t max_count) {
	std::vector<std::size_t> idx;
	if (max_count == 0 || max_count >= n) {
		idx.resize(n);
		std::iota(idx.begin(), idx.end(), 0);
		return idx;
	}
	for (std::size_t k = 0; k < max_count; ++k)
		idx.push_back(k * n / max_count);
	return idx;
}

} // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
	if (!(lr > 0.0) || !std::isfinite(lr))
		throw ConfigError("train.lr must be positive");
	if (patience < 1)
		throw ConfigError("train.patience must be >= 1");
	if (max_epochs < 1)
		throw ConfigError("train.max_epochs must be >= 1");
	if (batch_size < 1)
		throw ConfigError("train.batch_size must be >= 1");
	if (!(grad_clip >= 0.0))
		throw ConfigError("train.grad_clip must be >= 0");
}

std::vector<std::string> TrainConfig::keys() {
	return {"lr",   "max_epochs", "patience", "batch_size", "grad_clip", "seed", "max_batches_per_epoch",
	        "max_val_windows", "log_wall_time", "threads"};
}

void TrainConfig::write(ConfigText &cfg, const std::string &s) const {
	cfg.set(s, "lr", format_double(lr));
	cfg.set(s, "max_epochs", std::to_string(max_epochs));
	cfg.set(s, "patience", std::to_string(patience));
	cfg.set(s, "batch_size", std::to_string(batch_size));
	cfg.set(s, "grad_clip", format_double(grad_clip));
	cfg.set(s, "seed", std::to_string(seed));
	cfg.set(s, "max_batches_per_epoch", std::to_string(max_batches_per_epoch));
	cfg.set(s, "max_val_windows", std::to_string(max_val_windows));
	cfg.set(s, "log_wall_time", log_wall_time ? "true" : "false");
	cfg.set(s, "threads", std::to_string(threads));
}

TrainConfig TrainConfig::read(const ConfigText &cfg, const std::string &s) {
	const auto unknown = cfg.unknown_keys(s, keys());
	if (!unknown.empty())
		throw ConfigError("unknown config key " + unknown.front());
	TrainConfig c;
	auto key = [&](const char *k) { return s + "." + k; };
	if (cfg.has(s, "lr"))
		c.lr = parse_double(key("lr"), cfg.get(s, "lr"));
	if (cfg.has(s, "max_epochs"))
		c.max_epochs = parse_size(key("max_epochs"), cfg.get(s, "max_epochs"));
	if (cfg.has(s, "patience"))
		c.patience = parse_size(key("patience"), cfg.get(s, "patience"));
	if (cfg.has(s, "batch_size"))
		c.batch_size = parse_size(key("batch_size"), cfg.get(s, "batch_size"));
	if (cfg.has(s, "grad_clip"))
		c.grad_clip = parse_double(key("grad_clip"), cfg.get(s, "grad_clip"));
	if (cfg.has(s, "seed"))
		c.seed = parse_u64(key("seed"), cfg.get(s, "seed"));
	if (cfg.has(s, "max_batches_per_epoch"))
		c.max_batches_per_epoch = parse_size(key("max_batches_per_epoch"), cfg.get(s, "max_batches_per_epoch"));
	if (cfg.has(s, "max_val_windows"))
		c.max_val_windows = parse_size(key("max_val_windows"), cfg.get(s, "max_val_windows"));
	if (cfg.has(s, "log_wall_time"))
		c.log_wall_time = parse_bool(key("log_wall_time"), cfg.get(s, "log_wall_time"));
	if (cfg.has(s, "threads"))
		c.threads = parse_size(key("threads"), cfg.get(s, "threads"));
	c.validate();
	return c;
}

// ---------------------------------------------------------------------------
// Loss and optimizer

double masked_mae_loss(const Tensor &pred, const Tensor &target) {
	return masked_mae(pred, target);
}

StepInfo optimizer_step(ParameterStore &params, const Gradients &grads, AdamState &state, double lr,
                        double grad_clip) {
	if (grads.size() != params.count())
		throw std::invalid_argument("optimizer_step: " + std::to_string(grads.size()) + " gradients for " +
		                            std::to_string(params.count()) + " parameters");
	double sq = 0.0;
	for (std::size_t s = 0; s < grads.size(); ++s) {
		if (grads[s].shape() != params.array(s).shape())
			throw std::invalid_argument("optimizer_step: gradient shape mismatch for " + params.name(s));
		for (double g : grads[s].data()) {
			if (!std::isfinite(g))
				throw std::runtime_error("non-finite gradient in parameter " + params.name(s));
			sq += g * g;
		}
	}
	StepInfo info;
	info.grad_norm = std::sqrt(sq);
	if (grad_clip > 0.0 && info.grad_norm > grad_clip)
		info.clip_scale = grad_clip / info.grad_norm;

	if (state.m.empty()) {
		state.m = params.zeros_like();
		state.v = params.zeros_like();
	}
	++state.step;
	const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
	const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
	for (std::size_t s = 0; s < grads.size(); ++s) {
		Tensor &p = params.array(s);
		Tensor &m = state.m[s];
		Tensor &v = state.v[s];
		for (std::size_t i = 0; i < p.size(); ++i) {
			const double g = grads[s][i] * info.clip_scale;
			m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * g;
			v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * g * g;
			p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + AdamState::eps);
		}
	}
	return info;
}

LossAndGrad batch_loss(const DfdgcnModel &model, const std::vector<Window> &windows, const LossContext &ctx,
                       bool with_grad) {
	const Normalizer &norm = require_normalizer(ctx);
	LossAndGrad out;
	for (const auto &w : windows)
		out.count += nonzero_count(w.y);
	if (with_grad)
		out.grads = model.params().zeros_like();
	if (out.count == 0)
		return out;
	const double weight = 1.0 / static_cast<double>(out.count);
	const double scale = norm.stddev()[ctx.target_channel];
	const double shift = norm.mean()[ctx.target_channel];

	struct Shard {
		double loss = 0.0;
		Gradients grads;
	};
	const std::size_t n_shards = (windows.size() + kShardSize - 1) / kShardSize;
	std::vector<Shard> shards(n_shards);
	parallel_for(n_shards, ctx.threads, [&](std::size_t sh) {
		Shard &acc = shards[sh];
		const std::size_t end = std::min(windows.size(), (sh + 1) * kShardSize);
		for (std::size_t i = sh * kShardSize; i < end; ++i) {
			const Window &w = windows[i];
			Tape tape;
			const std::vector<Var> bound = model.params().bind(tape);
			Var pred = model.forward(tape, bound, w.x, w.tod, w.dow, graph_input(model, w));
			Var raw = ad::affine(tape, pred, scale, shift);
			Var loss = ad::masked_abs_sum(tape, raw, w.y, weight);
			acc.loss += tape.value(loss).item();
			if (!with_grad)
				continue;
			tape.backward(loss);
			if (acc.grads.empty())
				acc.grads = model.params().zeros_like();
			tape.for_each_parameter_grad([&](std::size_t slot, const Tensor &g) { add_into(acc.grads[slot], g); });
		}
	});
	for (const Shard &s : shards) {
		out.loss += s.loss;
		if (with_grad && !s.grads.empty())
			for (std::size_t p = 0; p < out.grads.size(); ++p)
				add_into(out.grads[p], s.grads[p]);
	}
	out.abs_sum = out.loss * static_cast<double>(out.count);
	return out;
}

Tensor predict_window(const DfdgcnModel &model, const Window &w, const LossContext &ctx) {
	const Normalizer &norm = require_normalizer(ctx);
	return norm.inverse(model.predict(w.x, w.tod, w.dow, graph_input(model, w)), ctx.target_channel);
}

MetricsReport evaluate_model(const DfdgcnModel &model, const WindowView &view, const LossContext &ctx,
                             std::size_t max_windows,
                             const std::function<void(std::size_t, const Window &, const Tensor &)> &on_prediction) {
	const std::vector<std::size_t> idx = spaced_indices(view.size(), max_windows);
	MetricsAccumulator acc(model.config().t_out);
	constexpr std::size_t kChunk = 256;
	for (std::size_t begin = 0; begin < idx.size(); begin += kChunk) {
		const std::size_t n = std::min(kChunk, idx.size() - begin);
		std::vector<Window> windows(n);
		std::vector<Tensor> preds(n);
		parallel_for(n, ctx.threads, [&](std::size_t k) {
			windows[k] = view.at(idx[begin + k]);
			preds[k] = predict_window(model, windows[k], ctx);
		});
		for (std::size_t k = 0; k < n; ++k) {
			acc.add(preds[k], windows[k].y);
			if (on_prediction)
				on_prediction(idx[begin + k], windows[k], preds[k]);
		}
	}
	return acc.report();
}

// ---------------------------------------------------------------------------
// Gradient verification

std::string GradCheckReport::summary() const {
	std::ostringstream out;
	out << (passed() ? "PASS" : "FAIL") << ": checked " << checked << ", skipped near kinks " << skipped_kinks
	    << ", failed " << failed << ", max absolute error " << max_abs_error << ", max relative error "
	    << max_rel_error;
	for (const auto &e : worst)
		out << "\n  " << e.name << "[" << e.index << "] analytic " << e.analytic << " numeric " << e.numeric
		    << " rel " << e.rel_error;
	return out.str();
}

GradCheckReport grad_check(DfdgcnModel &model, const std::vector<Window> &windows, const LossContext &ctx,
                           const GradCheckConfig &cfg) {
	LossAndGrad base = batch_loss(model, windows, ctx, true);
	ParameterStore &params = model.params();
	if (!cfg.fault_param.empty()) {
		if (!params.contains(cfg.fault_param))
			throw std::invalid_argument("fault injection target " + cfg.fault_param + " is not a parameter");
		for (auto &g : base.grads[params.slot(cfg.fault_param)].data())
			g *= cfg.fault_factor;
	}
	if (base.count == 0)
		throw std::invalid_argument("grad_check: every target entry is masked");
	const double weight = 1.0 / static_cast<double>(base.count);

	auto evaluate = [&]() {
		double loss = 0.0;
		std::uint64_t sig = 1469598103934665603ULL;
		for (const auto &w : windows) {
			const auto [l, s] = window_loss(model, w, ctx, weight, true);
			loss += l;
			sig = (sig ^ s) * 1099511628211ULL;
		}
		return std::pair{loss, sig};
	};
	const std::uint64_t sig0 = evaluate().second;

	GradCheckReport report;
	std::vector<GradCheckEntry> failures;
	std::mt19937_64 rng(cfg.seed);
	for (std::size_t slot = 0; slot < params.count(); ++slot) {
		const std::size_t n = params.array(slot).size();
		std::vector<std::size_t> picks(n);
		std::iota(picks.begin(), picks.end(), 0);
		if (n >= cfg.sample_threshold) {
			const auto k = static_cast<std::size_t>(std::ceil(cfg.sample_fraction * static_cast<double>(n)));
			std::shuffle(picks.begin(), picks.end(), rng);
			picks.resize(std::max<std::size_t>(1, k));
			std::sort(picks.begin(), picks.end());
		}
		for (std::size_t i : picks) {
			double &theta = params.array(slot)[i];
			const double orig = theta;
			theta = orig + cfg.epsilon;
			const auto [lp, sp] = evaluate();
			theta = orig - cfg.epsilon;
			const auto [lm, sm] = evaluate();
			theta = orig;
			if (sp != sig0 || sm != sig0) {
				++report.skipped_kinks;
				continue;
			}
			GradCheckEntry e;
			e.name = params.name(slot);
			e.index = i;
			e.analytic = base.grads[slot][i];
			e.numeric = (lp - lm) / (2.0 * cfg.epsilon);
			e.abs_error = std::abs(e.analytic - e.numeric);
			const double denom = std::max(std::abs(e.analytic), std::abs(e.numeric));
			e.rel_error = denom > 0.0 ? e.abs_error / denom : 0.0;
			++report.checked;
			report.max_abs_error = std::max(report.max_abs_error, e.abs_error);
			if (e.abs_error <= cfg.abs_tol)
				continue;
			report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
			if (e.rel_error >= cfg.tol) {
				++report.failed;
				failures.push_back(e);
			}
		}
	}
	std::sort(failures.begin(), failures.end(),
	          [](const GradCheckEntry &a, const GradCheckEntry &b) { return a.rel_error > b.rel_error; });
	if (failures.size() > cfg.max_reported)
		failures.resize(cfg.max_reported);
	report.worst = std::move(failures);
	return report;
}

// ---------------------------------------------------------------------------
// Training loop

FitResult fit(DfdgcnModel &model, const WindowView &train, const WindowView &val, const LossContext &ctx,
              const TrainConfig &cfg, const std::function<void(const HistoryRow &)> &on_epoch) {
	cfg.validate();
	if (train.size() == 0 || val.size() == 0)
		throw std::invalid_argument("fit needs non-empty train and validation windows");
	const auto t0 = std::chrono::steady_clock::now();
	auto elapsed = [&] {
		return cfg.log_wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
	};

	FitResult result;
	ParameterStore best = model.params();
	AdamState adam;
	std::mt19937_64 rng(cfg.seed);
	std::vector<std::size_t> order(train.size());
	std::iota(order.begin(), order.end(), 0);
	const std::size_t batches_total = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
	const std::size_t batches =
	    cfg.max_batches_per_epoch ? std::min(batches_total, cfg.max_batches_per_epoch) : batches_total;

	auto record = [&](HistoryRow row) {
		result.history.push_back(row);
		if (on_epoch)
			on_epoch(row);
	};
	auto score = [&](HistoryRow &row) {
		const MetricsReport r = evaluate_model(model, val, ctx, cfg.max_val_windows);
		row.val_mae = r.avg.mae;
		row.val_rmse = r.avg.rmse;
		row.val_mape = r.avg.mape;
	};

	{
		HistoryRow row;
		row.train_loss = evaluate_model(model, train, ctx, batches * cfg.batch_size).avg.mae;
		score(row);
		row.seconds = elapsed();
		record(row);
	}

	result.best_val_mae = std::numeric_limits<double>::infinity();
	std::size_t since_best = 0;
	for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
		std::shuffle(order.begin(), order.end(), rng);
		double abs_sum = 0.0;
		std::size_t count = 0;
		try {
			for (std::size_t b = 0; b < batches; ++b) {
				const std::size_t begin = b * cfg.batch_size;
				const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
				std::vector<Window> windows;
				windows.reserve(end - begin);
				for (std::size_t i = begin; i < end; ++i)
					windows.push_back(train.at(order[i]));
				LossAndGrad lg = batch_loss(model, windows, ctx, true);
				if (!std::isfinite(lg.loss))
					throw std::runtime_error("non-finite training loss");
				optimizer_step(model.params(), lg.grads, adam, cfg.lr, cfg.grad_clip);
				abs_sum += lg.abs_sum;
				count += lg.count;
			}
		} catch (const std::runtime_error &e) {
			result.diverged = true;
			result.message = "diverged in epoch " + std::to_string(epoch) + ": " + e.what();
			break;
		}
		HistoryRow row;
		row.epoch = epoch;
		row.train_loss = count ? abs_sum / static_cast<double>(count) : 0.0;
		try {
			score(row);
		} catch (const std::runtime_error &e) {
			result.diverged = true;
			result.message = "diverged in epoch " + std::to_string(epoch) + ": " + e.what();
			break;
		}
		row.seconds = elapsed();
		record(row);
		if (row.val_mae < result.best_val_mae) {
			result.best_val_mae = row.val_mae;
			result.best_epoch = epoch;
			best = model.params();
			since_best = 0;
		} else if (++since_best >= cfg.patience) {
			result.early_stopped = true;
			break;
		}
	}
	model.params() = best;
	if (result.best_epoch == 0)
		result.best_val_mae = result.history.front().val_mae;
	return result;
}

std::string history_csv(const std::vector<HistoryRow> &history) {
	std::string out = "epoch,train_loss,val_mae,val_rmse,val_mape,seconds\n";
	for (const auto &r : history)
		out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_mae) + "," +
		       format_double(r.val_rmse) + "," + format_double(r.val_mape) + "," + format_double(r.seconds) + "\n";
	return out;
}

void write_history_csv(const std::filesystem::path &path, const std::vector<HistoryRow> &history) {
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw std::runtime_error("cannot write " + path.string());
	out << history_csv(history);
}

} // namespace dfdgcn
