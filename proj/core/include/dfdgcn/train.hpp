#pragma once

#include "dfdgcn/config.hpp"
#include "dfdgcn/data.hpp"
#include "dfdgcn/metrics.hpp"
#include "dfdgcn/model.hpp"
#include "dfdgcn/params.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dfdgcn {

struct TrainConfig {
	double lr = 1e-3;
	std::size_t max_epochs = 150;
	std::size_t patience = 15;
	std::size_t batch_size = 64;
	double grad_clip = 5.0;
	std::uint64_t seed = 42;
	/// Caps the optimizer steps per epoch (0 = every batch).
	std::size_t max_batches_per_epoch = 0;
	/// Caps the validation windows scored per epoch (0 = all), taken evenly
	/// spaced across the split.
	std::size_t max_val_windows = 0;
	/// Record elapsed seconds in the history; off keeps reruns byte-identical.
	bool log_wall_time = false;
	/// Worker threads (0 = DFDGCN_THREADS or hardware concurrency).
	std::size_t threads = 0;

	void validate() const;
	void write(ConfigText &cfg, const std::string &section = "train") const;
	static TrainConfig read(const ConfigText &cfg, const std::string &section = "train");
	static std::vector<std::string> keys();
};

/// Mean |pred - target| over entries with target != 0; 0 when all are masked.
double masked_mae_loss(const Tensor &pred, const Tensor &target);

struct AdamState {
	std::vector<Tensor> m, v;
	std::size_t step = 0;
	static constexpr double beta1 = 0.9;
	static constexpr double beta2 = 0.999;
	static constexpr double eps = 1e-8;
};

struct StepInfo {
	double grad_norm = 0.0;  // before clipping
	double clip_scale = 1.0; // factor applied to the gradient
};

/// Clips the global gradient L2 norm to `grad_clip` (<= 0 disables) and
/// applies one bias-corrected adaptive-moment update. Throws naming the
/// parameter when a gradient is not finite.
StepInfo optimizer_step(ParameterStore &params, const Gradients &grads, AdamState &state, double lr, double grad_clip);

/// Evaluation-side context shared by the loss and the metrics.
struct LossContext {
	const Normalizer *normalizer = nullptr;
	std::size_t target_channel = 0;
	std::size_t threads = 0;
};

struct LossAndGrad {
	double loss = 0.0; // masked MAE in data units
	double abs_sum = 0.0;
	std::size_t count = 0; // unmasked target entries
	Gradients grads;       // indexed by parameter slot; empty unless requested
};

/// Masked MAE of the model over `windows`, denormalized with the context's
/// target channel, plus gradients when `with_grad` is set. Windows are
/// processed in fixed shards reduced in order, so the result does not depend
/// on the worker count.
LossAndGrad batch_loss(const DfdgcnModel &model, const std::vector<Window> &windows, const LossContext &ctx,
                       bool with_grad);

/// Denormalized predictions [N, t_out] for one window.
Tensor predict_window(const DfdgcnModel &model, const Window &w, const LossContext &ctx);

/// Masked metrics over a view. `max_windows` > 0 scores an evenly spaced
/// subset. `on_prediction(index, window, pred)` observes each prediction in
/// index order.
MetricsReport evaluate_model(const DfdgcnModel &model, const WindowView &view, const LossContext &ctx,
                             std::size_t max_windows = 0,
                             const std::function<void(std::size_t, const Window &, const Tensor &)> &on_prediction = {});

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckConfig {
	double epsilon = 1e-5;
	double tol = 1e-4;
	double abs_tol = 1e-8;
	double sample_fraction = 0.05;
	std::size_t sample_threshold = 50;
	std::uint64_t seed = 0;
	/// Fault injection: multiplies the analytic gradient of this array.
	std::string fault_param;
	double fault_factor = 1.0;
	std::size_t max_reported = 10;
};

struct GradCheckEntry {
	std::string name;
	std::size_t index = 0;
	double analytic = 0.0;
	double numeric = 0.0;
	double abs_error = 0.0;
	double rel_error = 0.0;
};

struct GradCheckReport {
	std::size_t checked = 0;
	std::size_t skipped_kinks = 0;
	std::size_t failed = 0;
	double max_abs_error = 0.0;
	double max_rel_error = 0.0; // over scalars whose absolute error exceeds abs_tol
	std::vector<GradCheckEntry> worst; // failures, worst first
	bool passed() const noexcept { return failed == 0 && checked > 0; }
	std::string summary() const;
};

/// Central finite differences of the masked-MAE loss against reverse mode.
/// Scalars whose +-epsilon perturbations change the activation pattern of a
/// piecewise-linear kernel are skipped and counted.
GradCheckReport grad_check(DfdgcnModel &model, const std::vector<Window> &windows, const LossContext &ctx,
                           const GradCheckConfig &config = {});

// ---------------------------------------------------------------------------
// Training loop

struct HistoryRow {
	std::size_t epoch = 0;
	double train_loss = 0.0;
	double val_mae = 0.0;
	double val_rmse = 0.0;
	double val_mape = 0.0;
	double seconds = 0.0;
};

struct FitResult {
	std::vector<HistoryRow> history; // epoch 0 scores the initial weights
	std::size_t best_epoch = 0;
	double best_val_mae = 0.0;
	bool diverged = false;
	bool early_stopped = false;
	std::string message;
};

/// Trains with shuffled mini-batches, scoring validation masked MAE after
/// every epoch. Leaves the best-validation weights in `model`; on divergence
/// restores them (or the initial weights) and reports it.
FitResult fit(DfdgcnModel &model, const WindowView &train, const WindowView &val, const LossContext &ctx,
              const TrainConfig &config, const std::function<void(const HistoryRow &)> &on_epoch = {});

std::string history_csv(const std::vector<HistoryRow> &history);
void write_history_csv(const std::filesystem::path &path, const std::vector<HistoryRow> &history);

} // namespace dfdgcn
