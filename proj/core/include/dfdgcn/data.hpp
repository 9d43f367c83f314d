#pragma once

#include "dfdgcn/graphs.hpp"
#include "dfdgcn/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dfdgcn {

constexpr std::size_t kWindowIn = 12;
constexpr std::size_t kWindowOut = 12;
constexpr std::int64_t kIntervalSeconds = 300;

struct TrafficDataset {
	Tensor values; // [time, node, channel]
	std::int64_t start_timestamp = 0;
	std::int64_t interval = kIntervalSeconds;
	std::vector<std::string> sensor_ids;
	std::optional<std::vector<DistanceEdge>> distances;
	std::string name;

	std::size_t steps() const { return values.dim(0); }
	std::size_t nodes() const { return values.dim(1); }
	std::size_t channels() const { return values.dim(2); }
	double value(std::size_t t, std::size_t n, std::size_t c) const { return values.at(t, n, c); }

	/// Throws std::invalid_argument when the shape or timing is unusable.
	void validate() const;
};

/// Published extents of the public benchmark datasets.
struct KnownDataset {
	std::string name;
	std::size_t steps;
	std::size_t nodes;
	std::int64_t start_timestamp;
};
const std::vector<KnownDataset> &known_datasets();
/// Case-insensitive lookup ("pems08", "PEMS-BAY", ...).
std::optional<KnownDataset> find_known_dataset(const std::string &name);

/// Loads a values container (.npz, .npy or `time,node,value` CSV) and an
/// optional `from,to,cost` distance file. When the dataset is recognised by
/// name its extents are checked against the published ones. Distance
/// endpoints that are sensor ids rather than indices are remapped through
/// `sensor_ids_file` (one id per line).
TrafficDataset load_pems(const std::filesystem::path &values_file,
                         const std::optional<std::filesystem::path> &distances_file = std::nullopt,
                         const std::string &name = "",
                         const std::optional<std::filesystem::path> &sensor_ids_file = std::nullopt);

/// Loads either a values file or a dataset directory holding `values.npy`
/// (or `<name>.npz`, `values.csv`), optional `distances.csv`, `sensor_ids.txt`
/// and `meta.txt` (`key=value` lines: name, start_timestamp, interval).
TrafficDataset load_dataset(const std::filesystem::path &path);

/// Writes `values.npy`, `meta.txt` and, when present, `distances.csv`.
void save_dataset(const std::filesystem::path &dir, const TrafficDataset &ds);

/// Requires a distance list; throws "predefined graph requires distances".
const std::vector<DistanceEdge> &require_distances(const TrafficDataset &ds);

// ---------------------------------------------------------------------------
// Splits and calendar

struct StepRange {
	std::size_t begin = 0;
	std::size_t end = 0;
	std::size_t size() const noexcept { return end - begin; }
	friend bool operator==(const StepRange &, const StepRange &) = default;
};

struct SplitRanges {
	StepRange train, val, test;
};

/// Chronological 7:1:2 split: train = floor(0.7 L), val = floor(0.1 L), the
/// rest to test. Throws std::invalid_argument when a part would be empty.
SplitRanges split(std::size_t total_steps);

/// Throws std::invalid_argument("dataset too short: ...") unless every part
/// holds at least one input/target window.
void require_windows(const SplitRanges &ranges);

/// Number of input/target windows fitting in `steps` steps.
std::size_t window_count(std::size_t steps);

struct Calendar {
	std::size_t tod = 0; // 0..287
	std::size_t dow = 0; // 0 = Monday
	friend bool operator==(const Calendar &, const Calendar &) = default;
};
Calendar calendar_features(std::size_t step_index, std::int64_t start_timestamp,
                           std::int64_t interval = kIntervalSeconds);

// ---------------------------------------------------------------------------
// Normalization and windows

class Normalizer {
public:
	Normalizer() = default;
	Normalizer(std::vector<double> mean, std::vector<double> stddev);
	/// Per-channel mean and population standard deviation over `range`.
	static Normalizer fit(const TrafficDataset &ds, StepRange range);

	double transform(double v, std::size_t channel) const { return (v - mean_[channel]) / std_[channel]; }
	double inverse(double z, std::size_t channel) const { return z * std_[channel] + mean_[channel]; }
	Tensor inverse(const Tensor &z, std::size_t channel) const;

	const std::vector<double> &mean() const noexcept { return mean_; }
	const std::vector<double> &stddev() const noexcept { return std_; }

private:
	std::vector<double> mean_, std_;
};

struct Window {
	Tensor x;     // [N, C, 12] normalized
	Tensor x_raw; // [N, C, 12]
	Tensor y;     // [N, 12] raw target channel
	std::size_t tod = 0;
	std::size_t dow = 0;
	std::size_t start = 0; // absolute step of x[..., 0]
};

struct WindowBatch {
	Tensor x; // [B, N, C, 12]
	Tensor y; // [B, N, 12]
	std::vector<std::size_t> tod, dow;
};

class WindowView {
public:
	virtual ~WindowView() = default;
	virtual std::size_t size() const = 0;
	virtual Window at(std::size_t i) const = 0;
	virtual std::size_t nodes() const = 0;
};

/// Sliding windows inside one split range, built on demand. Calendar labels
/// come from the last input step.
class SplitWindows : public WindowView {
public:
	SplitWindows(const TrafficDataset &ds, StepRange range, const Normalizer &norm, std::size_t target_channel = 0);
	std::size_t size() const override { return count_; }
	Window at(std::size_t i) const override;
	std::size_t nodes() const override { return ds_->nodes(); }

private:
	const TrafficDataset *ds_;
	StepRange range_;
	Normalizer norm_;
	std::size_t target_;
	std::size_t count_;
};

class WindowList : public WindowView {
public:
	explicit WindowList(std::vector<Window> windows) : windows_(std::move(windows)) {}
	std::size_t size() const override { return windows_.size(); }
	Window at(std::size_t i) const override { return windows_.at(i); }
	std::size_t nodes() const override { return windows_.empty() ? 0 : windows_.front().y.dim(0); }

private:
	std::vector<Window> windows_;
};

/// Stacks the selected windows.
WindowBatch make_batch(const WindowView &view, const std::vector<std::size_t> &indices);

// ---------------------------------------------------------------------------
// Synthetic time-shifted traffic

struct SynthConfig {
	std::size_t n_nodes = 20;
	std::size_t n_steps = 4032;
	/// Nodes 0..n_sources-1 emit independent signals; node j >= n_sources
	/// replays source j mod n_sources.
	std::size_t n_sources = 4;
	/// Per-node delay in steps; empty draws dependents uniformly from
	/// [lag_min, lag_max]. Entries for sources are ignored.
	std::vector<std::size_t> lags;
	std::size_t lag_min = 2;
	std::size_t lag_max = 6;
	/// Per-node gain; empty draws dependents uniformly from [0.7, 1.3].
	std::vector<double> gains;
	double noise_sigma = 0.3;
	std::uint64_t seed = 7;
	double base_level = 5.0;
	std::size_t harmonics = 48;
	/// Harmonic amplitudes fall as h^-decay.
	double spectrum_decay = 0.0;
	double ar_phi = 0.8;
	/// Source innovation noise, in units of noise_sigma.
	double source_noise_scale = 2.0;
	std::int64_t start_timestamp = 1704067200; // Monday 2024-01-01 00:00 UTC
	/// Road distance per step of delay for the emitted distance list.
	double meters_per_lag = 400.0;
};

struct TruthEdge {
	std::size_t from = 0;
	std::size_t to = 0;
	std::size_t lag = 0;
	double gain = 1.0;
};

struct SynthResult {
	TrafficDataset dataset;
	std::vector<TruthEdge> truth;
};

SynthResult synth_timeshift(const SynthConfig &config);
/// Dataset directory plus `truth_graph.csv` (`from,to,lag,gain`).
void write_synth(const std::filesystem::path &dir, const SynthResult &result);
std::vector<TruthEdge> read_truth_graph(const std::filesystem::path &path);

} // namespace dfdgcn
