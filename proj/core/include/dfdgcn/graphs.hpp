#pragma once

#include "dfdgcn/autodiff.hpp"
#include "dfdgcn/tensor.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dfdgcn {

/// Subset of {P, SA, D, T}: predefined, self-adaptive, frequency-domain
/// dynamic and time-domain dynamic graphs.
struct GraphMode {
	bool predefined = false;
	bool adaptive = false;
	bool dynamic = false;
	bool time_domain = false;

	/// Parses labels joined by '+', e.g. "D+P+SA". Order-insensitive.
	static GraphMode parse(const std::string &text);
	/// Canonical label in the order D, T, P, SA.
	std::string label() const;
	bool empty() const noexcept { return !(predefined || adaptive || dynamic || time_domain); }
	friend bool operator==(const GraphMode &, const GraphMode &) = default;
};

/// The ablation grid in table order: P, SA, D, T, P+SA, D+P, D+SA, D+P+SA.
std::vector<GraphMode> ablation_grid();

enum class FreqMode { RealImag, Magnitude };
FreqMode parse_freq_mode(const std::string &text);
std::string freq_mode_name(FreqMode mode);

// ---------------------------------------------------------------------------
// Predefined graph

struct DistanceEdge {
	std::size_t from = 0;
	std::size_t to = 0;
	double distance = 0.0; // meters
};

/// Reads a `from,to,cost` CSV with header.
std::vector<DistanceEdge> read_distances_csv(const std::filesystem::path &path);
void write_distances_csv(const std::filesystem::path &path, std::span<const DistanceEdge> edges);

struct PredefinedGraphs {
	Tensor p_fwd;
	Tensor p_bwd;
};

/// Thresholded Gaussian kernel of road distances, W[i,j] = exp(-d^2 / sigma^2),
/// with zero-distance self-loops and sigma the standard deviation of the listed
/// distances (sigma = 0 uses the limit: 1 at d = 0, else 0). Weights below
/// kappa are dropped; p_fwd = rownorm(W), p_bwd = rownorm(W^T).
PredefinedGraphs build_predefined(std::span<const DistanceEdge> distances, std::size_t n, double kappa);

// ---------------------------------------------------------------------------
// Learned graphs

/// Softmax(ReLU(e1 e2^T)).
Tensor adaptive_graph(const Tensor &e1, const Tensor &e2);
Var adaptive_graph(Tape &tape, Var e1, Var e2);

/// Learnable tensors of one dynamic graph learner. For the frequency graph
/// w_map maps spectrum features to the series embedding; for the time-domain
/// variant it maps the raw window.
struct GraphLearnerParams {
	Tensor w_map;  // [F, series_dim]
	Tensor e_id;   // [N, id_dim]
	Tensor e_dow;  // [7, time_dim]
	Tensor e_tod;  // [tod_slots, time_dim]
	Tensor w_conv; // [embed_dim, series_dim + id_dim + 2 time_dim]
	Tensor b_conv; // [embed_dim]
	Tensor w_adj;  // [embed_dim, embed_dim]
};

struct GraphLearnerVars {
	Var w_map, e_id, e_dow, e_tod, w_conv, b_conv, w_adj;
};

/// Number of spectrum features per node for a window of length t.
std::size_t spectrum_feature_count(FreqMode mode, std::size_t t);

/// Per-node spectrum features of `series` [N, T].
Var spectrum_features(Tape &tape, Var series, FreqMode mode);

/// Steps after feature extraction: linear map, concatenation with identity
/// and calendar embeddings, 1x1 convolution across the node axis, and
/// Softmax(ReLU(DE W_adj DE^T)). `tod_slot` indexes e_tod directly.
Var graph_from_features(Tape &tape, Var features, std::size_t tod_slot, std::size_t dow, const GraphLearnerVars &p);

/// Target-channel series [N, T] of a window [N, C, T].
Tensor target_series(const Tensor &window, std::size_t channel = 0);

/// Dynamic frequency-domain graph of one window [N, C, T]. tod in 0..287
/// (5-minute slots), mapped onto e_tod's slot count; dow in 0..6.
Var frequency_graph(Tape &tape, const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerVars &p,
                    FreqMode mode, std::size_t channel = 0);
Tensor frequency_graph(const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerParams &p,
                       FreqMode mode, std::size_t channel = 0);

/// Same pipeline fed with the raw window instead of its spectrum.
Var time_domain_graph(Tape &tape, const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerVars &p,
                      std::size_t channel = 0);
Tensor time_domain_graph(const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerParams &p,
                         std::size_t channel = 0);

/// Binds plain tensors as tape constants (for pure evaluation).
GraphLearnerVars bind_constants(Tape &tape, const GraphLearnerParams &p);

/// Checks that every row of `a` is nonnegative and sums to 1 within tol.
bool is_row_stochastic(const Tensor &a, double tol);

constexpr std::size_t kStepsPerDay = 288;
constexpr std::size_t kDaysPerWeek = 7;

} // namespace dfdgcn
