#pragma once

#include "dfdgcn/autodiff.hpp"
#include "dfdgcn/config.hpp"
#include "dfdgcn/graphs.hpp"
#include "dfdgcn/params.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dfdgcn {

struct ModelConfig {
	std::size_t n_nodes = 0;
	std::size_t in_channels = 1;
	std::size_t t_in = 12;
	std::size_t t_out = 12;
	std::size_t residual_channels = 32;
	std::size_t skip_channels = 256;
	std::size_t end_channels = 512;
	std::vector<std::size_t> dilations{1, 2, 1, 2, 1, 2, 1, 2};
	std::size_t k_hops = 2;
	GraphMode graph_mode = GraphMode::parse("D+P+SA");
	FreqMode freq_mode = FreqMode::RealImag;
	// Graph learner widths: series embedding, identity embedding, each
	// calendar embedding, embedding after the 1x1 convolution.
	std::size_t series_dim = 10;
	std::size_t id_dim = 10;
	std::size_t time_dim = 12;
	std::size_t graph_embed_dim = 30;
	std::size_t adaptive_dim = 10;
	std::size_t tod_slots = 288;
	/// Feed the graph learners the raw (denormalized) window instead of the
	/// normalized one the backbone consumes.
	bool graph_raw_input = false;
	double kappa = 0.1;
	std::uint64_t seed = 42;

	static constexpr std::size_t kernel_size = 2;

	std::size_t n_layers() const noexcept { return dilations.size(); }
	std::size_t receptive_field() const noexcept;
	/// Throws ConfigError on any violated invariant.
	void validate() const;

	void write(ConfigText &cfg, const std::string &section = "model") const;
	static ModelConfig read(const ConfigText &cfg, const std::string &section = "model");
	static std::vector<std::string> keys();
};

/// Diffusion branches of the graph convolution. The predefined graph
/// contributes a forward and a backward transition.
enum class Branch : std::size_t { PredefinedFwd = 0, PredefinedBwd, Adaptive, Dynamic, TimeDomain };
constexpr std::size_t kBranchCount = 5;
std::string branch_name(Branch b);
std::vector<Branch> active_branches(const GraphMode &mode);

/// Adjacency handles for one forward pass.
struct GraphSet {
	std::optional<Var> p_fwd, p_bwd, a_adt, a_dyn, a_time;
	GraphMode active;

	/// Adjacency of an active branch; throws naming the graph when absent.
	Var get(Branch b) const;
};

struct DiffusionWeights {
	/// hops[branch][k] is a [C_out, C_in] map applied to A^k X.
	std::array<std::vector<Var>, kBranchCount> hops;
	Var bias;
};

/// Z = sum_k sum_{A active} A^k X W_{k,A} + b on x [C, N, T], per timestep.
Var graph_convolution(Tape &tape, Var x, const GraphSet &graphs, const DiffusionWeights &weights, std::size_t k_hops);

struct TcnLayerVars {
	Var filter_w, filter_b, gate_w, gate_b, skip_w, skip_b;
};

struct TcnOutput {
	Var gated;    // tanh(filter) * sigmoid(gate), [C, N, T']
	Var residual; // input cropped to T'
	Var output;   // gated + residual
	Var skip;     // skip projection of the last position, [C_skip, N, 1]
};

/// Gated dilated causal layer with kernel size 2 on x [C, N, T].
TcnOutput gated_tcn_layer(Tape &tape, Var x, const TcnLayerVars &layer, std::size_t dilation);

/// The full forecaster: gated temporal layers interleaved with multi-graph
/// diffusion convolutions, skip accumulation and a one-shot output head.
class DfdgcnModel {
public:
	/// Initializes parameters from config.seed. `predefined` is required when
	/// the graph mode contains P.
	explicit DfdgcnModel(ModelConfig config, std::optional<PredefinedGraphs> predefined = std::nullopt);

	const ModelConfig &config() const noexcept { return config_; }
	ParameterStore &params() noexcept { return params_; }
	const ParameterStore &params() const noexcept { return params_; }
	const std::optional<PredefinedGraphs> &predefined() const noexcept { return predefined_; }

	/// Predictions [N, t_out] in normalized units for window [N, C, t_in].
	/// `graph_window` feeds the graph learners (defaults to `window`).
	Var forward(Tape &tape, const std::vector<Var> &bound, const Tensor &window, std::size_t tod, std::size_t dow,
	            const Tensor *graph_window = nullptr) const;
	Tensor predict(const Tensor &window, std::size_t tod, std::size_t dow, const Tensor *graph_window = nullptr) const;

	/// Builds the GraphSet of one window on the tape.
	GraphSet build_graphs(Tape &tape, const std::vector<Var> &bound, const Tensor &graph_window, std::size_t tod,
	                      std::size_t dow) const;

	GraphLearnerVars learner_vars(const std::vector<Var> &bound, const std::string &prefix) const;
	GraphLearnerParams learner_params(const std::string &prefix) const;

private:
	struct LearnerSlots {
		std::size_t w_map, e_id, e_dow, e_tod, w_conv, b_conv, w_adj;
	};
	struct LayerSlots {
		std::size_t filter_w, filter_b, gate_w, gate_b, skip_w, skip_b, gconv_b;
		std::array<std::vector<std::size_t>, kBranchCount> hops;
	};

	void init_parameters();
	LearnerSlots add_learner(const std::string &prefix, std::size_t features);
	static GraphLearnerVars learner_vars(const std::vector<Var> &bound, const LearnerSlots &s);

	ModelConfig config_;
	std::optional<PredefinedGraphs> predefined_;
	ParameterStore params_;
	std::size_t start_w_ = 0, start_b_ = 0;
	std::size_t end1_w_ = 0, end1_b_ = 0, end2_w_ = 0, end2_b_ = 0;
	std::size_t e1_ = 0, e2_ = 0;
	std::optional<LearnerSlots> dyn_, time_;
	std::vector<LayerSlots> layers_;
};

} // namespace dfdgcn
