#include "dfdgcn/model.hpp"

#include "dfdgcn/kernels.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dfdgcn {

// ---------------------------------------------------------------------------
// ModelConfig

std::size_t ModelConfig::receptive_field() const noexcept {
	std::size_t rf = 1;
	for (std::size_t d : dilations)
		rf += d * (kernel_size - 1);
	return rf;
}

void ModelConfig::validate() const {
	if (n_nodes == 0)
		throw ConfigError("model.n_nodes must be positive");
	if (in_channels == 0)
		throw ConfigError("model.in_channels must be positive");
	if (t_in != 12)
		throw ConfigError("model.t_in must be 12 (the graph learners consume 12-step windows)");
	if (t_out == 0)
		throw ConfigError("model.t_out must be positive");
	if (dilations.empty())
		throw ConfigError("model.dilations must list at least one layer");
	for (std::size_t d : dilations)
		if (d == 0)
			throw ConfigError("model.dilations entries must be >= 1");
	if (receptive_field() < t_in)
		throw ConfigError("receptive field " + std::to_string(receptive_field()) + " of the dilated stack is below t_in " +
		                  std::to_string(t_in));
	if (graph_mode.empty())
		throw ConfigError("model.graph_mode must be non-empty");
	if (residual_channels == 0 || skip_channels == 0 || end_channels == 0)
		throw ConfigError("model channel widths must be positive");
	if (series_dim == 0 || id_dim == 0 || time_dim == 0 || graph_embed_dim == 0 || adaptive_dim == 0)
		throw ConfigError("graph learner widths must be positive");
	if (tod_slots == 0 || kStepsPerDay % tod_slots != 0)
		throw ConfigError("model.tod_slots must divide 288");
	if (!(kappa >= 0.0))
		throw ConfigError("model.kappa must be >= 0");
}

std::vector<std::string> ModelConfig::keys() {
	return {"n_nodes",      "in_channels", "t_in",    "t_out",           "residual_channels", "skip_channels",
	        "end_channels", "dilations",   "k_hops",  "graph_mode",      "freq_mode",         "series_dim",
	        "id_dim",       "time_dim",    "graph_embed_dim", "adaptive_dim", "tod_slots",    "graph_raw_input",
	        "kappa",        "seed"};
}

void ModelConfig::write(ConfigText &cfg, const std::string &s) const {
	cfg.set(s, "n_nodes", std::to_string(n_nodes));
	cfg.set(s, "in_channels", std::to_string(in_channels));
	cfg.set(s, "t_in", std::to_string(t_in));
	cfg.set(s, "t_out", std::to_string(t_out));
	cfg.set(s, "residual_channels", std::to_string(residual_channels));
	cfg.set(s, "skip_channels", std::to_string(skip_channels));
	cfg.set(s, "end_channels", std::to_string(end_channels));
	cfg.set(s, "dilations", join_sizes(dilations));
	cfg.set(s, "k_hops", std::to_string(k_hops));
	cfg.set(s, "graph_mode", graph_mode.label());
	cfg.set(s, "freq_mode", freq_mode_name(freq_mode));
	cfg.set(s, "series_dim", std::to_string(series_dim));
	cfg.set(s, "id_dim", std::to_string(id_dim));
	cfg.set(s, "time_dim", std::to_string(time_dim));
	cfg.set(s, "graph_embed_dim", std::to_string(graph_embed_dim));
	cfg.set(s, "adaptive_dim", std::to_string(adaptive_dim));
	cfg.set(s, "tod_slots", std::to_string(tod_slots));
	cfg.set(s, "graph_raw_input", graph_raw_input ? "true" : "false");
	cfg.set(s, "kappa", format_double(kappa));
	cfg.set(s, "seed", std::to_string(seed));
}

ModelConfig ModelConfig::read(const ConfigText &cfg, const std::string &s) {
	const auto unknown = cfg.unknown_keys(s, keys());
	if (!unknown.empty())
		throw ConfigError("unknown config key " + unknown.front());
	ModelConfig c;
	auto size_of = [&](const char *key, std::size_t &dst) {
		if (cfg.has(s, key))
			dst = parse_size(s + "." + key, cfg.get(s, key));
	};
	size_of("n_nodes", c.n_nodes);
	size_of("in_channels", c.in_channels);
	size_of("t_in", c.t_in);
	size_of("t_out", c.t_out);
	size_of("residual_channels", c.residual_channels);
	size_of("skip_channels", c.skip_channels);
	size_of("end_channels", c.end_channels);
	size_of("k_hops", c.k_hops);
	size_of("series_dim", c.series_dim);
	size_of("id_dim", c.id_dim);
	size_of("time_dim", c.time_dim);
	size_of("graph_embed_dim", c.graph_embed_dim);
	size_of("adaptive_dim", c.adaptive_dim);
	size_of("tod_slots", c.tod_slots);
	if (cfg.has(s, "dilations"))
		c.dilations = parse_size_list(s + ".dilations", cfg.get(s, "dilations"));
	try {
		if (cfg.has(s, "graph_mode"))
			c.graph_mode = GraphMode::parse(cfg.get(s, "graph_mode"));
		if (cfg.has(s, "freq_mode"))
			c.freq_mode = parse_freq_mode(cfg.get(s, "freq_mode"));
	} catch (const std::invalid_argument &e) {
		throw ConfigError(s + ": " + e.what());
	}
	if (cfg.has(s, "graph_raw_input"))
		c.graph_raw_input = parse_bool(s + ".graph_raw_input", cfg.get(s, "graph_raw_input"));
	if (cfg.has(s, "kappa"))
		c.kappa = parse_double(s + ".kappa", cfg.get(s, "kappa"));
	if (cfg.has(s, "seed"))
		c.seed = parse_u64(s + ".seed", cfg.get(s, "seed"));
	return c;
}

// ---------------------------------------------------------------------------
// Graph convolution and temporal layer

std::string branch_name(Branch b) {
	switch (b) {
	case Branch::PredefinedFwd:
		return "pf";
	case Branch::PredefinedBwd:
		return "pb";
	case Branch::Adaptive:
		return "sa";
	case Branch::Dynamic:
		return "d";
	case Branch::TimeDomain:
		return "t";
	}
	return "?";
}

std::vector<Branch> active_branches(const GraphMode &mode) {
	std::vector<Branch> out;
	if (mode.predefined) {
		out.push_back(Branch::PredefinedFwd);
		out.push_back(Branch::PredefinedBwd);
	}
	if (mode.adaptive)
		out.push_back(Branch::Adaptive);
	if (mode.dynamic)
		out.push_back(Branch::Dynamic);
	if (mode.time_domain)
		out.push_back(Branch::TimeDomain);
	return out;
}

Var GraphSet::get(Branch b) const {
	const std::optional<Var> *slot = nullptr;
	const char *label = "";
	switch (b) {
	case Branch::PredefinedFwd:
		slot = &p_fwd, label = "P (forward transition)";
		break;
	case Branch::PredefinedBwd:
		slot = &p_bwd, label = "P (backward transition)";
		break;
	case Branch::Adaptive:
		slot = &a_adt, label = "SA";
		break;
	case Branch::Dynamic:
		slot = &a_dyn, label = "D";
		break;
	case Branch::TimeDomain:
		slot = &a_time, label = "T";
		break;
	}
	if (!slot->has_value())
		throw std::invalid_argument(std::string("active graph ") + label + " missing from graph set");
	return **slot;
}

Var graph_convolution(Tape &tape, Var x, const GraphSet &graphs, const DiffusionWeights &weights, std::size_t k_hops) {
	const auto branches = active_branches(graphs.active);
	if (branches.empty())
		throw std::invalid_argument("graph_convolution: no active graph");
	for (Branch b : branches) {
		graphs.get(b);
		if (weights.hops[static_cast<std::size_t>(b)].size() != k_hops + 1)
			throw std::invalid_argument("graph_convolution: branch " + branch_name(b) + " needs " +
			                            std::to_string(k_hops + 1) + " hop weights");
	}
	// A^0 = I for every branch, so the k = 0 maps act on X through their sum.
	Var w0 = weights.hops[static_cast<std::size_t>(branches.front())][0];
	for (std::size_t i = 1; i < branches.size(); ++i)
		w0 = ad::add(tape, w0, weights.hops[static_cast<std::size_t>(branches[i])][0]);
	Var z = ad::conv1x1(tape, x, w0, weights.bias);
	for (Branch b : branches) {
		const Var a = graphs.get(b);
		const auto &hw = weights.hops[static_cast<std::size_t>(b)];
		Var propagated = x;
		for (std::size_t k = 1; k <= k_hops; ++k) {
			propagated = ad::node_mix(tape, a, propagated);
			z = ad::add(tape, z, ad::conv1x1(tape, propagated, hw[k], Var{}));
		}
	}
	return z;
}

TcnOutput gated_tcn_layer(Tape &tape, Var x, const TcnLayerVars &layer, std::size_t dilation) {
	const Tensor &xv = tape.value(x);
	if (xv.rank() != 3)
		throw std::invalid_argument("gated_tcn_layer: expected [C, N, T], got " + shape_string(xv.shape()));
	const std::size_t t = xv.dim(2);
	const std::size_t rf = dilation * (ModelConfig::kernel_size - 1) + 1;
	if (t < rf)
		throw std::invalid_argument("gated_tcn_layer: window of length " + std::to_string(t) +
		                            " shorter than receptive field " + std::to_string(rf) + " at dilation " +
		                            std::to_string(dilation));
	TcnOutput out;
	Var filter = ad::tanh(tape, ad::dilated_causal_conv(tape, x, layer.filter_w, layer.filter_b, dilation));
	Var gate = ad::sigmoid(tape, ad::dilated_causal_conv(tape, x, layer.gate_w, layer.gate_b, dilation));
	out.gated = ad::mul(tape, filter, gate);
	const std::size_t t_out = tape.value(out.gated).dim(2);
	out.residual = ad::crop_last(tape, x, t_out);
	out.output = ad::add(tape, out.gated, out.residual);
	out.skip = ad::conv1x1(tape, ad::crop_last(tape, out.gated, 1), layer.skip_w, layer.skip_b);
	return out;
}

// ---------------------------------------------------------------------------
// DfdgcnModel

DfdgcnModel::DfdgcnModel(ModelConfig config, std::optional<PredefinedGraphs> predefined)
    : config_(std::move(config)), predefined_(std::move(predefined)) {
	config_.validate();
	if (config_.graph_mode.predefined) {
		if (!predefined_)
			throw std::invalid_argument("predefined graph requires distances");
		if (predefined_->p_fwd.shape() != Shape{config_.n_nodes, config_.n_nodes} ||
		    predefined_->p_bwd.shape() != Shape{config_.n_nodes, config_.n_nodes})
			throw std::invalid_argument("predefined graph shape " + shape_string(predefined_->p_fwd.shape()) +
			                            " does not match " + std::to_string(config_.n_nodes) + " nodes");
	}
	init_parameters();
}

namespace {

Tensor uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64 &rng) {
	const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
	std::uniform_real_distribution<double> dist(-bound, bound);
	Tensor t(std::move(shape));
	for (auto &v : t.data())
		v = dist(rng);
	return t;
}

Tensor normal_tensor(Shape shape, double scale, std::mt19937_64 &rng) {
	std::normal_distribution<double> dist(0.0, 1.0);
	Tensor t(std::move(shape));
	for (auto &v : t.data())
		v = scale * dist(rng);
	return t;
}

} // namespace

DfdgcnModel::LearnerSlots DfdgcnModel::add_learner(const std::string &prefix, std::size_t features) {
	std::uint64_t salt = 1469598103934665603ULL;
	for (char ch : prefix)
		salt = (salt ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
	std::mt19937_64 rng(config_.seed ^ salt);
	const auto &c = config_;
	const std::size_t de_width = c.series_dim + c.id_dim + 2 * c.time_dim;
	LearnerSlots s{};
	s.w_map = params_.add(prefix + ".w_map", uniform_tensor({features, c.series_dim}, features, rng));
	s.e_id = params_.add(prefix + ".e_id", normal_tensor({c.n_nodes, c.id_dim}, 0.1, rng));
	s.e_dow = params_.add(prefix + ".e_dow", uniform_tensor({kDaysPerWeek, c.time_dim}, kDaysPerWeek, rng));
	s.e_tod = params_.add(prefix + ".e_tod", uniform_tensor({c.tod_slots, c.time_dim}, c.tod_slots, rng));
	s.w_conv = params_.add(prefix + ".w_conv", uniform_tensor({c.graph_embed_dim, de_width}, de_width, rng));
	s.b_conv = params_.add(prefix + ".b_conv", uniform_tensor({c.graph_embed_dim}, de_width, rng));
	s.w_adj = params_.add(prefix + ".w_adj",
	                      uniform_tensor({c.graph_embed_dim, c.graph_embed_dim}, c.graph_embed_dim, rng));
	return s;
}

void DfdgcnModel::init_parameters() {
	const auto &c = config_;
	std::mt19937_64 rng(c.seed);
	const std::size_t res = c.residual_channels;

	start_w_ = params_.add("start.w", uniform_tensor({res, c.in_channels}, c.in_channels, rng));
	start_b_ = params_.add("start.b", uniform_tensor({res}, c.in_channels, rng));
	if (c.graph_mode.adaptive) {
		e1_ = params_.add("adaptive.e1", normal_tensor({c.n_nodes, c.adaptive_dim}, 0.1, rng));
		e2_ = params_.add("adaptive.e2", normal_tensor({c.n_nodes, c.adaptive_dim}, 0.1, rng));
	}
	if (c.graph_mode.dynamic)
		dyn_ = add_learner("dgraph", spectrum_feature_count(c.freq_mode, c.t_in));
	if (c.graph_mode.time_domain)
		time_ = add_learner("tgraph", c.t_in);

	const auto branches = active_branches(c.graph_mode);
	const std::size_t gconv_fan_in = branches.size() * (c.k_hops + 1) * res;
	for (std::size_t l = 0; l < c.n_layers(); ++l) {
		const std::string p = "layer" + std::to_string(l) + ".";
		LayerSlots s;
		const std::size_t conv_fan_in = res * ModelConfig::kernel_size;
		s.filter_w = params_.add(p + "filter.w", uniform_tensor({res, res, ModelConfig::kernel_size}, conv_fan_in, rng));
		s.filter_b = params_.add(p + "filter.b", uniform_tensor({res}, conv_fan_in, rng));
		s.gate_w = params_.add(p + "gate.w", uniform_tensor({res, res, ModelConfig::kernel_size}, conv_fan_in, rng));
		s.gate_b = params_.add(p + "gate.b", uniform_tensor({res}, conv_fan_in, rng));
		s.skip_w = params_.add(p + "skip.w", uniform_tensor({c.skip_channels, res}, res, rng));
		s.skip_b = params_.add(p + "skip.b", uniform_tensor({c.skip_channels}, res, rng));
		for (Branch b : branches)
			for (std::size_t k = 0; k <= c.k_hops; ++k)
				s.hops[static_cast<std::size_t>(b)].push_back(
				    params_.add(p + "gconv." + branch_name(b) + ".hop" + std::to_string(k),
				                uniform_tensor({res, res}, gconv_fan_in, rng)));
		s.gconv_b = params_.add(p + "gconv.b", uniform_tensor({res}, gconv_fan_in, rng));
		layers_.push_back(std::move(s));
	}
	end1_w_ = params_.add("end1.w", uniform_tensor({c.end_channels, c.skip_channels}, c.skip_channels, rng));
	end1_b_ = params_.add("end1.b", uniform_tensor({c.end_channels}, c.skip_channels, rng));
	end2_w_ = params_.add("end2.w", uniform_tensor({c.t_out, c.end_channels}, c.end_channels, rng));
	end2_b_ = params_.add("end2.b", uniform_tensor({c.t_out}, c.end_channels, rng));
}

GraphLearnerVars DfdgcnModel::learner_vars(const std::vector<Var> &bound, const LearnerSlots &s) {
	return {bound[s.w_map], bound[s.e_id], bound[s.e_dow], bound[s.e_tod], bound[s.w_conv], bound[s.b_conv],
	        bound[s.w_adj]};
}

GraphLearnerVars DfdgcnModel::learner_vars(const std::vector<Var> &bound, const std::string &prefix) const {
	if (prefix == "dgraph" && dyn_)
		return learner_vars(bound, *dyn_);
	if (prefix == "tgraph" && time_)
		return learner_vars(bound, *time_);
	throw std::out_of_range("model has no graph learner '" + prefix + "'");
}

GraphLearnerParams DfdgcnModel::learner_params(const std::string &prefix) const {
	const auto &p = params_;
	return {p.array(p.slot(prefix + ".w_map")), p.array(p.slot(prefix + ".e_id")),
	        p.array(p.slot(prefix + ".e_dow")), p.array(p.slot(prefix + ".e_tod")),
	        p.array(p.slot(prefix + ".w_conv")), p.array(p.slot(prefix + ".b_conv")),
	        p.array(p.slot(prefix + ".w_adj"))};
}

GraphSet DfdgcnModel::build_graphs(Tape &tape, const std::vector<Var> &bound, const Tensor &graph_window,
                                   std::size_t tod, std::size_t dow) const {
	GraphSet g;
	g.active = config_.graph_mode;
	if (config_.graph_mode.predefined) {
		g.p_fwd = tape.constant(predefined_->p_fwd);
		g.p_bwd = tape.constant(predefined_->p_bwd);
	}
	if (config_.graph_mode.adaptive)
		g.a_adt = adaptive_graph(tape, bound[e1_], bound[e2_]);
	if (config_.graph_mode.dynamic)
		g.a_dyn = frequency_graph(tape, graph_window, tod, dow, learner_vars(bound, *dyn_), config_.freq_mode);
	if (config_.graph_mode.time_domain)
		g.a_time = time_domain_graph(tape, graph_window, tod, dow, learner_vars(bound, *time_));
	return g;
}

Var DfdgcnModel::forward(Tape &tape, const std::vector<Var> &bound, const Tensor &window, std::size_t tod,
                         std::size_t dow, const Tensor *graph_window) const {
	const auto &c = config_;
	if (bound.size() != params_.count())
		throw std::invalid_argument("forward: " + std::to_string(bound.size()) + " bound parameters for a model with " +
		                            std::to_string(params_.count()));
	const Shape expected{c.n_nodes, c.in_channels, c.t_in};
	if (window.shape() != expected)
		throw std::invalid_argument("forward: window shape " + shape_string(window.shape()) + ", expected " +
		                            shape_string(expected));

	// [N, C, T] -> [C, N, T]
	Tensor x({c.in_channels, c.n_nodes, c.t_in});
	for (std::size_t n = 0; n < c.n_nodes; ++n)
		for (std::size_t ch = 0; ch < c.in_channels; ++ch)
			for (std::size_t t = 0; t < c.t_in; ++t)
				x.at(ch, n, t) = window.at(n, ch, t);
	Var h = tape.constant(std::move(x));
	if (c.receptive_field() > c.t_in)
		h = ad::pad_left(tape, h, c.receptive_field());
	h = ad::conv1x1(tape, h, bound[start_w_], bound[start_b_]);

	const GraphSet graphs = build_graphs(tape, bound, graph_window ? *graph_window : window, tod, dow);

	Var skip;
	for (std::size_t l = 0; l < c.n_layers(); ++l) {
		const LayerSlots &s = layers_[l];
		const TcnOutput tcn = gated_tcn_layer(
		    tape, h, {bound[s.filter_w], bound[s.filter_b], bound[s.gate_w], bound[s.gate_b], bound[s.skip_w], bound[s.skip_b]},
		    c.dilations[l]);
		skip = skip.valid() ? ad::add(tape, skip, tcn.skip) : tcn.skip;
		DiffusionWeights w;
		for (std::size_t b = 0; b < kBranchCount; ++b)
			for (std::size_t slot : s.hops[b])
				w.hops[b].push_back(bound[slot]);
		w.bias = bound[s.gconv_b];
		h = ad::add(tape, graph_convolution(tape, tcn.gated, graphs, w, c.k_hops), tcn.residual);
	}

	Var out = ad::relu(tape, skip);
	out = ad::relu(tape, ad::conv1x1(tape, out, bound[end1_w_], bound[end1_b_]));
	out = ad::conv1x1(tape, out, bound[end2_w_], bound[end2_b_]); // [t_out, N, 1]
	out = ad::reshape(tape, out, {c.t_out, c.n_nodes});
	return ad::transpose(tape, out); // [N, t_out]
}

Tensor DfdgcnModel::predict(const Tensor &window, std::size_t tod, std::size_t dow, const Tensor *graph_window) const {
	Tape tape;
	std::vector<Var> bound;
	bound.reserve(params_.count());
	for (const auto &a : params_.arrays())
		bound.push_back(tape.reference(a));
	return tape.value(forward(tape, bound, window, tod, dow, graph_window));
}

} // namespace dfdgcn
