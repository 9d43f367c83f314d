#include "dfdgcn/kernels.hpp"
#include "dfdgcn/model.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace dfdgcn;
using dfdgcn::testing::GconvInstance;
using dfdgcn::testing::oracle_gconv;
using dfdgcn::testing::random_instance;
using dfdgcn::testing::run_gconv;
using dfdgcn::testing::random_stochastic;
using dfdgcn::testing::random_tensor;
using dfdgcn::testing::small_model;

namespace {

Tensor zero_bias_xw(const Tensor &x, const Tensor &w) {
	Tensor y({w.dim(0), x.dim(1), x.dim(2)});
	for (std::size_t o = 0; o < w.dim(0); ++o)
		for (std::size_t i = 0; i < x.dim(1); ++i)
			for (std::size_t s = 0; s < x.dim(2); ++s)
				for (std::size_t c = 0; c < x.dim(0); ++c)
					y.at(o, i, s) += w.at(o, c) * x.at(c, i, s);
	return y;
}

std::vector<DistanceEdge> ring_distances(std::size_t n) {
	std::vector<DistanceEdge> edges;
	for (std::size_t i = 0; i < n; ++i) {
		edges.push_back({i, (i + 1) % n, 100.0 + 37.0 * static_cast<double>(i)});
		edges.push_back({(i + 2) % n, i, 250.0 + 11.0 * static_cast<double>(i)});
	}
	return edges;
}

} // namespace

// ---------------------------------------------------------------------------
// Graph convolution

TEST(GraphConvolution, ZeroHopsIgnoresAdjacency) {
	std::mt19937_64 rng(1);
	auto g = random_instance(rng, 5, 0, GraphMode::parse("SA"));
	g.bias.fill(0.0);
	const Tensor expected = zero_bias_xw(g.x, g.hops[static_cast<std::size_t>(Branch::Adaptive)][0]);
	EXPECT_LT(max_abs_diff(run_gconv(g, 0), expected), 1e-14);
	g.graphs[static_cast<std::size_t>(Branch::Adaptive)] = random_stochastic(5, rng);
	EXPECT_LT(max_abs_diff(run_gconv(g, 0), expected), 1e-14);
}

TEST(GraphConvolution, IdentityAdjacencySumsHopWeights) {
	std::mt19937_64 rng(2);
	auto g = random_instance(rng, 4, 1, GraphMode::parse("D"));
	const auto d = static_cast<std::size_t>(Branch::Dynamic);
	Tensor eye({4, 4});
	for (std::size_t i = 0; i < 4; ++i)
		eye.at(i, i) = 1.0;
	g.graphs[d] = eye;
	g.bias.fill(0.0);
	const Tensor expected = zero_bias_xw(g.x, kernels::add(g.hops[d][0], g.hops[d][1]));
	EXPECT_LT(max_abs_diff(run_gconv(g, 1), expected), 1e-14);
}

TEST(GraphConvolution, MatchesExplicitLoopOracle) {
	std::mt19937_64 rng(3);
	const auto g = random_instance(rng, 4, 2, GraphMode::parse("D"));
	EXPECT_LT(max_abs_diff(run_gconv(g, 2), oracle_gconv(g, 2)), 1e-12);
}

TEST(GraphConvolution, MissingGraphIsNamed) {
	std::mt19937_64 rng(4);
	auto g = random_instance(rng, 3, 1, GraphMode::parse("D+SA"));
	g.graphs[static_cast<std::size_t>(Branch::Dynamic)].reset();
	try {
		run_gconv(g, 1);
		FAIL() << "expected an error";
	} catch (const std::invalid_argument &e) {
		EXPECT_NE(std::string(e.what()).find("D"), std::string::npos) << e.what();
	}
}

TEST(GraphConvolutionProperty, RandomInstancesMatchOracle) {
	std::mt19937_64 rng(5);
	std::uniform_int_distribution<std::size_t> n_dist(1, 6), k_dist(0, 3), mode_dist(0, 7);
	const auto grid = ablation_grid();
	double worst = 0.0;
	for (int trial = 0; trial < 200; ++trial) {
		const std::size_t n = n_dist(rng), k = k_dist(rng);
		const auto g = random_instance(rng, n, k, grid[mode_dist(rng)]);
		worst = std::max(worst, max_abs_diff(run_gconv(g, k), oracle_gconv(g, k)));
	}
	EXPECT_LT(worst, 1e-10);
}

// ---------------------------------------------------------------------------
// Gated temporal layer

namespace {

struct TcnParams {
	Tensor fw, fb, gw, gb, sw, sb;
};

TcnParams random_tcn(std::mt19937_64 &rng, std::size_t c, std::size_t skip) {
	return {random_tensor({c, c, 2}, rng), random_tensor({c}, rng), random_tensor({c, c, 2}, rng),
	        random_tensor({c}, rng),       random_tensor({skip, c}, rng), random_tensor({skip}, rng)};
}

TcnOutput run_tcn(Tape &tape, const Tensor &x, const TcnParams &p, std::size_t d) {
	const TcnLayerVars v{tape.constant(p.fw), tape.constant(p.fb), tape.constant(p.gw),
	                     tape.constant(p.gb), tape.constant(p.sw), tape.constant(p.sb)};
	return gated_tcn_layer(tape, tape.constant(x), v, d);
}

} // namespace

TEST(GatedTcn, OutputLength) {
	std::mt19937_64 rng(6);
	const auto p = random_tcn(rng, 3, 5);
	Tape tape;
	const auto out = run_tcn(tape, random_tensor({3, 4, 12}, rng), p, 1);
	EXPECT_EQ(tape.value(out.output).shape(), (Shape{3, 4, 11}));
	EXPECT_EQ(tape.value(out.skip).shape(), (Shape{5, 4, 1}));
}

TEST(GatedTcn, ClosedGateLeavesResidual) {
	std::mt19937_64 rng(7);
	auto p = random_tcn(rng, 3, 2);
	p.gb.fill(-40.0);
	const Tensor x = random_tensor({3, 2, 12}, rng);
	Tape tape;
	const auto out = run_tcn(tape, x, p, 2);
	EXPECT_LT(max_abs_diff(tape.value(out.output), kernels::crop_last(x, 10)), 1e-6);
}

TEST(GatedTcn, MatchesPerTimestepLoop) {
	std::mt19937_64 rng(8);
	const std::size_t c = 3, n = 2, t = 12, d = 2;
	const auto p = random_tcn(rng, c, 4);
	const Tensor x = random_tensor({c, n, t}, rng);
	Tape tape;
	const auto out = run_tcn(tape, x, p, d);
	const Tensor &y = tape.value(out.output);
	const Tensor &skip = tape.value(out.skip);
	const std::size_t t_out = t - d;
	std::vector<double> gated_last(c * n);
	for (std::size_t o = 0; o < c; ++o)
		for (std::size_t i = 0; i < n; ++i)
			for (std::size_t s = 0; s < t_out; ++s) {
				double f = p.fb[o], g = p.gb[o];
				for (std::size_t ci = 0; ci < c; ++ci)
					for (std::size_t j = 0; j < 2; ++j) {
						f += p.fw.at(o, ci, j) * x.at(ci, i, s + j * d);
						g += p.gw.at(o, ci, j) * x.at(ci, i, s + j * d);
					}
				const double h = std::tanh(f) / (1.0 + std::exp(-g));
				EXPECT_NEAR(y.at(o, i, s), h + x.at(o, i, s + d), 1e-12);
				if (s + 1 == t_out)
					gated_last[o * n + i] = h;
			}
	for (std::size_t k = 0; k < 4; ++k)
		for (std::size_t i = 0; i < n; ++i) {
			double s = p.sb[k];
			for (std::size_t o = 0; o < c; ++o)
				s += p.sw.at(k, o) * gated_last[o * n + i];
			EXPECT_NEAR(skip.at(k, i, 0), s, 1e-12);
		}
}

TEST(GatedTcn, ShortWindowThrows) {
	std::mt19937_64 rng(9);
	const auto p = random_tcn(rng, 2, 2);
	Tape tape;
	EXPECT_THROW(run_tcn(tape, random_tensor({2, 1, 4}, rng), p, 4), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Configuration and parameters

TEST(ModelConfig, Validation) {
	ModelConfig c = small_model(4, "D");
	EXPECT_NO_THROW(c.validate());
	c.dilations = {1, 2};
	EXPECT_THROW(c.validate(), ConfigError);
	c = small_model(4, "D");
	c.graph_mode = GraphMode{};
	EXPECT_THROW(c.validate(), ConfigError);
	c = small_model(0, "D");
	EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, DefaultBackbone) {
	const ModelConfig c;
	EXPECT_EQ(c.dilations, (std::vector<std::size_t>{1, 2, 1, 2, 1, 2, 1, 2}));
	EXPECT_EQ(c.k_hops, 2u);
	EXPECT_EQ(c.residual_channels, 32u);
	EXPECT_EQ(c.skip_channels, 256u);
	EXPECT_EQ(c.receptive_field(), 13u);
	// Graph learner chain 10 + 10 + 24 -> 44 -> 30.
	EXPECT_EQ(c.series_dim + c.id_dim + 2 * c.time_dim, 44u);
	EXPECT_EQ(c.graph_embed_dim, 30u);
}

TEST(ModelConfig, TextRoundTrip) {
	ModelConfig c = small_model(7, "D+P+SA");
	c.freq_mode = FreqMode::Magnitude;
	c.kappa = 0.25;
	ConfigText t;
	c.write(t);
	const ModelConfig back = ModelConfig::read(ConfigText::parse(t.canonical()));
	ConfigText t2;
	back.write(t2);
	EXPECT_EQ(t.canonical(), t2.canonical());
	t.set("model", "bogus", "1");
	EXPECT_THROW(ModelConfig::read(t), ConfigError);
}

TEST(Model, PredefinedRequiresDistances) {
	try {
		DfdgcnModel model(small_model(4, "P"));
		FAIL() << "expected an error";
	} catch (const std::invalid_argument &e) {
		EXPECT_STREQ(e.what(), "predefined graph requires distances");
	}
}

TEST(Model, FlatIndexCoversEveryArrayOnce) {
	const auto cfg = small_model(4, "D+T+P+SA");
	DfdgcnModel model(cfg, build_predefined(ring_distances(4), 4, 0.1));
	const auto &p = model.params();
	std::set<std::string> names(p.names().begin(), p.names().end());
	EXPECT_EQ(names.size(), p.count());
	std::size_t total = 0;
	for (const auto &a : p.arrays())
		total += a.size();
	EXPECT_EQ(p.scalar_count(), total);

	std::vector<std::size_t> hits(p.count(), 0);
	for (std::size_t f = 0; f < p.scalar_count(); ++f) {
		const auto [slot, offset] = p.locate(f);
		ASSERT_LT(offset, p.array(slot).size());
		if (offset == 0)
			++hits[slot];
		EXPECT_EQ(p.flat_value(f), p.array(slot)[offset]);
	}
	EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](std::size_t h) { return h == 1; }));
	EXPECT_TRUE(p.contains("dgraph.w_adj"));
	EXPECT_TRUE(p.contains("tgraph.w_adj"));
	EXPECT_TRUE(p.contains("layer0.gconv.pf.hop2"));
	EXPECT_TRUE(p.contains("layer3.gconv.t.hop0"));
	EXPECT_EQ(p.array(p.slot("dgraph.w_map")).shape(), (Shape{14, 10}));
	EXPECT_EQ(p.array(p.slot("tgraph.w_map")).shape(), (Shape{12, 10}));
	EXPECT_EQ(p.array(p.slot("dgraph.w_conv")).shape(), (Shape{30, 44}));
	EXPECT_EQ(p.array(p.slot("dgraph.e_tod")).shape(), (Shape{288, 12}));
}

TEST(Model, InitializationIsBoundedBySeed) {
	const auto cfg = small_model(4, "D+SA");
	DfdgcnModel a(cfg), b(cfg);
	EXPECT_EQ(a.params(), b.params());
	const auto &w = a.params().array(a.params().slot("dgraph.w_conv"));
	const double bound = 1.0 / std::sqrt(44.0);
	for (double v : w.values())
		EXPECT_LE(std::abs(v), bound);
	auto other = cfg;
	other.seed = cfg.seed + 1;
	EXPECT_FALSE(DfdgcnModel(other).params() == a.params());
}

// ---------------------------------------------------------------------------
// Forward pass

TEST(Forward, OutputShapeForEveryMode) {
	std::mt19937_64 rng(10);
	for (const auto &mode : ablation_grid()) {
		auto cfg = small_model(5, mode.label());
		cfg.in_channels = 2;
		DfdgcnModel model(cfg, build_predefined(ring_distances(5), 5, 0.1));
		const Tensor y = model.predict(random_tensor({5, 2, 12}, rng), 77, 3);
		EXPECT_EQ(y.shape(), (Shape{5, 12})) << mode.label();
	}
	// Default widths and dilations.
	ModelConfig full;
	full.n_nodes = 3;
	DfdgcnModel model(full, build_predefined(ring_distances(3), 3, 0.1));
	EXPECT_EQ(model.predict(random_tensor({3, 1, 12}, rng), 0, 0).shape(), (Shape{3, 12}));
}

TEST(Forward, ZeroInputAndBiasesGiveZero) {
	DfdgcnModel model(small_model(4, "D+T+SA"));
	auto &p = model.params();
	for (std::size_t s = 0; s < p.count(); ++s) {
		const std::string &name = p.name(s);
		if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0)
			p.array(s).fill(0.0);
	}
	const Tensor y = model.predict(Tensor({4, 1, 12}), 5, 5);
	for (double v : y.values())
		EXPECT_EQ(v, 0.0);
}

TEST(Forward, DeterministicAcrossRuns) {
	std::mt19937_64 rng(11);
	const Tensor window = random_tensor({4, 1, 12}, rng);
	const auto cfg = small_model(4, "D+P+SA");
	const auto pre = build_predefined(ring_distances(4), 4, 0.1);
	const Tensor a = DfdgcnModel(cfg, pre).predict(window, 10, 2);
	const Tensor b = DfdgcnModel(cfg, pre).predict(window, 10, 2);
	EXPECT_EQ(a, b);
}

TEST(Forward, RejectsWrongWindowShape) {
	DfdgcnModel model(small_model(4, "D"));
	EXPECT_THROW(model.predict(Tensor({4, 1, 11}), 0, 0), std::invalid_argument);
	EXPECT_THROW(model.predict(Tensor({5, 1, 12}), 0, 0), std::invalid_argument);
}

TEST(Forward, EveryInputStepReachesThePrediction) {
	std::mt19937_64 rng(12);
	DfdgcnModel model(small_model(4, "D+SA"));
	const Tensor window = random_tensor({4, 1, 12}, rng);
	const Tensor base = model.predict(window, 10, 2);
	for (std::size_t t : {0u, 5u, 11u}) {
		Tensor w = window;
		w.at(2, 0, t) += 0.5;
		EXPECT_GT(max_abs_diff(model.predict(w, 10, 2), base), 1e-9) << "step " << t;
	}
}

TEST(Forward, TemporalStackConsumesTheWholeWindow) {
	// The layers shrink the padded window one dilation at a time and the skip
	// head reads the final position only, so no index runs past step 11.
	const auto cfg = small_model(3, "SA");
	std::size_t length = std::max(cfg.receptive_field(), cfg.t_in);
	for (std::size_t d : cfg.dilations) {
		ASSERT_GE(length, d + 1);
		length -= d;
	}
	EXPECT_EQ(length, 1u);
}

TEST(ForwardProperty, NodePermutationEquivariance) {
	std::mt19937_64 rng(13);
	const std::size_t n = 5;
	const std::vector<std::size_t> perm{3, 0, 4, 1, 2}; // node i -> perm[i]
	const auto edges = ring_distances(n);
	std::vector<DistanceEdge> permuted_edges;
	for (const auto &e : edges)
		permuted_edges.push_back({perm[e.from], perm[e.to], e.distance});

	const auto cfg = small_model(n, "D+T+P+SA");
	DfdgcnModel a(cfg, build_predefined(edges, n, 0.0));
	DfdgcnModel b(cfg, build_predefined(permuted_edges, n, 0.0));
	for (std::size_t s = 0; s < a.params().count(); ++s) {
		const std::string &name = a.params().name(s);
		const Tensor &src = a.params().array(s);
		Tensor &dst = b.params().array(s);
		const bool node_rows = name == "adaptive.e1" || name == "adaptive.e2" || name == "dgraph.e_id" ||
		                       name == "tgraph.e_id";
		if (!node_rows) {
			dst = src;
			continue;
		}
		const std::size_t d = src.dim(1);
		for (std::size_t i = 0; i < n; ++i)
			for (std::size_t k = 0; k < d; ++k)
				dst.at(perm[i], k) = src.at(i, k);
	}
	const Tensor window = random_tensor({n, 1, 12}, rng, -2, 2);
	Tensor permuted({n, 1, 12});
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t t = 0; t < 12; ++t)
			permuted.at(perm[i], 0, t) = window.at(i, 0, t);

	const Tensor ya = a.predict(window, 40, 1);
	const Tensor yb = b.predict(permuted, 40, 1);
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t h = 0; h < 12; ++h)
			EXPECT_NEAR(yb.at(perm[i], h), ya.at(i, h), 1e-12);
}

TEST(ForwardProperty, EveryParameterReceivesGradient) {
	std::mt19937_64 rng(14);
	const std::size_t n = 4;
	const auto cfg = small_model(n, "D+T+P+SA");
	DfdgcnModel model(cfg, build_predefined(ring_distances(n), n, 0.0));
	const auto &p = model.params();
	std::vector<bool> touched(p.count(), false);
	for (int sample = 0; sample < 4; ++sample) {
		Tape tape;
		const auto bound = p.bind(tape);
		const Tensor window = random_tensor({n, 1, 12}, rng, -2, 2);
		Var pred = model.forward(tape, bound, window, 60 * static_cast<std::size_t>(sample), sample);
		const Tensor target = random_tensor({n, 12}, rng, 1, 3);
		tape.backward(ad::masked_abs_sum(tape, pred, target, 1.0));
		for (std::size_t s = 0; s < p.count(); ++s) {
			const Tensor g = tape.grad(bound[s]);
			if (std::any_of(g.values().begin(), g.values().end(), [](double v) { return v != 0.0; }))
				touched[s] = true;
		}
	}
	// The last layer's graph convolution only feeds a residual that no later
	// layer consumes.
	const std::string dead = "layer" + std::to_string(cfg.dilations.size() - 1) + ".gconv.";
	for (std::size_t s = 0; s < p.count(); ++s)
		EXPECT_EQ(touched[s], p.name(s).rfind(dead, 0) != 0) << p.name(s);
}
