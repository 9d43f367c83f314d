#pragma once

#include "dfdgcn/autodiff.hpp"
#include "dfdgcn/data.hpp"
#include "dfdgcn/model.hpp"
#include "dfdgcn/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace dfdgcn::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
	std::uniform_real_distribution<double> dist(lo, hi);
	Tensor t(std::move(shape));
	for (auto &v : t.data())
		v = dist(rng);
	return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
	std::uniform_real_distribution<double> dist(lo, hi);
	std::vector<double> out(n);
	for (auto &v : out)
		v = dist(rng);
	return out;
}

/// Random row-stochastic n x n matrix with strictly positive entries.
inline Tensor random_stochastic(std::size_t n, std::mt19937_64 &rng) {
	Tensor a = random_tensor({n, n}, rng, 0.05, 1.0);
	for (std::size_t i = 0; i < n; ++i) {
		double s = 0.0;
		for (std::size_t j = 0; j < n; ++j)
			s += a.at(i, j);
		for (std::size_t j = 0; j < n; ++j)
			a.at(i, j) /= s;
	}
	return a;
}

/// Textbook full DFT evaluated with std::polar, independent of the library.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double> &x) {
	const std::size_t n = x.size();
	std::vector<std::complex<double>> out(n);
	for (std::size_t k = 0; k < n; ++k)
		for (std::size_t t = 0; t < n; ++t)
			out[k] += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
	return out;
}

/// Plain triple loop C = A B.
inline Tensor naive_matmul(const Tensor &a, const Tensor &b) {
	const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
	Tensor c({m, n});
	for (std::size_t i = 0; i < m; ++i)
		for (std::size_t j = 0; j < n; ++j) {
			double s = 0.0;
			for (std::size_t p = 0; p < k; ++p)
				s += a.at(i, p) * b.at(p, j);
			c.at(i, j) = s;
		}
	return c;
}

/// Loss = sum(weights * f(inputs)). Returns the worst relative error between
/// reverse-mode and central-difference gradients over every input scalar.
inline double kernel_gradient_error(std::vector<Tensor> inputs,
                                    const std::function<Var(Tape &, const std::vector<Var> &)> &f,
                                    std::uint64_t seed = 5, double eps = 1e-6) {
	std::mt19937_64 rng(seed);
	Tensor weights;
	auto loss_of = [&](const std::vector<Tensor> &in, std::vector<Tensor> *grads) {
		Tape tape;
		std::vector<Var> vars;
		for (const auto &t : in)
			vars.push_back(tape.input(t));
		Var out = f(tape, vars);
		if (weights.empty())
			weights = random_tensor(tape.value(out).shape(), rng);
		Var loss = ad::sum(tape, ad::mul(tape, out, tape.constant(weights)));
		if (grads) {
			tape.backward(loss);
			for (Var v : vars)
				grads->push_back(tape.grad(v));
		}
		return tape.value(loss).item();
	};
	std::vector<Tensor> analytic;
	loss_of(inputs, &analytic);
	double worst = 0.0;
	for (std::size_t a = 0; a < inputs.size(); ++a)
		for (std::size_t i = 0; i < inputs[a].size(); ++i) {
			const double keep = inputs[a][i];
			inputs[a][i] = keep + eps;
			const double up = loss_of(inputs, nullptr);
			inputs[a][i] = keep - eps;
			const double down = loss_of(inputs, nullptr);
			inputs[a][i] = keep;
			const double numeric = (up - down) / (2 * eps);
			const double g = analytic[a][i];
			const double denom = std::max({std::abs(g), std::abs(numeric), 1e-3});
			worst = std::max(worst, std::abs(g - numeric) / denom);
		}
	return worst;
}

/// Random graph-convolution problem: one row-stochastic adjacency and K+1
/// weight maps per active branch.
struct GconvInstance {
	Tensor x; // [C, N, T]
	std::array<std::optional<Tensor>, kBranchCount> graphs;
	std::array<std::vector<Tensor>, kBranchCount> hops;
	Tensor bias;
	GraphMode mode;
};

inline GconvInstance random_instance(std::mt19937_64 &rng, std::size_t n, std::size_t k_hops, const GraphMode &mode,
                              std::size_t c_in = 3, std::size_t c_out = 2, std::size_t t = 4) {
	GconvInstance g;
	g.mode = mode;
	g.x = random_tensor({c_in, n, t}, rng);
	g.bias = random_tensor({c_out}, rng);
	for (Branch b : active_branches(mode)) {
		const auto i = static_cast<std::size_t>(b);
		g.graphs[i] = random_stochastic(n, rng);
		for (std::size_t k = 0; k <= k_hops; ++k)
			g.hops[i].push_back(random_tensor({c_out, c_in}, rng));
	}
	return g;
}

inline Tensor run_gconv(const GconvInstance &g, std::size_t k_hops) {
	Tape tape;
	GraphSet set;
	set.active = g.mode;
	std::array<std::optional<Var> *, kBranchCount> slots{&set.p_fwd, &set.p_bwd, &set.a_adt, &set.a_dyn, &set.a_time};
	DiffusionWeights w;
	for (std::size_t b = 0; b < kBranchCount; ++b) {
		if (g.graphs[b])
			*slots[b] = tape.constant(*g.graphs[b]);
		for (const auto &h : g.hops[b])
			w.hops[b].push_back(tape.constant(h));
	}
	w.bias = tape.constant(g.bias);
	return tape.value(graph_convolution(tape, tape.constant(g.x), set, w, k_hops));
}

/// Z[o, i, t] = b[o] + sum_branch sum_k sum_j (A^k)[i, j] sum_c W_k[o, c] x[c, j, t].
inline Tensor oracle_gconv(const GconvInstance &g, std::size_t k_hops) {
	const std::size_t c_in = g.x.dim(0), n = g.x.dim(1), t = g.x.dim(2);
	const std::size_t c_out = g.bias.size();
	Tensor z({c_out, n, t});
	for (std::size_t o = 0; o < c_out; ++o)
		for (std::size_t i = 0; i < n; ++i)
			for (std::size_t s = 0; s < t; ++s)
				z.at(o, i, s) = g.bias[o];
	for (std::size_t b = 0; b < kBranchCount; ++b) {
		if (!g.graphs[b])
			continue;
		Tensor power({n, n});
		for (std::size_t i = 0; i < n; ++i)
			power.at(i, i) = 1.0;
		for (std::size_t k = 0; k <= k_hops; ++k) {
			if (k > 0)
				power = naive_matmul(power, *g.graphs[b]);
			const Tensor &w = g.hops[b][k];
			for (std::size_t o = 0; o < c_out; ++o)
				for (std::size_t i = 0; i < n; ++i)
					for (std::size_t s = 0; s < t; ++s) {
						double acc = 0.0;
						for (std::size_t j = 0; j < n; ++j)
							for (std::size_t c = 0; c < c_in; ++c)
								acc += power.at(i, j) * w.at(o, c) * g.x.at(c, j, s);
						z.at(o, i, s) += acc;
					}
		}
	}
	return z;
}

/// Small model widths that keep every structural component.
inline ModelConfig small_model(std::size_t n_nodes, const std::string &mode, std::uint64_t seed = 3) {
	ModelConfig c;
	c.n_nodes = n_nodes;
	c.residual_channels = 4;
	c.skip_channels = 8;
	c.end_channels = 8;
	c.dilations = {1, 2, 4, 4};
	c.graph_mode = GraphMode::parse(mode);
	c.seed = seed;
	return c;
}

inline SynthConfig small_synth(std::size_t n_nodes = 4, std::size_t n_steps = 576, std::uint64_t seed = 3) {
	SynthConfig s;
	s.n_nodes = n_nodes;
	s.n_sources = 2;
	s.n_steps = n_steps;
	s.seed = seed;
	return s;
}

} // namespace dfdgcn::testing
